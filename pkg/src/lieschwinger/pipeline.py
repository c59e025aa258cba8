"""End-to-end run: build the model, sweep, evaluate the ledger and certify.

Every checked statement becomes a *claim* with a status (``pass``, ``fail``,
``skipped`` or ``info``), its worst observed margin and the first offending
location.  The run verdict is ``pass`` when no gating claim failed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import __version__
from .bounds import (
    BoundParams,
    BoundTable,
    absorption_threshold,
    check_S1,
    check_series,
    gap_prefactor,
)
from .certify import certify_final, certify_step, final_failures
from .config import RunConfig
from .engine import (
    GapCollapse,
    InvariantViolation,
    PotentialTable,
    SeriesDivergence,
    StepContext,
    SweepError,
    Tolerances,
    run_sweep,
)
from .models import build_phi4, build_spin
from .operators import ChainSpec, h0_diag, hermitian_norm, spectral_norm, weights

MARGIN_RTOL = 1e-12
GAP_TOL = 1e-6
CROSSCHECK_TOL = 1e-9
AUDIT_TOL = 1e-6
ABSORPTION_GRID = tuple(10.0 ** (-e / 4) for e in range(48, 3, -1))


def build_model(cfg: RunConfig, t: Optional[float] = None, d: Optional[int] = None
                ) -> tuple[ChainSpec, PotentialTable]:
    m = cfg.model
    t = cfg.t if t is None else t
    if m.kind == "phi4":
        return build_phi4(m.N, m.d if d is None else d, max(m.d_raw, d or 0), t)
    return build_spin(m.N, m.d, t, m.spec_file)


def tolerances_of(cfg: RunConfig) -> Tolerances:
    tol = cfg.tolerances
    return Tolerances(tol.tol_series, tol.tol_offdiag, tol.tol_psd, tol.tol_spectrum,
                      cfg.max_order)


@dataclass
class Claim:
    name: str
    gating: bool = True
    worst: float = math.inf
    checked: int = 0
    failures: int = 0
    first_failure: Optional[str] = None
    skipped: Optional[str] = None

    def observe(self, margin: float, ok: bool, where: str):
        self.checked += 1
        self.worst = min(self.worst, margin)
        if not ok:
            self.failures += 1
            if self.first_failure is None:
                self.first_failure = where

    @property
    def status(self) -> str:
        if self.skipped is not None and self.checked == 0:
            return "skipped"
        if self.failures:
            return "fail" if self.gating else "info-fail"
        return "pass" if self.gating else "info-pass"

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "gating": self.gating,
            "checked": self.checked,
            "failures": self.failures,
            "worst_margin": _finite(self.worst) if self.checked else None,
            "first_failure": self.first_failure,
            "skipped": self.skipped,
        }


CLAIMS = (
    ("step_gap", True),
    ("form_bound", True),
    ("relative_form_bound", True),
    ("resolvent_norms", True),
    ("series_majorants", True),
    ("bound_doubling", True),
    ("s1_ledger", True),
    ("s1_target", True),
    ("ledger_absorption", False),
    ("gap_prefactor", True),
    ("final_block_diagonal", True),
    ("final_gap", True),
    ("unique_ground_state", True),
    ("spectrum_preservation", True),
    ("unitary_crosscheck", True),
    ("truncation_audit", False),
)


def _finite(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _ok(margin: float, scale: float = 1.0) -> bool:
    return margin >= -MARGIN_RTOL * max(1.0, scale)


@dataclass
class RunOutcome:
    report: dict
    spectrum: Optional[np.ndarray]
    step_rows: list[dict]
    bound_rows: list[dict]
    final_table: Optional[PotentialTable] = None
    initial_table: Optional[PotentialTable] = None
    contexts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.report["verdict"] == "pass"

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 2


class _Collector:
    """Per-step observer: runs the local certificates and ledger checks."""

    def __init__(self, chain: ChainSpec, t: float, params: BoundParams, tol: Tolerances,
                 claims: dict[str, Claim], keep_contexts: bool = False):
        self.chain, self.t, self.params, self.tol = chain, t, params, tol
        self.claims = claims
        self.rows: list[dict] = []
        self.const_a = 0.0
        self.const_b = 0.0
        self.keep = keep_contexts
        self.contexts: list[StepContext] = []

    def __call__(self, ctx: StepContext):
        step, rec, prob = ctx.step, ctx.record, ctx.problem
        I = step.interval
        site, t, claims = self.chain.site, self.t, self.claims
        where = f"step ({step.k},{step.q})"
        cert = certify_step(prob.G, prob.E, I, site, t, self.params.delta)

        claims["step_gap"].observe(cert.delta - self.params.delta,
                                   cert.delta >= self.params.delta and cert.vacuum_residual <= 1e-12,
                                   where)
        claims["form_bound"].observe(cert.form_margin, cert.form_margin >= -self.tol.tol_psd, where)
        claims["relative_form_bound"].observe(cert.relative_margin,
                                              cert.relative_margin >= -self.tol.tol_psd, where)
        res_margin = min(cert.resolvent_half_bound - cert.resolvent_half,
                         cert.resolvent_full_bound - cert.resolvent_full)
        claims["resolvent_norms"].observe(res_margin, res_margin >= -1e-9, where)

        w = weights(I, site)
        root = np.sqrt(h0_diag(I, site) + 1.0)
        v_norms = [hermitian_norm(w[:, None] * term.v * w[None, :]) for term in ctx.terms]
        d_norms = [hermitian_norm(w[:, None] * term.v_diag * w[None, :]) for term in ctx.terms]
        s_norms = [float(np.linalg.norm(term.s_vector)) for term in ctx.terms]
        sw_norms = [spectral_norm(root[:, None] * term.s) for term in ctx.terms]
        series = check_series(v_norms, d_norms, s_norms, sw_norms, self.params)
        scale = max(v_norms)
        margins = [series.s_margin, series.s_weighted_margin, series.diag_margin]
        if series.v_norm > 0:
            margins.append(series.b_margin / max(1.0, series.b[-1]))
            margins.append(series.b_formula_margin / max(1.0, series.b[-1]))
        series_margin = min(margins)
        claims["series_majorants"].observe(series_margin, _ok(series_margin, scale), where)

        doubling = 2.0 * rec.v_before - rec.v_after
        claims["bound_doubling"].observe(doubling, _ok(doubling), where)

        s1 = check_S1(ctx.after, step, t)
        first = s1.violations("ledger")
        claims["s1_ledger"].observe(s1.ledger_margin, not first,
                                    f"{where}, interval {first[0].interval}" if first else where)
        first = s1.violations("target")
        claims["s1_target"].observe(s1.target_margin, not first,
                                    f"{where}, interval {first[0].interval}" if first else where)
        first = s1.violations("absorption")
        claims["ledger_absorption"].observe(s1.absorption_margin, not first,
                                            f"{where}, interval {first[0].interval}" if first else where)

        if rec.crosscheck is not None:
            claims["unitary_crosscheck"].observe(CROSSCHECK_TOL - rec.crosscheck,
                                                 rec.crosscheck <= CROSSCHECK_TOL, where)

        if t > 0 and rec.v_before > 0:
            self.const_a = max(self.const_a, rec.s_norm / (t * rec.v_before))
            self.const_b = max(self.const_b, rec.s_weighted / (t * rec.v_before))

        row = {
            "k": step.k, "q": step.q,
            "series_order_used": rec.series_order_used,
            "s_norm": rec.s_norm, "s_weighted": rec.s_weighted,
            "gap": rec.gap, "E": rec.E,
            "offdiag_residual": rec.offdiag_residual,
            "v_before": rec.v_before, "v_after": rec.v_after,
            "form_margin": cert.form_margin,
            "relative_form_margin": cert.relative_margin,
            "resolvent_half": cert.resolvent_half,
            "resolvent_full": cert.resolvent_full,
            "series_margin": series_margin,
            "s1_ledger_margin": s1.ledger_margin,
            "s1_target_margin": s1.target_margin,
            "absorption_margin": s1.absorption_margin,
            "crosscheck": rec.crosscheck,
        }
        for r in range(1, self.chain.n):
            row[f"max_norm_r{r}"] = rec.max_weighted_by_length.get(r, 0.0)
        self.rows.append(row)
        if self.keep:
            self.contexts.append(ctx)


def _audit_truncation(cfg: RunConfig, t: float, tol: Tolerances, gap: float) -> dict:
    d = cfg.model.d + 2
    chain, table = build_model(cfg, t, d)
    final, _ = run_sweep(chain, table, t, tol)
    cert = certify_final(final, chain, t)
    return {"d": d, "final_gap": cert.delta_measured,
            "deviation": abs(cert.delta_measured - gap)}


def run_pipeline(cfg: RunConfig, keep_tables: bool = False) -> RunOutcome:
    """Execute one certified run at ``cfg.t``.

    Model construction errors propagate; sweep failures produce a failing report.
    """
    if cfg.t is None:
        raise ValueError("run needs a single coupling t")
    t = float(cfg.t)
    tol = tolerances_of(cfg)
    chain, initial = build_model(cfg, t)
    params = BoundParams(t)
    claims = {name: Claim(name, gating) for name, gating in CLAIMS}
    if not cfg.debug.unitary_crosscheck:
        claims["unitary_crosscheck"].skipped = "debug cross-check disabled"
    if not (cfg.truncation_audit and cfg.model.kind == "phi4"):
        claims["truncation_audit"].skipped = "audit disabled or not applicable"

    try:
        prefactor = gap_prefactor(t)
    except ValueError:
        prefactor = -math.inf
    claims["gap_prefactor"].observe(prefactor, prefactor > 0, f"t={t}")

    collector = _Collector(chain, t, params, tol, claims, keep_tables)
    failure = None
    final = None
    try:
        final, _ = run_sweep(chain, initial, t, tol, debug=cfg.debug.unitary_crosscheck,
                             on_step=collector)
    except SweepError as exc:
        kind = {GapCollapse: "gap_collapse", SeriesDivergence: "series_divergence",
                InvariantViolation: "invariant_violation"}.get(type(exc), "step_failure")
        failure = {"kind": kind, "step": list(exc.step) if exc.step else None,
                   "message": str(exc), "completed_steps": len(exc.records)}

    cert_dict = None
    spectrum = None
    if final is not None:
        cert = certify_final(final, chain, t, initial, cfg.oracle_budget)
        spectrum = cert.spectrum
        failed = dict(final_failures(cert, tol.tol_offdiag, tol.tol_spectrum, GAP_TOL))
        claims["final_block_diagonal"].observe(tol.tol_offdiag - cert.offblock,
                                               "final_block_diagonal" not in failed, "final")
        claims["final_gap"].observe(cert.delta_measured - cert.delta_required,
                                    "final_gap" not in failed, "final")
        claims["unique_ground_state"].observe(cert.spectral_gap - cert.delta_required,
                                              "unique_ground_state" not in failed, "final")
        if cert.oracle.status == "checked":
            claims["spectrum_preservation"].observe(tol.tol_spectrum - cert.oracle_deviation,
                                                    "spectrum_preservation" not in failed, "final")
        else:
            claims["spectrum_preservation"].skipped = cert.oracle.notice
        cert_dict = {
            "delta_measured": cert.delta_measured,
            "delta_required": cert.delta_required,
            "vacuum_is_ground": cert.vacuum_is_ground,
            "vacuum_energy": cert.vacuum_energy,
            "offblock_norm": cert.offblock,
            "spectral_gap": _finite(cert.spectral_gap),
            "ground_energy": float(spectrum[0]),
            "spectrum_checksum": cert.checksum,
            "oracle": {"status": cert.oracle.status, "notice": cert.oracle.notice,
                       "max_deviation": cert.oracle_deviation},
        }
        if not claims["truncation_audit"].skipped:
            audit = _audit_truncation(cfg, t, tol, cert.delta_measured)
            claims["truncation_audit"].observe(AUDIT_TOL - audit["deviation"],
                                               audit["deviation"] <= AUDIT_TOL, f"d={audit['d']}")
            cert_dict["truncation_audit"] = audit
    else:
        for name in ("final_block_diagonal", "final_gap", "unique_ground_state",
                     "spectrum_preservation"):
            claims[name].observe(-math.inf, False, "sweep aborted")

    gating_failed = [c.name for c in claims.values() if c.status == "fail"]
    norm = chain.normalization
    report: dict[str, Any] = {
        "schema_version": 1,
        "package_version": __version__,
        "config": cfg.echo(),
        "normalization": {
            "shift": norm.shift if norm else 0.0,
            "scale": norm.scale if norm else 1.0,
            "potential_scale": norm.potential_scale if norm else 1.0,
            "onsite_energies": list(chain.site.energies),
        },
        "verdict": "fail" if gating_failed or failure else "pass",
        "failed_claims": gating_failed,
        "failure": failure,
        "claims": {name: c.as_dict() for name, c in claims.items()},
        "certificate": cert_dict,
        "constants": {"A": collector.const_a, "B": collector.const_b},
        "bounds": _bound_summary(chain.n, t, params, prefactor),
        "steps": collector.rows,
    }
    bound_rows = list(BoundTable.build(chain.n, t).rows())
    outcome = RunOutcome(_clean(report), spectrum, collector.rows, bound_rows)
    if keep_tables:
        outcome.final_table = final
        outcome.initial_table = initial
        outcome.contexts = collector.contexts
    return outcome


def _bound_summary(n: int, t: float, params: BoundParams, prefactor: float) -> dict:
    a = params.a
    table = BoundTable.build(n, t)
    return {
        "delta": params.delta,
        "c": params.c,
        "a": a,
        "radius_a_over_4": a / 4.0,
        "gap_prefactor": prefactor,
        "worst_absorption_margin": table.worst_absorption(),
        "absorption_threshold_all_lengths": absorption_threshold(n, ABSORPTION_GRID, 1),
        "absorption_threshold_lengths_ge_2": absorption_threshold(n, ABSORPTION_GRID, 2),
    }


def bound_summary(n: int, t: float, delta: float = 0.5) -> dict:
    params = BoundParams(t, delta)
    try:
        prefactor = gap_prefactor(t)
    except ValueError:
        prefactor = -math.inf
    return _clean(_bound_summary(n, t, params, prefactor))


def _clean(obj):
    """JSON-safe copy: non-finite floats become ``None``, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _finite(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- scan ---------------------------------------------------------------------


def run_scan(cfg: RunConfig) -> dict:
    """Pass/fail over ``t_grid`` for every chain length in ``N_grid``."""
    if not cfg.t_grid:
        raise ValueError("scan needs a non-empty t_grid")
    grid = list(cfg.t_grid)
    ns = cfg.N_grid or [cfg.model.N]
    radius = BoundParams(0.0).radius
    per_n = []
    flags = []
    for n in ns:
        points = []
        for t in grid:
            point_cfg = cfg.with_point(n, t)
            outcome = run_pipeline(point_cfg)
            rep = outcome.report
            cert = rep["certificate"] or {}
            points.append({
                "t": t,
                "verdict": rep["verdict"],
                "failed_claims": rep["failed_claims"],
                "failure": rep["failure"]["kind"] if rep["failure"] else None,
                "final_gap": cert.get("delta_measured"),
            })
        passed = [p["verdict"] == "pass" for p in points]
        prefix = 0
        while prefix < len(passed) and passed[prefix]:
            prefix += 1
        monotone = not any(passed[prefix:])
        window = grid[prefix - 1] if prefix else None
        if not monotone:
            flags.append(f"N={n}: pass/fail pattern is not a prefix of the grid")
        for p in points:
            if p["t"] < 0.5 * radius and p["verdict"] != "pass":
                flags.append(f"N={n}: t={p['t']} is below a/8 but fails")
        per_n.append({"N": n, "window": window, "monotone": monotone, "points": points})
    windows = [entry["window"] for entry in per_n]
    nonincreasing = all(b is not None and a is not None and b <= a
                        for a, b in zip(windows, windows[1:]))
    if not nonincreasing:
        flags.append("certified window is not non-increasing in N; review")
    return _clean({
        "schema_version": 1,
        "package_version": __version__,
        "config": cfg.echo(),
        "t_grid": grid,
        "analytic_radius_a_over_4": radius,
        "per_N": per_n,
        "windows": {str(e["N"]): e["window"] for e in per_n},
        "window_never_empty": all(w is not None for w in windows),
        "window_nonincreasing": nonincreasing,
        "flags": flags,
    })
