import itertools

import pytest
from hypothesis import given, strategies as st

from lieschwinger.intervals import (
    Interval,
    RelationCase,
    StepIndex,
    classify,
    d_sources,
    initial_step,
    intervals,
    is_admissible,
    precedes,
    predecessor,
    step_sequence,
)


def chain_and_step(max_n=9):
    return st.integers(2, max_n).flatmap(
        lambda n: st.tuples(st.just(n), st.sampled_from(step_sequence(n))))


def test_interval_basics():
    iv = Interval(2, 3)
    assert iv.right == 5 and iv.n_sites == 4 and list(iv.sites()) == [2, 3, 4, 5]
    assert 2 in iv and 6 not in iv
    assert Interval(3, 1).is_strict_subset(iv) and not iv.is_strict_subset(iv)
    assert Interval(5, 2).intersects(iv) and not Interval(6, 0).intersects(iv)
    assert Interval(1, 1).union(Interval(2, 2)) == Interval(1, 3)
    with pytest.raises(ValueError):
        Interval(0, 1)
    with pytest.raises(ValueError):
        Interval(1, -1)


@pytest.mark.parametrize("n", range(2, 9))
def test_step_sequence_shape(n):
    steps = step_sequence(n)
    assert len(steps) == n * (n - 1) // 2
    assert steps[0] == (1, 1) and steps[-1] == (n - 1, 1)
    assert all(precedes(a, b) for a, b in zip(steps, steps[1:]))
    assert all(is_admissible(s, n) and s.interval.fits(n) for s in steps)
    assert all(precedes(initial_step(n), s) for s in steps)


def test_step_sequence_small_examples():
    assert step_sequence(3) == [(1, 1), (1, 2), (2, 1)]
    assert step_sequence(4) == [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (3, 1)]
    with pytest.raises(ValueError):
        step_sequence(1)


@pytest.mark.parametrize("n", range(2, 8))
def test_predecessor_walks_the_sequence(n):
    steps = [initial_step(n)] + step_sequence(n)
    for prev, cur in zip(steps, steps[1:]):
        assert predecessor(cur, n) == prev
    with pytest.raises(ValueError):
        predecessor(initial_step(n), n)
    with pytest.raises(ValueError):
        predecessor(StepIndex(1, n), n)


def _classify_by_sets(target, step):
    t, s = set(target.sites()), set(step.sites())
    if target.edges < step.edges:
        return RelationCase.A_I
    if not t & s:
        return RelationCase.A_II
    if t == s:
        return RelationCase.B
    if s <= t:
        lo, hi = min(t), max(t)
        if lo not in s and hi not in s:
            return RelationCase.C
        return RelationCase.D1 if lo in s else RelationCase.D2
    return RelationCase.A_III


@pytest.mark.parametrize("n", range(2, 9))
def test_classify_matches_set_oracle(n):
    for step in step_sequence(n):
        for target in intervals(n):
            assert classify(target, step.interval) == _classify_by_sets(target, step.interval)


def test_classify_examples():
    step = Interval(2, 1)  # sites {2, 3}
    assert classify(Interval(2, 0), step) is RelationCase.A_I
    assert classify(Interval(5, 2), step) is RelationCase.A_II
    assert classify(Interval(3, 1), step) is RelationCase.A_III
    assert classify(step, step) is RelationCase.B
    assert classify(Interval(1, 3), step) is RelationCase.C
    assert classify(Interval(2, 2), step) is RelationCase.D1
    assert classify(Interval(1, 2), step) is RelationCase.D2


@given(chain_and_step())
def test_d_sources_overlap_and_cover(data):
    n, step = data
    I = step.interval
    for target in intervals(n, min_edges=step.k + 1):
        case = classify(target, I)
        if case not in (RelationCase.D1, RelationCase.D2):
            with pytest.raises(ValueError):
                d_sources(target, I, RelationCase.A_II)
            continue
        sources = d_sources(target, I, case)
        assert sources[0] == target and len(sources) == step.k + 1
        for src in sources:
            assert src.fits(n) and src.intersects(I) and not src.issubset(I)
            assert src.union(I) == target


@given(chain_and_step())
def test_every_touched_entry_is_conjugated_exactly_once(data):
    """Each interval that meets the step without lying inside it feeds exactly one target."""
    n, step = data
    I = step.interval
    feeds = {}
    for target in intervals(n):
        case = classify(target, I)
        if case is RelationCase.C:
            srcs = [target]
        elif case in (RelationCase.D1, RelationCase.D2):
            srcs = d_sources(target, I, case)
        else:
            continue
        for src in srcs:
            feeds.setdefault(src, []).append(target)
    for J in intervals(n, min_edges=1):
        touched = J.intersects(I) and not J.issubset(I)
        assert (J in feeds) == touched
        if touched:
            assert feeds[J] == [J.union(I)]


@given(st.integers(2, 10))
def test_processed_intervals_never_touched_again(n):
    steps = step_sequence(n)
    for a, b in itertools.combinations(steps, 2):
        assert classify(a.interval, b.interval).unchanged
