import math

import numpy as np
import pytest

from memtrack.assignment import assignment_weight, solve_assignment
from memtrack.exceptions import InvalidMatrixError, OracleSizeError
from memtrack.synth import brute_force_assignment

EXAMPLES = [
    (np.eye(3), [(0, 0), (1, 1), (2, 2)], 3.0),
    ([[0.9, 0.1, 0.0], [0.2, 0.8, 0.1], [0.0, 0.3, 0.7]], [(0, 0), (1, 1), (2, 2)], 2.4),
    ([[0.1, 0.9, 0.2], [0.8, 0.1, 0.1]], [(0, 1), (1, 0)], 1.7),
]


@pytest.mark.parametrize("weights, pairs, total", EXAMPLES)
def test_examples(weights, pairs, total):
    assert solve_assignment(weights) == pairs
    assert assignment_weight(weights, pairs) == pytest.approx(total, abs=1e-12)
    best, _ = brute_force_assignment(weights)
    assert best == pytest.approx(total, abs=1e-12)


def test_empty_matrix():
    assert solve_assignment(np.zeros((0, 3))) == []
    assert solve_assignment([]) == []


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected(bad):
    w = np.zeros((2, 2))
    w[1, 0] = bad
    with pytest.raises(InvalidMatrixError):
        solve_assignment(w)


def test_tall_matrix_returns_one_pair_per_column():
    w = [[0.1], [0.9], [0.5]]
    assert solve_assignment(w) == [(1, 0)]


def test_ties_prefer_low_rows_then_low_columns():
    assert solve_assignment(np.zeros((3, 3))) == [(0, 0), (1, 1), (2, 2)]
    assert solve_assignment(np.ones((3, 1))) == [(0, 0)]
    assert solve_assignment(np.ones((1, 3))) == [(0, 0)]
    # (0,1),(1,0) and (0,0),(1,1) both total 2
    assert solve_assignment([[1, 1], [1, 1]]) == [(0, 0), (1, 1)]
    # optimal derangements (1,2,0) and (2,0,1); the first wins
    assert solve_assignment([[0, 1, 1], [1, 0, 1], [1, 1, 0]]) == [(0, 1), (1, 2), (2, 0)]


def test_ties_match_lexicographic_enumeration(rng):
    # small integer weights produce many ties; the lexicographically first
    # optimal permutation is the expected answer
    import itertools

    for _ in range(300):
        n = int(rng.integers(1, 6))
        w = rng.integers(-1, 2, size=(n, n)).astype(float)
        best, _ = brute_force_assignment(w)
        first = next(p for p in itertools.permutations(range(n))
                     if math.fsum(w[i, p[i]] for i in range(n)) == best)
        assert [c for _, c in solve_assignment(w)] == list(first)


def test_negative_weights(rng):
    w = -rng.uniform(1, 2, size=(4, 4))
    best, _ = brute_force_assignment(w)
    assert assignment_weight(w, solve_assignment(w)) == best


def test_oracle_equivalence_random(rng):
    for _ in range(300):
        r, c = (int(x) for x in rng.integers(1, 8, size=2))
        w = rng.normal(size=(r, c))
        pairs = solve_assignment(w)
        assert len(pairs) == min(r, c)
        assert len({p for p, _ in pairs}) == len(pairs) == len({q for _, q in pairs})
        assert assignment_weight(w, pairs) == brute_force_assignment(w)[0]


def test_positive_scale_and_shift_invariance(rng):
    for _ in range(100):
        n = int(rng.integers(1, 7))
        w = rng.normal(size=(n, n))
        base = solve_assignment(w)
        assert solve_assignment(3.5 * w) == base
        assert assignment_weight(3.5 * w, solve_assignment(3.5 * w)) == pytest.approx(
            3.5 * assignment_weight(w, base), rel=1e-12)
        assert solve_assignment(w + 7.25) == base


def test_deterministic(rng):
    w = rng.normal(size=(30, 30))
    assert solve_assignment(w) == solve_assignment(w.copy())


def test_large_matrix_is_a_bijection(rng):
    w = rng.normal(size=(100, 100))
    pairs = solve_assignment(w)
    assert sorted(c for _, c in pairs) == list(range(100))
    # optimality certificate via scipy as an outside reference
    from scipy.optimize import linear_sum_assignment

    r, c = linear_sum_assignment(w, maximize=True)
    assert assignment_weight(w, pairs) == pytest.approx(w[r, c].sum(), abs=1e-9)


def test_brute_force_size_limit():
    with pytest.raises(OracleSizeError):
        brute_force_assignment(np.zeros((9, 9)))
