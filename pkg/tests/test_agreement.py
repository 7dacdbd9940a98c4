import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize, stats

from disorient.agreement import accuracy_ci, fleiss_kappa, read_rating_csv
from disorient.errors import ContractViolation

# 10 items, 4 categories, 6 raters per item.
FIXTURE = np.array([
    [6, 0, 0, 0],
    [3, 2, 1, 0],
    [0, 4, 2, 0],
    [1, 1, 1, 3],
    [2, 2, 2, 0],
    [0, 0, 1, 5],
    [4, 0, 0, 2],
    [1, 3, 0, 2],
    [0, 6, 0, 0],
    [2, 1, 2, 1],
])


def kappa_by_loops(m):
    """Textbook formula written out with explicit loops over items and categories."""
    N, k = len(m), len(m[0])
    n = sum(m[0])
    P = []
    for row in m:
        P.append((sum(x * x for x in row) - n) / (n * (n - 1)))
    Pbar = sum(P) / N
    pj = [sum(m[i][j] for i in range(N)) / (N * n) for j in range(k)]
    Pe = sum(p * p for p in pj)
    return (Pbar - Pe) / (1 - Pe)


def test_unanimous_is_one():
    assert fleiss_kappa([[3, 0, 0], [0, 3, 0], [0, 0, 3]]) == 1.0
    assert fleiss_kappa([[3, 0], [3, 0]]) == 1.0  # chance agreement is already 1


def test_perfect_disagreement_pair():
    assert fleiss_kappa([[1, 1], [1, 1]]) == -1.0


def test_fixture_matches_loop_formula():
    expect = kappa_by_loops(FIXTURE.tolist())
    assert fleiss_kappa(FIXTURE) == pytest.approx(expect, abs=1e-12)


def test_fixture_matches_statsmodels():
    irr = pytest.importorskip("statsmodels.stats.inter_rater")
    assert fleiss_kappa(FIXTURE) == pytest.approx(irr.fleiss_kappa(FIXTURE), abs=1e-12)


@given(st.permutations(range(4)), st.permutations(range(10)))
def test_kappa_permutation_invariant(cols, rows):
    m = FIXTURE[list(rows)][:, list(cols)]
    assert fleiss_kappa(m) == pytest.approx(fleiss_kappa(FIXTURE), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_kappa_in_range(seed):
    rng = np.random.default_rng(seed)
    m = rng.multinomial(int(rng.integers(2, 8)), rng.dirichlet(np.ones(3)), size=int(rng.integers(1, 12)))
    assert -1.0 <= fleiss_kappa(m) <= 1.0


@pytest.mark.parametrize("bad", [[[2, 1], [1, 1]], [[1, 0], [0, 1]], [[-1, 3]], []])
def test_invalid_matrices(bad):
    with pytest.raises(ContractViolation):
        fleiss_kappa(bad)


def test_read_rating_csv(tmp_path):
    f = tmp_path / "r.csv"
    f.write_text("a,b\n2,0\n1,1\n")
    assert fleiss_kappa(read_rating_csv(f)) == -1 / 3


def test_ci_boundaries():
    point, lo, hi = accuracy_ci(0, 10)
    assert point == 0.0 and lo == 0.0 and 0 < hi < 1
    point, lo, hi = accuracy_ci(10, 10)
    assert hi == 1.0
    with pytest.raises(ContractViolation):
        accuracy_ci(0, 0)


def test_ci_matches_cdf_inversion():
    x, n, a = 30, 100, 0.05
    lo = optimize.brentq(lambda p: stats.binom.sf(x - 1, n, p) - a / 2, 1e-9, x / n)
    hi = optimize.brentq(lambda p: stats.binom.cdf(x, n, p) - a / 2, x / n, 1 - 1e-9)
    point, got_lo, got_hi = accuracy_ci(x, n, 0.95)
    assert point == 0.3
    assert got_lo == pytest.approx(lo, abs=1e-6)
    assert got_hi == pytest.approx(hi, abs=1e-6)


def test_ci_shrinks_with_total():
    widths = [np.subtract(*accuracy_ci(3 * k, 10 * k)[:0:-1]) for k in (1, 10, 100)]
    assert widths[0] > widths[1] > widths[2] > 0


def test_ci_coverage():
    rng = np.random.default_rng(2024)
    draws = rng.binomial(200, 0.3, size=2000)
    cache = {x: accuracy_ci(int(x), 200) for x in np.unique(draws)}
    covered = np.mean([cache[x][1] <= 0.3 <= cache[x][2] for x in draws])
    assert 0.94 <= covered <= 0.97
