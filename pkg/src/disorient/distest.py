"""Day-by-day instability tests on polarity series.

Three tests, each producing one p-value per tested day:

* basic: each day's (F, C, U) counts against the pooled yearly proportions,
* running: each day against the pooled counts of the preceding ``w`` days,
* running variance: the spread of the favourable share over a trailing
  ``w``-day window against its whole-series variance (chi-square, two-sided).

The multinomial p-value is the total null probability of every outcome that
is no more likely than the observed one. Small days are enumerated exactly;
larger days fall back to Monte Carlo unless ``exact_bound`` is raised.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import bdtr, bdtrc, gammaln

from ._io import csv_text, fmt
from .errors import ContractViolation, DegenerateNull, RequiresMonteCarlo
from .polarity import PolaritySeries, YearlySummary

ALPHAS = (0.10, 0.05, 0.01)
EXACT_BOUND = 200
MIN_MC_REPS = 10_000
# outcomes within this relative probability of the observed one count as ties
TIE_RTOL = 1e-7
_LOG_TIE = math.log1p(TIE_RTOL)


@dataclass(frozen=True)
class NullSpec:
    p0: tuple
    source: str = "yearly"

    def __post_init__(self):
        p = np.asarray(self.p0, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
            raise ContractViolation(f"p0 must be a probability vector, got {self.p0}")
        object.__setattr__(self, "p0", tuple(float(v) for v in p / p.sum()))


@dataclass(frozen=True)
class TestOutcome:
    date: object
    p_value: float
    method: str
    statistic: float | None = None
    flags: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class TestSummary:
    tested_days: int
    significant: dict
    expected: dict

    __test__ = False

    def to_dict(self) -> dict:
        return {
            "tested_days": self.tested_days,
            "significant": {f"{a:.2f}": c for a, c in self.significant.items()},
            "expected": {f"{a:.2f}": e for a, e in self.expected.items()},
        }


def _as_p0(p0) -> np.ndarray:
    if isinstance(p0, NullSpec):
        return np.asarray(p0.p0)
    return np.asarray(NullSpec(tuple(p0)).p0)


@lru_cache(maxsize=None)
def _log_factorials(n: int) -> np.ndarray:
    return gammaln(np.arange(n + 1, dtype=float) + 1.0)


def _lgf(n: int) -> np.ndarray:
    # round the cache size up so nearby n share one table
    size = max(1024, 1 << max(0, int(n)).bit_length())
    return _log_factorials(size)


@lru_cache(maxsize=64)
def _simplex(n: int):
    """All (x1, x2, x3) with x1 + x2 + x3 = n, as three int arrays."""
    rows = np.arange(n + 1, 0, -1)
    x1 = np.repeat(np.arange(n + 1), rows)
    starts = np.concatenate(([0], np.cumsum(rows)[:-1]))
    x2 = np.arange(len(x1)) - np.repeat(starts, rows)
    return x1, x2, n - x1 - x2


def _xlogp(x, logp):
    # 0 * log(0) = 0; positive count on a zero-probability cell gives -inf
    with np.errstate(invalid="ignore"):
        return np.where(x > 0, x * logp, 0.0)


def log_pmf(x, p0) -> np.ndarray:
    """Multinomial log-probabilities for rows of ``x`` under ``p0``."""
    x = np.asarray(x, dtype=np.int64)
    p0 = _as_p0(p0)
    n = x.sum(axis=-1)
    lgf = _lgf(int(n.max()) if n.size else 0)
    with np.errstate(divide="ignore"):
        logp = np.log(p0)
    return lgf[n] - lgf[x].sum(axis=-1) + _xlogp(x, logp).sum(axis=-1)


def _check_counts(counts):
    c = np.asarray(counts)
    if c.shape != (3,) or np.any(c < 0) or np.any(c != np.round(c)):
        raise ContractViolation(f"counts must be three nonnegative integers, got {counts}")
    c = c.astype(np.int64)
    if c.sum() < 1:
        raise ContractViolation("need at least one observation")
    return c


ENUMERATE_BELOW = 64


def _enumerated_pvalue(n, p, obs):
    x1, x2, x3 = _simplex(n)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    lgf = _lgf(n)
    lp = lgf[n] - lgf[x1] - lgf[x2] - lgf[x3]
    lp += _xlogp(x1, logp[0]) + _xlogp(x2, logp[1]) + _xlogp(x3, logp[2])
    return float(np.exp(lp[lp <= obs + _LOG_TIE]).sum())


def _two_tail_pvalue(n, p, obs):
    """Same sum as full enumeration, organised by the first count.

    Given x1, x2 is Binomial(n - x1, q) with q = p2 / (p2 + p3), whose pmf is
    unimodal; the outcomes at or below the observed probability therefore
    form a left and a right tail in x2, located by bisection and summed with
    binomial CDFs. Requires 0 < p1 < 1 and 0 < q < 1.
    """
    lgf = _lgf(n)
    x1 = np.arange(n + 1)
    row = lgf[n] - lgf[x1] - lgf[n - x1] + x1 * math.log(p[0]) + (n - x1) * math.log1p(-p[0])
    # rows this improbable cannot move the sum at double precision
    live = row >= row.max() - 60.0
    x1, row = x1[live], row[live]
    m = n - x1
    q = p[1] / (p[1] + p[2])
    lq, l1q = math.log(q), math.log1p(-q)
    tau = obs + _LOG_TIE - row  # x2 qualifies iff its conditional logpmf <= tau

    def f(x2):
        return lgf[m] - lgf[x2] - lgf[m - x2] + x2 * lq + (m - x2) * l1q

    mode = np.minimum(np.floor((m + 1) * q).astype(np.int64), m)
    whole = f(mode) <= tau
    # left tail: largest a in [-1, mode) with f(a) <= tau, f rising on [0, mode]
    lo, hi = np.full(len(m), -1), mode.copy()
    for _ in range(int(n).bit_length() + 1):
        mid = (lo + hi + 1) // 2
        ok = (mid < hi) & (f(np.clip(mid, 0, None)) <= tau)
        lo = np.where(ok & (mid >= 0), mid, lo)
        hi = np.where(~ok & (mid < hi), mid, hi)
    a = lo
    # right tail: smallest b in (mode, m + 1] with f(b) <= tau, f falling on [mode, m]
    lo, hi = mode.copy(), m + 1
    for _ in range(int(n).bit_length() + 1):
        mid = (lo + hi) // 2
        ok = (mid > lo) & (f(np.minimum(mid, m)) <= tau)
        hi = np.where(ok, mid, hi)
        lo = np.where(~ok & (mid > lo), mid, lo)
    b = hi
    with np.errstate(invalid="ignore"):
        left = np.where(a >= 0, bdtr(np.maximum(a, 0), m, q), 0.0)
        right = np.where(b <= m, bdtrc(np.minimum(b - 1, m), m, q), 0.0)
    cond = np.where(whole, 1.0, left + right)
    return float((np.exp(row) * cond).sum())


def exact_multinomial_pvalue(counts, p0, bound: int = EXACT_BOUND) -> float:
    """Exact multinomial goodness-of-fit p-value.

    Sums the null probability of every outcome with the same total that is
    no more probable than ``counts`` (ties within ``TIE_RTOL``).
    """
    c = _check_counts(counts)
    p = _as_p0(p0)
    n = int(c.sum())
    if n > bound:
        raise RequiresMonteCarlo(n, bound)
    obs = float(log_pmf(c, p))
    if obs == -np.inf:
        return 0.0
    q = p[1] / (p[1] + p[2]) if p[1] + p[2] > 0 else 0.0
    if n < ENUMERATE_BELOW or not (0.0 < q < 1.0 and 0.0 < p[0] < 1.0):
        pv = _enumerated_pvalue(n, p, obs)
    else:
        pv = _two_tail_pvalue(n, p, obs)
    return min(1.0, pv)


def mc_multinomial_pvalue(counts, p0, reps: int = MIN_MC_REPS, seed=0) -> float:
    """Monte Carlo version of the exact test, with the add-one correction.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if reps < MIN_MC_REPS:
        raise ContractViolation(f"reps must be >= {MIN_MC_REPS}")
    c = _check_counts(counts)
    p = _as_p0(p0)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    obs = float(log_pmf(c, p))
    draws = rng.multinomial(int(c.sum()), p, size=reps)
    hits = int(np.count_nonzero(log_pmf(draws, p) <= obs + _LOG_TIE))
    return (1 + hits) / (reps + 1)


def multinomial_pvalue(counts, p0, exact_bound=EXACT_BOUND, mc_reps=MIN_MC_REPS, rng=None):
    """Exact p-value when ``sum(counts) <= exact_bound``, else Monte Carlo.

    Returns ``(p_value, method_tag)``.
    """
    n = int(np.sum(counts))
    if n <= exact_bound:
        return exact_multinomial_pvalue(counts, p0, bound=exact_bound), "exact"
    if rng is None:
        rng = np.random.default_rng(0)
    return mc_multinomial_pvalue(counts, p0, mc_reps, rng), f"monte-carlo({mc_reps})"


def _flags(p: float, alphas) -> dict:
    return {a: p <= a for a in alphas}


def summarize(outcomes, alphas=ALPHAS) -> TestSummary:
    n = len(outcomes)
    return TestSummary(
        n,
        {a: sum(o.flags[a] for o in outcomes) for a in alphas},
        {a: a * n for a in alphas},
    )


def _day_rng(seed: int, day):
    return np.random.default_rng([seed, day.toordinal()])


def basic_test(series: PolaritySeries, summary: YearlySummary | NullSpec, alphas=ALPHAS,
               exact_bound=EXACT_BOUND, mc_reps=MIN_MC_REPS, seed=0):
    """Test every non-empty day against the pooled yearly proportions."""
    null = summary if isinstance(summary, NullSpec) else NullSpec(summary.proportions)
    out = []
    for k in np.flatnonzero(~series.zero_n):
        d = series.dates[k]
        p, method = multinomial_pvalue(series.counts[k], null, exact_bound, mc_reps,
                                       _day_rng(seed, d))
        out.append(TestOutcome(d, p, method, None, _flags(p, alphas)))
    return out, summarize(out, alphas)


def running_null(series: PolaritySeries, k: int, w: int):
    """Pooled proportions of the ``w`` days before index ``k``.

    Returns None when fewer than ceil(w/2) of those days have posts.
    """
    win = series.counts[max(0, k - w):k]
    win = win[win.sum(axis=1) > 0]
    if len(win) < math.ceil(w / 2):
        return None
    tot = win.sum(axis=0).astype(float)
    return NullSpec(tuple(tot / tot.sum()), f"running-window({w})")


def running_test(series: PolaritySeries, w: int = 15, alphas=ALPHAS,
                 exact_bound=EXACT_BOUND, mc_reps=MIN_MC_REPS, seed=0):
    """Test each day against the pooled counts of the preceding ``w`` days.

    The window excludes the day under test. Empty days are skipped both as
    test days and inside the window.
    """
    if w < 1:
        raise ContractViolation("window must be >= 1")
    if len(series) <= w:
        raise ContractViolation(f"series of {len(series)} days is not longer than w={w}")
    out = []
    for k in range(len(series)):
        if series.zero_n[k]:
            continue
        null = running_null(series, k, w)
        if null is None:
            continue
        d = series.dates[k]
        p, method = multinomial_pvalue(series.counts[k], null, exact_bound, mc_reps,
                                       _day_rng(seed, d))
        out.append(TestOutcome(d, p, method, None, _flags(p, alphas)))
    return out, summarize(out, alphas)


def window_sensitivity(series: PolaritySeries, w_grid=(7, 10, 15, 20, 30), alpha=0.05, **kw):
    """Significant-day counts of the running test for each window length."""
    grid = sorted(set(w_grid))
    if grid and grid[-1] >= len(series):
        raise ContractViolation("every window must be shorter than the series")
    return {w: running_test(series, w, (alpha,), **kw)[1] for w in grid}


def variance_pvalue(s2: float, m: int, sigma0_sq: float):
    """Two-sided chi-square test of a sample variance from ``m`` values.

    Returns ``(statistic, p_value)`` with statistic ``(m - 1) * s2 / sigma0_sq``.
    """
    if sigma0_sq <= 0:
        raise DegenerateNull("reference variance must be positive")
    T = (m - 1) * s2 / sigma0_sq
    lower = stats.chi2.cdf(T, m - 1)
    upper = stats.chi2.sf(T, m - 1)
    return float(T), float(min(1.0, 2.0 * min(lower, upper)))


def running_variance_test(series: PolaritySeries, w: int = 15, sigma0_sq: float | None = None,
                          alphas=ALPHAS, min_days: int = 3):
    """Compare the trailing ``w``-day variance of the favourable share with
    ``sigma0_sq`` (by default the variance of daily pF over all non-empty days).

    The window for day ``d`` covers ``d - w + 1 .. d``; windows with fewer
    than ``min_days`` non-empty days are not tested.
    """
    if min_days < 3:
        raise ContractViolation("min_days must be >= 3")
    pf = series.proportions[:, 0]
    if sigma0_sq is None:
        vals = pf[~np.isnan(pf)]
        # identical values can still leave a round-off variance of ~1e-32
        constant = len(vals) < 2 or np.ptp(vals) == 0
        sigma0_sq = 0.0 if constant else float(np.var(vals, ddof=1))
    if sigma0_sq <= 0:
        raise DegenerateNull("reference variance must be positive")
    out = []
    for k in range(len(series)):
        if series.zero_n[k]:
            continue
        win = pf[max(0, k - w + 1):k + 1]
        win = win[~np.isnan(win)]
        m = len(win)
        if m < min_days:
            continue
        T, p = variance_pvalue(float(np.var(win, ddof=1)), m, sigma0_sq)
        out.append(TestOutcome(series.dates[k], p, "chi-square", T, _flags(p, alphas)))
    return out, summarize(out, alphas)


_OUTCOME_HEADER = ["date", "method", "statistic", "p_value", "sig10", "sig05", "sig01"]


def _outcome_row(o: TestOutcome) -> list:
    row = [o.date.isoformat(), o.method,
           "" if o.statistic is None else fmt(o.statistic), fmt(o.p_value)]
    return row + [int(o.p_value <= a) for a in ALPHAS]


def outcomes_csv(outcomes, comment=None, test_name=None) -> str:
    """``date,method,statistic,p_value,sig10,sig05,sig01`` (optionally
    prefixed by a ``test`` column)."""
    if test_name:
        return combined_outcomes_csv({test_name: outcomes}, comment)
    return csv_text(_OUTCOME_HEADER, [_outcome_row(o) for o in outcomes], comment)


def combined_outcomes_csv(groups: dict, comment=None) -> str:
    """Several tests in one table, keyed by a leading ``test`` column."""
    rows = [[name] + _outcome_row(o) for name, outcomes in groups.items() for o in outcomes]
    return csv_text(["test"] + _OUTCOME_HEADER, rows, comment)
