"""Beta-kernel smoothing of daily proportions and polynomial trend selection.

Days are placed on [0, 1] by ``x = day_index / (T - 1)``. The weight that an
observation at ``x_i`` receives when smoothing at ``m`` is proportional to
``x_i**(m/h) * (1 - x_i)**((1 - m)/h)``, i.e. a Beta(m/h + 1, (1 - m)/h + 1)
density evaluated on the observed days and renormalized over them. All
weight stays on the observed support, so there is no boundary leakage.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._io import csv_text, fmt
from .errors import ContractViolation, InsufficientData, NumericError
from .polarity import PolaritySeries

log = logging.getLogger(__name__)


def _xlogy(a, b):
    # a * log(b) with 0 * log(0) = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a == 0, 0.0, a * np.log(b))


def log_kernel(m, x, h: float) -> np.ndarray:
    """Unnormalized log weights, shape (len(m), len(x))."""
    m = np.atleast_1d(np.asarray(m, dtype=float))[:, None]
    x = np.asarray(x, dtype=float)[None, :]
    return (_xlogy(m, x) + _xlogy(1.0 - m, 1.0 - x)) / h


def kernel_weights(m, x, h: float, exclude_self: bool = False) -> np.ndarray:
    """Normalized weights; row ``j`` smooths at ``m[j]``.

    With ``exclude_self`` the point ``x[j]`` gets zero weight in row ``j``
    (leave-one-out, requires ``m`` to be ``x``).
    """
    if h <= 0:
        raise ContractViolation("bandwidth must be positive")
    lw = log_kernel(m, x, h)
    if exclude_self:
        np.fill_diagonal(lw, -np.inf)
    top = lw.max(axis=1, keepdims=True)
    dead = np.isneginf(top).ravel()
    if dead.any():
        # Only the endpoints 0 and 1 remain and m is interior, so every
        # kernel value is 0. Take the limit of pulling the endpoints inwards:
        # all weight goes to the nearer endpoint (split evenly at m = 1/2).
        mm = np.atleast_1d(np.asarray(m, dtype=float))[dead][:, None]
        xx = np.broadcast_to(np.asarray(x, dtype=float)[None, :], (len(mm), len(x)))
        dist = np.where((xx == 0) | (xx == 1), np.abs(xx - mm), np.inf)
        if exclude_self:
            dist[np.arange(len(mm)), np.flatnonzero(dead)] = np.inf
        lw[dead] = np.where(dist == dist.min(axis=1, keepdims=True), 0.0, -np.inf)
        top = lw.max(axis=1, keepdims=True)
    lw -= top
    w = np.exp(lw)
    return w / w.sum(axis=1, keepdims=True)


def support_points(n_days: int, keep=None) -> np.ndarray:
    if n_days < 2:
        raise InsufficientData("need at least 2 days")
    x = np.arange(n_days) / (n_days - 1)
    return x if keep is None else x[keep]


def beta_kernel_smooth(y, h: float, x=None, m=None, weights=None) -> np.ndarray:
    """Smooth values ``y`` observed at ``x`` (default: evenly spaced on [0, 1]).

    ``m`` are the evaluation points (default ``x``). Optional per-point
    ``weights`` (e.g. daily post counts) multiply the kernel weights.
    """
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise InsufficientData("need at least 2 points to smooth")
    x = support_points(len(y)) if x is None else np.asarray(x, dtype=float)
    m = x if m is None else m
    W = kernel_weights(m, x, h)
    if weights is not None:
        W = W * np.asarray(weights, dtype=float)[None, :]
        W /= W.sum(axis=1, keepdims=True)
    return _apply(W, y)


def _apply(W, y):
    # Smoothing deviations from a reference value keeps constants exact:
    # a constant series maps to itself bit for bit.
    ref = y[0]
    return ref + W @ (y - ref)


@dataclass(frozen=True)
class SmoothedSeries:
    dates: tuple
    values: np.ndarray  # (days, 3), NaN rows on zero-n days
    h: float
    smoother: np.ndarray | None = None  # linear map from raw to smoothed, non-empty days

    def to_csv(self, comment=None) -> str:
        rows = [[d.isoformat(), *("" if np.isnan(v) else fmt(v) for v in row)]
                for d, row in zip(self.dates, self.values)]
        return csv_text(("date", "pF_s", "pC_s", "pU_s"), rows, comment)


def smooth_series(series: PolaritySeries, h: float, count_weighted: bool = False) -> SmoothedSeries:
    """Smooth each of F, C, U separately on the non-empty days, then
    rescale every day so the three values sum to one."""
    keep = ~series.zero_n
    if keep.sum() < 2:
        raise InsufficientData("need at least 2 non-empty days")
    x = support_points(len(series), keep)
    props = series.proportions[keep]
    W = kernel_weights(x, x, h)
    if count_weighted:
        W = W * series.n[keep][None, :]
        W /= W.sum(axis=1, keepdims=True)
    sm = _apply(W, props)
    sm /= sm.sum(axis=1, keepdims=True)
    out = np.full((len(series), 3), np.nan)
    out[keep] = sm
    return SmoothedSeries(series.dates, out, h, W)


def default_h_grid(lo=0.0005, hi=0.5, n=30) -> np.ndarray:
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class CVResult:
    h: float
    scores: np.ndarray
    grid: np.ndarray
    constant: bool = False


def loo_scores(y, x, h_grid, weights=None) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    out = np.empty(len(h_grid))
    for k, h in enumerate(h_grid):
        W = kernel_weights(x, x, h, exclude_self=True)
        if weights is not None:
            W = W * weights[None, :]
            W /= W.sum(axis=1, keepdims=True)
        out[k] = float(((y - _apply(W, y)) ** 2).sum())
    return out


def cv_bandwidth(y, h_grid=None, x=None, weights=None) -> CVResult:
    """Leave-one-out choice of bandwidth; ties go to the smaller ``h``."""
    y = np.asarray(y, dtype=float)
    if len(y) < 10:
        raise InsufficientData("cross-validation needs at least 10 points")
    grid = np.sort(np.asarray(default_h_grid() if h_grid is None else h_grid, dtype=float))
    x = support_points(len(y)) if x is None else np.asarray(x, dtype=float)
    if np.ptp(y) == 0:
        log.info("constant series: bandwidth is arbitrary, using smallest grid value")
        return CVResult(float(grid[0]), np.zeros(len(grid)), grid, constant=True)
    scores = loo_scores(y, x, grid, None if weights is None else np.asarray(weights, float))
    k = int(np.flatnonzero(scores == scores.min())[0])
    return CVResult(float(grid[k]), scores, grid)


def cv_bandwidth_series(series: PolaritySeries, h_grid=None, component: int = 0,
                        count_weighted: bool = False) -> CVResult:
    keep = ~series.zero_n
    x = support_points(len(series), keep)
    y = series.proportions[keep, component]
    return cv_bandwidth(y, h_grid, x, series.n[keep] if count_weighted else None)


# --- polynomial trend ------------------------------------------------------


@dataclass(frozen=True)
class DegreeFit:
    degree: int
    coef: np.ndarray  # ascending powers of scaled time
    r2: float
    rss: float
    partial_f: float | None = None  # against degree - 1
    p_value: float | None = None


@dataclass(frozen=True)
class TrendFit:
    fits: tuple
    selected: int
    center: float
    scale: float
    n: int
    alpha: float = 0.05
    trace: list = field(default_factory=list)

    def fit(self, degree: int | None = None) -> DegreeFit:
        return self.fits[(degree or self.selected) - 1]

    def scaled(self, t) -> np.ndarray:
        return (np.asarray(t, dtype=float) - self.center) / self.scale

    def predict(self, t, degree: int | None = None) -> np.ndarray:
        """Evaluate at raw day indices ``t``."""
        c = self.fit(degree).coef
        return np.polynomial.polynomial.polyval(self.scaled(t), c)

    def r2(self) -> dict:
        return {f.degree: f.r2 for f in self.fits}

    def to_dict(self) -> dict:
        return {
            "selected_degree": self.selected,
            "alpha": self.alpha,
            "time_map": {"center": self.center, "scale": self.scale,
                         "note": "s = (day_index - center) / scale"},
            "degrees": [
                {"degree": f.degree, "coef": [float(c) for c in f.coef], "r2": f.r2,
                 "rss": f.rss, "partial_f": f.partial_f, "p_value": f.p_value}
                for f in self.fits
            ],
        }


def _ols(X, y):
    cond = np.linalg.cond(X)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericError(f"design matrix is rank deficient (condition number {cond:.3g})")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef


def _partial_f(y, X_small, X_big, SS):
    """Partial F for the last column of ``X_big`` given ``X_small``.

    ``SS`` is ``S @ S.T`` for the linear smoother ``S`` that produced ``y``
    from roughly white noise (identity for unsmoothed data). Smoothing makes
    residuals serially dependent, so the residual variance is rescaled by
    ``tr(A)`` and the denominator degrees of freedom use the Satterthwaite
    value ``tr(A)**2 / tr(A @ A)``, where ``A = R SS R`` and ``R`` is the
    residual projector. With ``SS = I`` this is the textbook partial F-test
    with ``n - p`` denominator degrees of freedom.
    """
    Q, _ = np.linalg.qr(X_big)
    u = Q[:, -1]
    resid = y - Q @ (Q.T @ y)
    rss = float(resid @ resid)
    drop = float(u @ y) ** 2
    n, p = X_big.shape
    if SS is None:
        tr_a, nu, var_u = n - p, n - p, 1.0
    else:
        R = np.eye(n) - Q @ Q.T
        A = R @ SS @ R
        tr_a = float(np.trace(A))
        nu = tr_a ** 2 / float((A * A.T).sum())
        var_u = float(u @ SS @ u)
    scale = max(float(y @ y), 1e-300)
    if rss <= 1e-24 * scale:
        return (np.inf, 0.0) if drop > 1e-24 * scale else (0.0, 1.0)
    F = drop / (rss / tr_a * var_u)
    return float(F), float(stats.f.sf(F, 1, nu))


def polyfit_stepwise(y, t=None, d_max: int = 4, alpha: float = 0.05,
                     smoother: np.ndarray | None = None) -> TrendFit:
    """Fit polynomials of degree 1..d_max by least squares on scaled time and
    choose the degree by forward partial-F tests.

    Starting from a line, the degree is raised while the next term's partial
    F-test has p <= ``alpha``. Pass the ``smoother`` matrix when ``y`` is a
    smoothed series so the tests account for the induced autocorrelation.
    """
    y = np.asarray(y, dtype=float)
    t = np.arange(len(y), dtype=float) if t is None else np.asarray(t, dtype=float)
    n = len(y)
    if n <= d_max + 1:
        raise InsufficientData(f"need more than {d_max + 1} points for degree {d_max}")
    center = float(t.mean())
    scale = float(np.abs(t - center).max()) or 1.0
    s = (t - center) / scale
    SS = None if smoother is None else smoother @ smoother.T
    tss = float(((y - y.mean()) ** 2).sum())
    fits = []
    best_r2 = -np.inf
    for d in range(1, d_max + 1):
        X = np.vander(s, d + 1, increasing=True)
        coef = _ols(X, y)
        rss = float(((y - X @ coef) ** 2).sum())
        # R^2 kept monotone against round-off in near-exact fits
        best_r2 = max(best_r2, 1.0 - rss / tss if tss > 0 else 1.0)
        F, p = _partial_f(y, X[:, :-1], X, SS) if d > 1 else (None, None)
        fits.append(DegreeFit(d, coef, best_r2, rss, F, p))
    selected, trace = 1, []
    for f in fits[1:]:
        trace.append({"degree": f.degree, "partial_f": f.partial_f, "p_value": f.p_value})
        if f.p_value <= alpha:
            selected = f.degree
        else:
            break
    return TrendFit(tuple(fits), selected, center, scale, n, alpha, trace)


def fit_smoothed(smoothed: SmoothedSeries, component: int = 0, d_max: int = 4,
                 alpha: float = 0.05) -> TrendFit:
    vals = smoothed.values[:, component]
    keep = ~np.isnan(vals)
    return polyfit_stepwise(vals[keep], np.flatnonzero(keep), d_max, alpha,
                            smoother=smoothed.smoother)


def _poly_max(coef, lo: float, hi: float):
    """Location and value of the maximum of a polynomial on [lo, hi]."""
    P = np.polynomial.Polynomial(coef)
    cands = [lo, hi]
    for r in P.deriv().roots():
        if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
            cands.append(float(r.real))
    vals = P(np.array(cands))
    k = int(np.argmax(vals))
    return cands[k], float(vals[k])


def trend_metrics(smoothed: SmoothedSeries, fit: TrendFit, component: int = 0) -> dict:
    """Amplitude of the smoothed curve, plus the peak of the selected
    polynomial over the observed span and its decline to the span end."""
    vals = smoothed.values[:, component]
    keep = np.flatnonzero(~np.isnan(vals))
    if len(keep) == 0:
        raise InsufficientData("no smoothed values")
    first, last = int(keep[0]), int(keep[-1])
    s_peak, peak = _poly_max(fit.fit().coef, *fit.scaled([first, last]))
    t_peak = fit.center + fit.scale * s_peak
    end = float(fit.predict([last])[0])
    return {
        "amplitude": (float(np.nanmin(vals)), float(np.nanmax(vals))),
        "peak_index": float(t_peak),
        "peak_date": smoothed.dates[int(round(t_peak))],
        "peak_value": peak,
        "end_value": end,
        "decline": end - peak,
    }
