"""End-to-end pipeline run and the five summary figures."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import svg
from .distest import ALPHAS, basic_test, running_test, running_variance_test, window_sensitivity
from .errors import ContractViolation
from .ingest import Corpus, detect_peaks, interaction_series
from .polarity import aggregate, yearly_summary
from .smoothfit import cv_bandwidth_series, default_h_grid, fit_smoothed, smooth_series, trend_metrics

FIGURES = ("fig1_interactions", "fig2_basic", "fig3_running", "fig4_variance", "fig5_trend")
# which subcommand produces each artifact a figure needs
PRODUCER = {
    "interactions": "ingest",
    "peaks": "ingest",
    "series": "aggregate",
    "smoothed": "smooth",
    "basic": "test-basic",
    "running": "test-running",
    "variance": "test-variance",
    "trend": "fit",
}
NEEDS = {
    "fig1_interactions": ("interactions", "peaks"),
    "fig2_basic": ("series", "smoothed", "basic"),
    "fig3_running": ("series", "smoothed", "running"),
    "fig4_variance": ("series", "variance"),
    "fig5_trend": ("series", "smoothed", "trend"),
}


@dataclass
class PipelineParams:
    alphas: tuple = ALPHAS
    window: int = 15
    w_grid: tuple = (7, 10, 15, 20, 30)
    mc_reps: int = 100_000
    exact_bound: int = 200
    h_grid: tuple = tuple(default_h_grid())
    boot_reps: int = 1000
    seed: int = 0
    min_prominence: float | None = None
    count_weighted: bool = False
    extra: dict = field(default_factory=dict)


def run_pipeline(corpus: Corpus, labels: dict, p: PipelineParams) -> dict:
    """Everything downstream of classification, as a dict of artifacts."""
    inter = interaction_series(corpus)
    prom = p.min_prominence or max(1.0, 3.0 * float(np.median(inter.interactions)))
    peaks = detect_peaks(inter, prom)
    series = aggregate(corpus, labels)
    summary = yearly_summary(series, p.boot_reps, p.seed)
    kw = dict(exact_bound=p.exact_bound, mc_reps=p.mc_reps, seed=p.seed)
    basic = basic_test(series, summary, p.alphas, **kw)
    running = running_test(series, p.window, p.alphas, **kw)
    sens = window_sensitivity(series, [w for w in p.w_grid if w < len(series)], 0.05, **kw)
    variance = running_variance_test(series, p.window, summary.daily_pf_variance, p.alphas)
    cv = cv_bandwidth_series(series, p.h_grid, count_weighted=p.count_weighted)
    smoothed = smooth_series(series, cv.h, p.count_weighted)
    trends = [fit_smoothed(smoothed, k) for k in range(3)]
    metrics = trend_metrics(smoothed, trends[0], 0)
    return {
        "interactions": inter, "peaks": peaks, "peak_prominence": prom,
        "series": series, "summary": summary,
        "basic": basic, "running": running, "sensitivity": sens, "variance": variance,
        "cv": cv, "smoothed": smoothed, "trend": trends, "trend_metrics": metrics,
    }


def _sig_markers(chart, outcomes, xs_by_date, y_by_date):
    for o in outcomes:
        levels = [m for m in svg.MARKERS if o.p_value <= m[0]]
        if not levels:
            continue
        _, shape, color = levels[-1]
        y = y_by_date.get(o.date)
        if y is not None and np.isfinite(y):
            chart.marker(xs_by_date[o.date], y, shape, color)


def _legend(chart):
    x = chart.w - chart.right - 240
    for k, (a, shape, color) in enumerate(svg.MARKERS):
        chart.parts.append(f'<text x="{x + 80 * k + 10}" y="{chart.top - 10}" font-size="10" '
                           f'fill="{color}">{shape} {int(a * 100)}%</text>')


def fig_interactions(inter, peaks, comment=None) -> str:
    idx = np.arange(len(inter))
    c = svg.Chart(title="Daily interactions (posts + likes + retweets)")
    c.limits(idx, np.append(inter.interactions, 0))
    c.line(idx, inter.interactions, svg.COLORS["line"])
    pos = {d: i for i, d in enumerate(inter.dates)}
    for d, v in peaks:
        c.marker(pos[d], v, "circle", "#d62728", 5)
        c.text(pos[d] + 3, v, d.isoformat(), 10)
    c.axes(svg.month_ticks(inter.dates), svg.nice_ticks(*c.ylim), "", "interactions")
    return c.render(comment)


def fig_proportions(series, smoothed, outcomes, title, comment=None) -> str:
    idx = np.arange(len(series))
    props = series.proportions
    c = svg.Chart(title=title)
    c.limits(idx, np.r_[0.0, 1.0])
    for k, name in enumerate("FCU"):
        c.line(idx, smoothed.values[:, k], svg.COLORS[name], 1.6)
    pos = {d: i for i, d in enumerate(series.dates)}
    _sig_markers(c, outcomes, pos, dict(zip(series.dates, props[:, 0])))
    _legend(c)
    c.axes(svg.month_ticks(series.dates), [0, 0.25, 0.5, 0.75, 1.0], "", "proportion")
    return c.render(comment)


def running_variance_curve(series, w: int) -> np.ndarray:
    pf = series.proportions[:, 0]
    out = np.full(len(pf), np.nan)
    for k in range(len(pf)):
        if np.isnan(pf[k]):
            continue
        win = pf[max(0, k - w + 1):k + 1]
        win = win[~np.isnan(win)]
        if len(win) >= 3:
            out[k] = np.var(win, ddof=1)
    return out


def fig_variance(series, outcomes, w, comment=None) -> str:
    idx = np.arange(len(series))
    v = running_variance_curve(series, w)
    c = svg.Chart(title=f"{w}-day running variance of the favourable share")
    c.limits(idx, np.r_[0.0, v[np.isfinite(v)]] if np.isfinite(v).any() else [0.0, 1.0])
    c.line(idx, v, svg.COLORS["line"])
    pos = {d: i for i, d in enumerate(series.dates)}
    _sig_markers(c, outcomes, pos, dict(zip(series.dates, v)))
    _legend(c)
    c.axes(svg.month_ticks(series.dates), svg.nice_ticks(*c.ylim), "", "variance")
    return c.render(comment)


def fig_trend(series, smoothed, trends, comment=None) -> str:
    idx = np.arange(len(series))
    charts = []
    for k, (name, label) in enumerate(zip("FCU", ("favourable", "contrary", "undecided"))):
        fit = trends[k]
        vals = smoothed.values[:, k]
        ok = np.isfinite(vals)
        t = idx[ok]
        lin, quad = fit.predict(t, 1), fit.predict(t, 2)
        c = svg.Chart(height=260, title=f"Smoothed {label} share with linear and quadratic fits")
        c.limits(idx, np.r_[vals[ok], lin, quad])
        c.line(idx, vals, svg.COLORS[name], 1.8)
        c.line(t, lin, svg.COLORS["fit1"], 1.2, "5,3")
        c.line(t, quad, svg.COLORS["fit2"], 1.2, "2,2")
        r2 = fit.r2()
        c.text(c.w - c.right - 8, c.top + 14,
               f"R2 linear {r2[1]:.3f}  quadratic {r2[2]:.3f}  selected degree {fit.selected}",
               10, "end", data_coords=False)
        c.axes(svg.month_ticks(series.dates), svg.nice_ticks(*c.ylim), "", label)
        charts.append(c)
    return svg.stack(charts, comment)


def emit_figures(artifacts: dict, comment: str | None = None, which=FIGURES) -> dict:
    """Render the requested figures to SVG text, keyed by figure name."""
    missing = sorted({need for f in which for need in NEEDS[f] if need not in artifacts})
    if missing:
        hint = ", ".join(f"{m} (run `{PRODUCER[m]}`)" for m in missing)
        raise ContractViolation(f"missing artifacts: {hint}")
    a = artifacts
    out = {}
    for f in which:
        if f == "fig1_interactions":
            out[f] = fig_interactions(a["interactions"], a["peaks"], comment)
        elif f == "fig2_basic":
            out[f] = fig_proportions(a["series"], a["smoothed"], a["basic"][0],
                                     "Basic multinomial test (null: yearly proportions)", comment)
        elif f == "fig3_running":
            out[f] = fig_proportions(a["series"], a["smoothed"], a["running"][0],
                                     "Running multinomial test (null: preceding days)", comment)
        elif f == "fig4_variance":
            out[f] = fig_variance(a["series"], a["variance"][0], a.get("window", 15), comment)
        elif f == "fig5_trend":
            out[f] = fig_trend(a["series"], a["smoothed"], a["trend"], comment)
    return out
