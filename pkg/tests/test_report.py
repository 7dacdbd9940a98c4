import xml.etree.ElementTree as ET
from datetime import date

import numpy as np

from disorient.distest import NullSpec, basic_test, running_test
from disorient.polarity import PolaritySeries
from disorient.report import fig_proportions
from disorient.simulate import PAPER_P0, ScenarioConfig, shift_favourable, simulate_series
from disorient.smoothfit import smooth_series


def _markers(svg_text):
    return svg_text.count('class="marker"')


def test_constant_series_has_no_markers():
    s = PolaritySeries.from_counts(date(2018, 1, 1), np.tile([70, 17, 13], (60, 1)))
    outcomes, _ = basic_test(s, NullSpec((0.7, 0.17, 0.13)))
    svg = fig_proportions(s, smooth_series(s, 0.05), outcomes, "basic", "manifest x")
    ET.fromstring(svg[svg.index("<svg"):])  # well-formed
    assert "manifest x" in svg
    assert _markers(svg) == 0


def test_empty_outcomes_draw_curves_only():
    s = PolaritySeries.from_counts(date(2018, 1, 1), np.tile([70, 17, 13], (20, 1)))
    svg = fig_proportions(s, smooth_series(s, 0.05), [], "none")
    assert _markers(svg) == 0 and svg.count("<polyline") + svg.count("<path") >= 3


def test_markers_cluster_at_planted_change():
    cfg = ScenarioConfig(days=100, base_rate=400, seed=4, trajectory={
        "kind": "change-point", "day": 50, "p_before": list(PAPER_P0),
        "p_after": list(shift_favourable(PAPER_P0, 0.15))})
    s, _ = simulate_series(cfg)
    outcomes, _ = running_test(s, 15, exact_bound=10**6)
    flagged = [(o.date - cfg.start).days for o in outcomes if o.p_value <= 0.01]
    assert np.mean([50 <= d < 65 for d in flagged]) > 0.7
    svg = fig_proportions(s, smooth_series(s, 0.05), outcomes, "running")
    assert _markers(svg) == sum(o.p_value <= 0.10 for o in outcomes)
