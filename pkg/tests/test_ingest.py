import json
from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import post_line
from disorient.errors import EmptyInput
from disorient.ingest import (Corpus, InteractionSeries, detect_peaks, ingest_jsonl,
                              ingest_lines, interaction_series, parse_timestamp)
from disorient.simulate import ScenarioConfig, simulate_posts


def test_duplicate_ids_first_wins():
    lines = [post_line("42", "2018-03-01T10:00:00Z", "first"),
             post_line("7", "2018-03-01T09:00:00Z"),
             post_line("42", "2018-03-01T11:00:00Z", "second")]
    c = ingest_lines(lines)
    assert len(c) == 2
    assert c.ingest_stats.duplicates_dropped == 1
    assert c.by_id()["42"].text == "first"
    assert [p.id for p in c.posts] == ["7", "42"]


def test_empty_file(tmp_path):
    f = tmp_path / "empty.jsonl"
    f.write_text("")
    c = ingest_jsonl(f)
    assert len(c) == 0
    assert (c.ingest_stats.read, c.ingest_stats.duplicates_dropped,
            c.ingest_stats.malformed_dropped) == (0, 0, 0)


def test_missing_file_is_fatal(tmp_path):
    with pytest.raises(OSError):
        ingest_jsonl(tmp_path / "nope.jsonl")


def test_malformed_lines_are_counted_not_fatal():
    lines = ["{not json", json.dumps([1, 2]), json.dumps({"id": "1"}),
             post_line("2", "2018-01-01T00:00:00Z", retweets=-1),
             post_line("", "2018-01-01T00:00:00Z"),
             post_line("3", "yesterday"),
             post_line("4", "2018-01-01T00:00:00Z")]
    c = ingest_lines(lines)
    assert len(c) == 1
    assert c.ingest_stats.malformed_dropped == 6
    assert c.ingest_stats.read == 7


def test_window_and_language_filters():
    lines = [post_line("a", "2017-12-31T23:59:59Z"),
             post_line("b", "2018-01-01T00:00:00Z"),
             post_line("c", "2018-01-02T00:00:00Z", lang="en"),
             post_line("d", "2018-01-02T00:00:00Z", lang="it"),
             post_line("e", "2019-01-01T00:00:00Z")]
    c = ingest_lines(lines, window=(date(2018, 1, 1), date(2018, 12, 31)), lang="it")
    assert [p.id for p in c.posts] == ["b", "d"]
    assert c.ingest_stats.malformed_dropped == 3


def test_timestamps_normalised_to_utc():
    assert parse_timestamp("2018-01-01T23:30:00-02:00") == datetime(2018, 1, 2, 1, 30, tzinfo=timezone.utc)
    assert parse_timestamp("2018-01-01T10:00:00") == datetime(2018, 1, 1, 10, tzinfo=timezone.utc)


def test_ties_broken_by_id():
    lines = [post_line(i, "2018-01-01T00:00:00Z") for i in ("b", "c", "a")]
    assert [p.id for p in ingest_lines(lines).posts] == ["a", "b", "c"]


def test_interaction_series_definition():
    c = ingest_lines([post_line("1", "2018-05-05T12:00:00Z", likes=2, retweets=3)])
    s = interaction_series(c)
    assert list(s.interactions) == [6] and list(s.tweets) == [1]


def test_interaction_series_spans_and_zero_fills():
    c = ingest_lines([post_line("1", "2018-05-05T00:00:00Z"),
                      post_line("2", "2018-05-06T00:00:00Z")])
    assert len(interaction_series(c)) == 2
    c = ingest_lines([post_line("1", "2018-05-05T00:00:00Z"),
                      post_line("2", "2018-05-08T00:00:00Z")])
    s = interaction_series(c)
    assert list(s.tweets) == [1, 0, 0, 1]
    assert np.all(s.interactions >= s.tweets)


def test_interaction_series_empty():
    with pytest.raises(EmptyInput):
        interaction_series(Corpus(()))


def _series(values):
    d0 = date(2018, 1, 1)
    v = np.asarray(values, dtype=np.int64)
    return InteractionSeries(tuple(d0 + timedelta(days=k) for k in range(len(v))), v, v)


def test_peaks_simple_cases():
    assert detect_peaks(_series([1, 2, 3, 4, 5]), 0.5) == []
    peaks = detect_peaks(_series([1, 10, 1]), 5)
    assert peaks == [(date(2018, 1, 2), 10)]


def _brute_prominence(x):
    """Textbook definition, O(n^2): for each strict local maximum, walk out to the
    nearest strictly higher sample on each side and take the minimum seen."""
    out = {}
    n = len(x)
    i = 1
    while i < n - 1:
        if x[i] > x[i - 1]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                peak = (i + j) // 2
                left = min(x[k] for k in range(peak, -1, -1) if all(x[q] <= x[i] for q in range(k, peak + 1)))
                right = min(x[k] for k in range(peak, n) if all(x[q] <= x[i] for q in range(peak, k + 1)))
                out[peak] = x[i] - max(left, right)
            i = j + 1
        else:
            i += 1
    return out


@given(st.lists(st.integers(1, 50), min_size=3, max_size=40), st.floats(0.5, 30))
def test_peaks_match_bruteforce_prominence(values, thr):
    got = detect_peaks(_series(values), thr)
    proms = _brute_prominence(values)
    expect = sorted(((date(2018, 1, 1) + timedelta(days=i), values[i])
                     for i, p in proms.items() if p >= thr), key=lambda t: (-t[1], t[0]))
    assert got == expect


@given(st.lists(st.integers(0, 50), min_size=1, max_size=30),
       st.integers(0, 5), st.integers(0, 5))
def test_peaks_invariant_to_zero_padding(values, left, right):
    base = detect_peaks(_series(values), 2.0)
    padded = detect_peaks(_series([0] * left + values + [0] * right), 2.0)
    shift = timedelta(days=left)
    assert [(d - shift, v) for d, v in padded] == base


post_lists = st.lists(st.tuples(st.sampled_from("abcdefgh"), st.integers(0, 72),
                                st.integers(0, 5), st.integers(0, 5)), max_size=25)


def _lines(items):
    return [post_line(pid, (datetime(2018, 1, 1) + timedelta(hours=h)).isoformat() + "Z",
                      retweets=r, likes=l) for pid, h, r, l in items]


@given(post_lists)
def test_ingest_idempotent_on_self_concatenation(items):
    lines = _lines(items)
    assert ingest_lines(lines + lines).posts == ingest_lines(lines).posts


@given(post_lists)
def test_stats_and_interaction_sum_invariants(items):
    c = ingest_lines(_lines(items))
    s = c.ingest_stats
    assert s.read == len(c) + s.duplicates_dropped + s.malformed_dropped
    if len(c):
        inter = interaction_series(c)
        assert inter.interactions.sum() == sum(1 + p.likes + p.retweets for p in c.posts)


def test_planted_duplicates_recovered_exactly():
    cfg = ScenarioConfig(days=20, base_rate=30, duplicate_fraction=0.1, seed=4)
    lines, ledger = simulate_posts(cfg)
    c = ingest_lines(lines)
    assert len(c) == ledger.retained
    assert c.ingest_stats.duplicates_dropped == len(ledger.duplicate_ids)
    assert c.ingest_stats.duplicates_dropped > 0


def test_planted_spikes_detected_in_magnitude_order():
    cfg = ScenarioConfig(days=60, base_rate=100, overdispersion=0.01,
                         spikes=((15, 8.0), (30, 20.0), (45, 4.0)), seed=2)
    lines, _ = simulate_posts(cfg)
    inter = interaction_series(ingest_lines(lines))
    assert int(np.argmax(inter.interactions)) == 30
    peaks = detect_peaks(inter, 2.0 * float(np.median(inter.interactions)))
    assert [(d - cfg.start).days for d, _ in peaks] == [30, 15, 45]
