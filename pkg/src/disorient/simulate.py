"""Synthetic post streams and polarity series with known ground truth.

Daily post volumes are negative binomial (mean ``base_rate``, variance
``mean + overdispersion * mean**2``), scaled on spike days. Each day's posts
are split into F, C, U and OOC by a multinomial whose F/C/U part follows the
configured trajectory. Random streams are keyed by ``(seed, replicate,
stream)`` so series, text and duplicates never share draws.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from datetime import date, datetime, time, timedelta, timezone

import numpy as np

from ._io import csv_text
from .classify import CLASS_ORDER, PolarityLabel
from .distest import ALPHAS, NullSpec, basic_test, running_test, running_variance_test
from .errors import ContractViolation
from .polarity import PolaritySeries, pooled

PAPER_P0 = tuple(np.array([0.700, 0.165, 0.136]) / 1.001)
CU_RATIO = 0.165 / (0.165 + 0.136)

_COUNTS, _TEXT, _DUPS = 0, 1, 2


def split_complement(pf, cu_ratio: float = CU_RATIO) -> np.ndarray:
    """(F, C, U) rows from favourable shares, clipped to [0.01, 0.99]."""
    pf = np.clip(np.asarray(pf, dtype=float), 0.01, 0.99)
    rest = 1.0 - pf
    return np.stack([pf, rest * cu_ratio, rest * (1.0 - cu_ratio)], axis=-1)


def shift_favourable(p, delta: float) -> tuple:
    """Move ``delta`` of mass into F, taking it from C and U proportionally."""
    p = np.asarray(p, dtype=float)
    pf = p[0] + delta
    if not 0.0 <= pf <= 1.0:
        raise ContractViolation("shifted favourable share leaves [0, 1]")
    rest = p[1:] / p[1:].sum() * (1.0 - pf) if p[1:].sum() > 0 else np.zeros(2)
    return (float(pf), float(rest[0]), float(rest[1]))


@dataclass(frozen=True)
class TextModel:
    markers: dict = field(default_factory=lambda: {
        c.value: [f"{c.value.lower()}mark{k}" for k in range(8)] for c in CLASS_ORDER})
    markers_per_post: int = 2
    noise_vocab: int = 300
    noise_per_post: int = 6
    mention_prob: float = 0.3
    url_prob: float = 0.2


@dataclass(frozen=True)
class ScenarioConfig:
    days: int = 365
    start: date = date(2018, 1, 1)
    base_rate: float = 400.0
    overdispersion: float = 0.05
    spikes: tuple = ()  # (day index, volume multiplier)
    trajectory: dict = field(default_factory=lambda: {"kind": "constant", "p": list(PAPER_P0)})
    cu_ratio: float = CU_RATIO
    ooc_fraction: float = 0.0
    duplicate_fraction: float = 0.0
    mean_likes: float = 3.0
    mean_retweets: float = 1.0
    text: TextModel = field(default_factory=TextModel)
    seed: int = 0

    def __post_init__(self):
        if self.days < 0 or self.base_rate < 0 or self.overdispersion < 0:
            raise ContractViolation("days, base_rate and overdispersion must be >= 0")
        if not 0.0 <= self.ooc_fraction <= 1.0 or not 0.0 <= self.duplicate_fraction <= 1.0:
            raise ContractViolation("fractions must lie in [0, 1]")
        if self.trajectory.get("kind") not in ("constant", "change-point", "parabolic", "linear"):
            raise ContractViolation(f"unknown trajectory {self.trajectory!r}")
        self.daily_p()  # validates trajectory parameters

    def daily_p(self) -> np.ndarray:
        """True (F, C, U) proportions per day, shape (days, 3)."""
        tr, T = self.trajectory, self.days
        t = np.arange(T, dtype=float)
        kind = tr["kind"]
        if kind == "constant":
            return np.tile(_simplex_vec(tr["p"]), (T, 1))
        if kind == "change-point":
            before, after = _simplex_vec(tr["p_before"]), _simplex_vec(tr["p_after"])
            return np.where((t >= tr["day"])[:, None], after, before)
        if kind == "parabolic":
            peak, top, end = tr["peak_day"], tr["peak_value"], tr["end_value"]
            last = T - 1
            if last == peak:
                raise ContractViolation("parabola peak cannot sit on the last day")
            curv = (top - end) / (last - peak) ** 2
            return split_complement(top - curv * (t - peak) ** 2, self.cu_ratio)
        start, end = tr["start_value"], tr["end_value"]
        frac = t / max(T - 1, 1)
        return split_complement(start + (end - start) * frac, self.cu_ratio)

    def to_json(self) -> str:
        d = asdict(self)
        d["start"] = self.start.isoformat()
        d["spikes"] = [list(s) for s in self.spikes]
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "start" in d:
            d["start"] = date.fromisoformat(d["start"])
        if "spikes" in d:
            d["spikes"] = tuple((int(a), float(b)) for a, b in d["spikes"])
        if "text" in d:
            d["text"] = TextModel(**d["text"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ContractViolation(f"unknown scenario keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))


def _simplex_vec(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (3,) or np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-6):
        raise ContractViolation(f"not a probability 3-vector: {p}")
    return p / p.sum()


def paper_preset(seed: int = 0, **overrides) -> ScenarioConfig:
    """Year-long scenario shaped like the 2018 study: rise of the
    favourable share to a peak in late May, then a 7-point fall by December,
    with volume spikes on Jun 22, Aug 4 and Sep 5."""
    cfg = ScenarioConfig(
        days=365,
        start=date(2018, 1, 1),
        base_rate=900.0,
        overdispersion=0.05,
        spikes=((172, 8.0), (215, 12.0), (247, 5.0)),
        trajectory={"kind": "parabolic", "peak_day": 139, "peak_value": 0.76, "end_value": 0.69},
        ooc_fraction=0.578,
        duplicate_fraction=0.02,
        seed=seed,
    )
    return replace(cfg, **overrides)


@dataclass
class ScenarioLedger:
    start: date
    p: np.ndarray  # (days, 3) true F, C, U proportions
    volume_mean: np.ndarray
    counts: np.ndarray  # (days, 4) realized F, C, U, OOC counts
    spikes: tuple
    trajectory: dict
    labels: dict = field(default_factory=dict)  # post id -> PolarityLabel
    duplicate_ids: list = field(default_factory=list)
    retained: int | None = None

    @property
    def n(self) -> np.ndarray:
        return self.counts[:, :3].sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "start": self.start.isoformat(),
            "p": self.p.tolist(),
            "volume_mean": self.volume_mean.tolist(),
            "counts": self.counts.tolist(),
            "spikes": [list(s) for s in self.spikes],
            "trajectory": self.trajectory,
            "duplicate_ids": self.duplicate_ids,
            "retained": self.retained,
        }


def _rng(cfg: ScenarioConfig, replicate: int, stream: int):
    return np.random.default_rng([cfg.seed, replicate, stream])


def _volume_means(cfg: ScenarioConfig) -> np.ndarray:
    mu = np.full(cfg.days, float(cfg.base_rate))
    for day, mult in cfg.spikes:
        if 0 <= day < cfg.days:
            mu[day] *= mult
    return mu


def _draw_counts(cfg: ScenarioConfig, replicate: int = 0):
    rng = _rng(cfg, replicate, _COUNTS)
    mu = _volume_means(cfg)
    if cfg.overdispersion > 0:
        r = 1.0 / cfg.overdispersion
        vol = rng.negative_binomial(r, r / (r + mu))
    else:
        vol = rng.poisson(mu)
    p = cfg.daily_p()
    probs = np.column_stack([p * (1.0 - cfg.ooc_fraction), np.full(cfg.days, cfg.ooc_fraction)])
    counts = np.array([rng.multinomial(v, q) for v, q in zip(vol, probs)],
                      dtype=np.int64).reshape(-1, 4)
    return counts, mu, p


def simulate_series(cfg: ScenarioConfig, replicate: int = 0):
    """Daily F/C/U counts plus the ledger that generated them."""
    counts, mu, p = _draw_counts(cfg, replicate)
    series = PolaritySeries.from_counts(cfg.start, counts[:, :3])
    ledger = ScenarioLedger(cfg.start, p, mu, counts, tuple(cfg.spikes), dict(cfg.trajectory))
    return series, ledger


def _post_text(rng, label: PolarityLabel, tm: TextModel) -> str:
    marks = tm.markers.get(label.value, [])
    words = []
    if marks and tm.markers_per_post:
        words += [marks[i] for i in rng.integers(0, len(marks), tm.markers_per_post)]
    words += [f"w{i}" for i in rng.integers(0, tm.noise_vocab, tm.noise_per_post)]
    words = [words[i] for i in rng.permutation(len(words))]
    if rng.random() < tm.mention_prob:
        words.insert(0, f"@user{int(rng.integers(0, 1000))}")
    if rng.random() < tm.url_prob:
        words.append(f"https://t.co/{int(rng.integers(0, 10**8)):08d}")
    return " ".join(words)


def simulate_posts(cfg: ScenarioConfig, replicate: int = 0):
    """Generate a JSONL post stream with planted duplicates.

    Returns ``(lines, ledger)``. ``ledger.labels`` holds the true label of
    every unique post id and ``ledger.retained`` the number of posts that
    survive first-seen deduplication.
    """
    counts, mu, p = _draw_counts(cfg, replicate)
    rng = _rng(cfg, replicate, _TEXT)
    label_cols = CLASS_ORDER  # counts columns are F, C, U, OOC
    records, labels = [], {}
    seq = 0
    for d in range(cfg.days):
        day = cfg.start + timedelta(days=d)
        day_labels = np.repeat(np.arange(4), counts[d])
        rng.shuffle(day_labels)
        secs = np.sort(rng.integers(0, 86400, len(day_labels)))
        base = datetime.combine(day, time(0), tzinfo=timezone.utc)
        for k, s in zip(day_labels, secs):
            lab = label_cols[k]
            pid = f"{seq:09d}"
            seq += 1
            labels[pid] = lab
            records.append({
                "id": pid,
                "created_at": (base + timedelta(seconds=int(s))).strftime("%Y-%m-%dT%H:%M:%SZ"),
                "text": _post_text(rng, lab, cfg.text),
                "retweets": int(rng.geometric(1.0 / (1.0 + cfg.mean_retweets)) - 1),
                "likes": int(rng.geometric(1.0 / (1.0 + cfg.mean_likes)) - 1),
            })
    dup_ids = []
    inserts: dict[int, list] = {}  # slot j -> copies placed just before record j
    if cfg.duplicate_fraction > 0 and records:
        drng = _rng(cfg, replicate, _DUPS)
        n_dup = int(round(cfg.duplicate_fraction * len(records)))
        picks = np.sort(drng.choice(len(records), size=n_dup, replace=False))
        for i in picks:
            # a re-scraped copy: same id, later position, stale engagement counts
            rec = dict(records[i], likes=records[i]["likes"] + 1)
            slot = int(drng.integers(i + 1, len(records) + 1))
            inserts.setdefault(slot, []).append(rec)
            dup_ids.append(rec["id"])
    lines = []
    for j in range(len(records) + 1):
        lines.extend(json.dumps(r, ensure_ascii=False) for r in inserts.get(j, ()))
        if j < len(records):
            lines.append(json.dumps(records[j], ensure_ascii=False))
    ledger = ScenarioLedger(cfg.start, p, mu, counts, tuple(cfg.spikes), dict(cfg.trajectory),
                            labels, dup_ids, len(records))
    return lines, ledger


def labels_csv(labels: dict) -> str:
    return csv_text(("post_id", "label"), [(k, v.value) for k, v in labels.items()])


# --- calibration and power -------------------------------------------------

TESTS = ("basic", "running", "variance")


def run_test(name: str, series: PolaritySeries, alphas=ALPHAS, w: int = 15, **kw):
    """Run one of the three daily tests with its default null."""
    if name == "basic":
        keep = series.counts[~series.zero_n]
        return basic_test(series, NullSpec(tuple(pooled(keep))), alphas, **kw)
    if name == "running":
        return running_test(series, w, alphas, **kw)
    if name == "variance":
        return running_variance_test(series, w, None, alphas)
    raise ContractViolation(f"unknown test {name!r}")


def _mean_ci(x):
    x = np.asarray(x, dtype=float)
    half = 1.96 * x.std(ddof=1) / np.sqrt(len(x)) if len(x) > 1 else np.nan
    return float(x.mean()), (float(x.mean() - half), float(x.mean() + half))


def calibrate_type1(test: str, cfg: ScenarioConfig, replicates: int = 200,
                    alphas=ALPHAS, **test_kw) -> dict:
    """Mean fraction of tested days flagged under a stationary null.

    Returns ``{alpha: {"mean": m, "ci95": (lo, hi), "per_replicate": [...]}}``.
    """
    if cfg.trajectory.get("kind") != "constant":
        raise ContractViolation("type-I calibration needs a constant trajectory")
    fractions = {a: [] for a in alphas}
    for r in range(replicates):
        series, _ = simulate_series(cfg, r)
        outcomes, summ = run_test(test, series, alphas, **test_kw)
        for a in alphas:
            fractions[a].append(summ.significant[a] / max(summ.tested_days, 1))
    out = {}
    for a in alphas:
        m, ci = _mean_ci(fractions[a])
        out[a] = {"mean": m, "ci95": ci, "per_replicate": fractions[a]}
    return out


def planted_change_day(cfg: ScenarioConfig):
    tr = cfg.trajectory
    if tr.get("kind") == "change-point":
        return int(tr["day"])
    if tr.get("kind") == "parabolic":
        return int(tr["peak_day"])
    return None


def power_study(test: str, cfg: ScenarioConfig, replicates: int = 100, alphas=ALPHAS,
                k: int = 15, **test_kw) -> dict:
    """Flag rates under an alternative with a planted change at day ``c``.

    For each alpha: ``flagged_fraction`` (all tested days), ``window_power``
    (share of tested days in ``[c, c + k)`` that are flagged),
    ``detected`` (share of replicates with at least one flag in that window)
    and ``localization`` (share of all flags that fall in that window).
    """
    c = planted_change_day(cfg)
    if c is None:
        raise ContractViolation("power study needs a planted change")
    acc = {a: {"flagged_fraction": [], "window_power": [], "detected": [], "localization": []}
           for a in alphas}
    for r in range(replicates):
        series, _ = simulate_series(cfg, r)
        outcomes, summ = run_test(test, series, alphas, **test_kw)
        idx = np.array([(o.date - cfg.start).days for o in outcomes])
        inwin = (idx >= c) & (idx < c + k)
        for a in alphas:
            flags = np.array([o.flags[a] for o in outcomes], dtype=bool)
            total = int(flags.sum())
            acc[a]["flagged_fraction"].append(total / max(len(outcomes), 1))
            acc[a]["window_power"].append(flags[inwin].mean() if inwin.any() else np.nan)
            acc[a]["detected"].append(float(flags[inwin].any()))
            acc[a]["localization"].append(flags[inwin].sum() / total if total else np.nan)
    out = {}
    for a in alphas:
        out[a] = {}
        for key, vals in acc[a].items():
            vals = np.asarray(vals, dtype=float)
            vals = vals[~np.isnan(vals)]
            m, ci = _mean_ci(vals) if len(vals) else (float("nan"), (float("nan"),) * 2)
            out[a][key] = {"mean": m, "ci95": ci}
    return out
