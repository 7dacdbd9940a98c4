"""Daily polarity counts and pooled yearly summaries."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from ._io import csv_text, fmt, read_csv_rows
from .classify import PolarityLabel
from .errors import ContractViolation, InsufficientData
from .ingest import Corpus, day_range

POLAR = (PolarityLabel.F, PolarityLabel.C, PolarityLabel.U)
MIN_BOOT_REPS = 1000
MIN_DAYS = 30


@dataclass(frozen=True)
class DailyPolarity:
    date: date
    nF: int
    nC: int
    nU: int

    @property
    def n(self) -> int:
        return self.nF + self.nC + self.nU

    @property
    def proportions(self):
        n = self.n
        if n == 0:
            return None
        return self.nF / n, self.nC / n, self.nU / n


@dataclass(frozen=True)
class PolaritySeries:
    """Contiguous daily (F, C, U) counts; ``counts`` has shape (days, 3)."""

    dates: tuple
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64).reshape(-1, 3)
        if len(c) != len(self.dates):
            raise ContractViolation("one count row per date required")
        if np.any(c < 0):
            raise ContractViolation("counts must be nonnegative")
        for a, b in zip(self.dates, self.dates[1:]):
            if (b - a).days != 1:
                raise ContractViolation(f"dates not contiguous at {a}..{b}")
        object.__setattr__(self, "counts", c)

    def __len__(self):
        return len(self.dates)

    def __getitem__(self, i) -> DailyPolarity:
        return DailyPolarity(self.dates[i], *(int(v) for v in self.counts[i]))

    @property
    def n(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def zero_n(self) -> np.ndarray:
        return self.n == 0

    @property
    def proportions(self) -> np.ndarray:
        """Daily proportions, NaN on zero-n days."""
        n = self.n.astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n[:, None] > 0, self.counts / n[:, None], np.nan)

    @classmethod
    def from_counts(cls, start: date, counts) -> "PolaritySeries":
        counts = np.asarray(counts).reshape(-1, 3)
        if len(counts) == 0:
            return cls((), counts)
        end = date.fromordinal(start.toordinal() + len(counts) - 1)
        return cls(tuple(day_range(start, end)), counts)

    def to_csv(self, comment=None) -> str:
        rows = []
        for d, c, p in zip(self.dates, self.counts, self.proportions):
            props = ["" if np.isnan(v) else fmt(v) for v in p]
            rows.append([d.isoformat(), *map(int, c), int(c.sum()), *props])
        return csv_text(("date", "nF", "nC", "nU", "n", "pF", "pC", "pU"), rows, comment)

    @classmethod
    def read_csv(cls, path) -> "PolaritySeries":
        rows = read_csv_rows(path)
        try:
            dates = tuple(date.fromisoformat(r["date"]) for r in rows)
            counts = np.array([[int(r["nF"]), int(r["nC"]), int(r["nU"])] for r in rows],
                              dtype=np.int64).reshape(-1, 3)
        except (KeyError, ValueError) as exc:
            raise ContractViolation(f"bad polarity CSV {path}: {exc}") from None
        return cls(dates, counts)


def aggregate(corpus: Corpus, predictions, span: tuple[date, date] | None = None) -> PolaritySeries:
    """Count F/C/U posts per day; OOC and unlabeled posts are not counted.

    ``predictions`` maps post id to label. ``span`` defaults to the corpus
    date range.
    """
    by_id = corpus.by_id()
    unknown = sorted(pid for pid in predictions if pid not in by_id)
    if unknown:
        shown = ", ".join(unknown[:10]) + (" ..." if len(unknown) > 10 else "")
        raise ContractViolation(f"{len(unknown)} prediction ids not in corpus: {shown}")
    if span is None:
        if not corpus.posts:
            return PolaritySeries((), np.zeros((0, 3)))
        span = (corpus.posts[0].day, corpus.posts[-1].day)
    days = day_range(*span)
    counts = np.zeros((len(days), 3), dtype=np.int64)
    col = {lab: k for k, lab in enumerate(POLAR)}
    for pid, lab in predictions.items():
        lab = PolarityLabel.parse(lab) if isinstance(lab, str) else lab
        if lab not in col:
            continue
        k = (by_id[pid].day - span[0]).days
        if 0 <= k < len(days):
            counts[k, col[lab]] += 1
    return PolaritySeries(tuple(days), counts)


@dataclass(frozen=True)
class YearlySummary:
    proportions: tuple  # pooled (pF, pC, pU), summing to 1
    ci_lower: tuple
    ci_upper: tuple
    daily_pf_variance: float
    boot_reps: int
    seed: int
    n_days: int
    n_posts: int
    ci_method: str = "day-level bootstrap, percentile 95%"

    @property
    def hesitancy(self) -> float:
        return 1.0 - self.proportions[0]

    def to_dict(self) -> dict:
        names = ("F", "C", "U")
        return {
            "proportions": dict(zip(names, self.proportions)),
            "ci95": {k: [lo, hi] for k, lo, hi in zip(names, self.ci_lower, self.ci_upper)},
            "hesitancy": self.hesitancy,
            "daily_pF_variance": self.daily_pf_variance,
            "boot_reps": self.boot_reps,
            "seed": self.seed,
            "n_days": self.n_days,
            "n_posts": self.n_posts,
            "ci_method": self.ci_method,
        }


def pooled(counts) -> np.ndarray:
    tot = np.asarray(counts).sum(axis=0).astype(float)
    p = tot / tot.sum()
    return p / p.sum()


def bootstrap_pooled(counts, reps: int, seed: int) -> np.ndarray:
    """Pooled proportions for ``reps`` day-level bootstrap resamples.

    Replicate ``r`` draws from ``default_rng([seed, r])``, so each replicate
    depends only on the master seed and its own index.
    """
    counts = np.asarray(counts, dtype=float)
    D = len(counts)
    out = np.empty((reps, counts.shape[1]))
    for r in range(reps):
        idx = np.random.default_rng([seed, r]).integers(0, D, size=D)
        tot = counts[idx].sum(axis=0)
        out[r] = tot / tot.sum()
    return out


def yearly_summary(series: PolaritySeries, boot_reps: int = MIN_BOOT_REPS,
                   seed: int = 0) -> YearlySummary:
    keep = series.counts[~series.zero_n]
    if len(keep) < MIN_DAYS:
        raise InsufficientData(f"{len(keep)} non-zero days, need {MIN_DAYS}")
    if boot_reps < MIN_BOOT_REPS:
        raise ContractViolation(f"boot_reps must be >= {MIN_BOOT_REPS}")
    p = pooled(keep)
    boots = bootstrap_pooled(keep, boot_reps, seed)
    lo = np.percentile(boots, 2.5, axis=0)
    hi = np.percentile(boots, 97.5, axis=0)
    # percentile bounds can miss the point estimate for tiny or odd samples
    lo, hi = np.minimum(lo, p), np.maximum(hi, p)
    pf = keep[:, 0] / keep.sum(axis=1)
    return YearlySummary(
        tuple(map(float, p)), tuple(map(float, lo)), tuple(map(float, hi)),
        float(np.var(pf, ddof=1)), boot_reps, seed, len(keep), int(keep.sum()))
