"""Loading, validating and deduplicating raw posts; daily interaction counts."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone

import numpy as np
from scipy.signal import find_peaks

from ._io import csv_text
from .errors import EmptyInput

log = logging.getLogger(__name__)

REQUIRED_FIELDS = ("id", "created_at", "text", "retweets", "likes")


@dataclass(frozen=True)
class RawPost:
    id: str
    timestamp: datetime
    text: str
    retweets: int
    likes: int

    @property
    def day(self) -> date:
        return self.timestamp.date()


@dataclass(frozen=True)
class IngestStats:
    read: int = 0
    duplicates_dropped: int = 0
    malformed_dropped: int = 0


@dataclass(frozen=True)
class Corpus:
    posts: tuple[RawPost, ...]
    ingest_stats: IngestStats = field(default_factory=IngestStats)

    def __len__(self):
        return len(self.posts)

    def by_id(self) -> dict[str, RawPost]:
        return {p.id: p for p in self.posts}


@dataclass(frozen=True)
class InteractionSeries:
    dates: tuple[date, ...]
    tweets: np.ndarray
    interactions: np.ndarray

    def __len__(self):
        return len(self.dates)

    def to_csv(self, comment=None) -> str:
        rows = [(d.isoformat(), int(t), int(i))
                for d, t, i in zip(self.dates, self.tweets, self.interactions)]
        return csv_text(("date", "tweets", "interactions"), rows, comment)


def parse_timestamp(value: str) -> datetime:
    """Parse an ISO-8601 timestamp to an aware UTC datetime.

    Naive timestamps are taken to be UTC already.
    """
    if not isinstance(value, str):
        raise ValueError("created_at must be a string")
    s = value.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _count(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ValueError(f"expected a nonnegative integer, got {value!r}")
    return value


def parse_record(obj, lang: str | None = None) -> RawPost:
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    missing = [k for k in REQUIRED_FIELDS if k not in obj]
    if missing:
        raise ValueError(f"missing fields {missing}")
    post_id = obj["id"]
    if not isinstance(post_id, str) or not post_id:
        raise ValueError("id must be a nonempty string")
    if not isinstance(obj["text"], str):
        raise ValueError("text must be a string")
    if lang is not None and obj.get("lang") is not None and obj["lang"] != lang:
        raise ValueError(f"lang {obj['lang']!r} != {lang!r}")
    return RawPost(
        id=post_id,
        timestamp=parse_timestamp(obj["created_at"]),
        text=obj["text"],
        retweets=_count(obj["retweets"]),
        likes=_count(obj["likes"]),
    )


def ingest_lines(lines, window: tuple[date, date] | None = None,
                 lang: str | None = None) -> Corpus:
    """Build a Corpus from an iterable of JSONL lines.

    The first occurrence of an id wins. Malformed records, records in
    another language and records outside ``window`` (inclusive UTC dates)
    are skipped and counted as malformed.
    """
    seen: dict[str, RawPost] = {}
    read = dups = bad = 0
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        read += 1
        try:
            post = parse_record(json.loads(line), lang=lang)
        except (ValueError, TypeError) as exc:
            log.debug("line %d dropped: %s", lineno, exc)
            bad += 1
            continue
        if window is not None and not (window[0] <= post.day <= window[1]):
            bad += 1
            continue
        if post.id in seen:
            dups += 1
            continue
        seen[post.id] = post
    posts = tuple(sorted(seen.values(), key=lambda p: (p.timestamp, p.id)))
    return Corpus(posts, IngestStats(read, dups, bad))


def ingest_jsonl(path, window=None, lang=None) -> Corpus:
    # OSError propagates: an unreadable file is fatal.
    with open(path, encoding="utf-8", errors="replace") as fh:
        return ingest_lines(fh, window=window, lang=lang)


def day_range(start: date, end: date) -> list[date]:
    return [start + timedelta(days=k) for k in range((end - start).days + 1)]


def interaction_series(corpus: Corpus) -> InteractionSeries:
    if not corpus.posts:
        raise EmptyInput("interaction series needs at least one post")
    first, last = corpus.posts[0].day, corpus.posts[-1].day
    days = day_range(first, last)
    tweets = np.zeros(len(days), dtype=np.int64)
    inter = np.zeros(len(days), dtype=np.int64)
    for p in corpus.posts:
        k = (p.day - first).days
        tweets[k] += 1
        inter[k] += 1 + p.likes + p.retweets
    return InteractionSeries(tuple(days), tweets, inter)


def detect_peaks(series: InteractionSeries, min_prominence: float):
    """Return ``(date, interactions)`` for prominent local maxima.

    Prominence is the height of a peak above the higher of its two flanking
    minima, where each flank extends to the nearest strictly higher point
    (or the series edge). Leading and trailing zero days are trimmed first,
    so padding the series with empty days never changes the answer.
    Results are sorted by interactions, largest first.
    """
    if min_prominence <= 0:
        raise ValueError("min_prominence must be positive")
    x = np.asarray(series.interactions, dtype=float)
    nz = np.flatnonzero(x)
    if nz.size < 3:
        return []
    lo, hi = nz[0], nz[-1] + 1
    idx, _ = find_peaks(x[lo:hi], prominence=min_prominence)
    found = [(series.dates[lo + i], int(x[lo + i])) for i in idx]
    return sorted(found, key=lambda t: (-t[1], t[0]))
