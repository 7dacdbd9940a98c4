"""Inter-annotator agreement: Fleiss' kappa and an exact accuracy interval."""
from __future__ import annotations

import csv

import numpy as np
from scipy import stats

from .errors import ContractViolation


def as_rating_matrix(m) -> np.ndarray:
    """Validate an items x categories count matrix with constant row sums."""
    a = np.asarray(m)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ContractViolation("rating matrix must be a nonempty 2-D array")
    if not np.all(np.isfinite(a)) or np.any(a < 0) or np.any(a != np.round(a)):
        raise ContractViolation("ratings must be nonnegative integer counts")
    a = a.astype(np.int64)
    sums = a.sum(axis=1)
    if np.any(sums != sums[0]):
        raise ContractViolation("every item needs the same number of raters")
    if sums[0] < 2:
        raise ContractViolation("at least 2 raters per item are required")
    return a


def fleiss_kappa(m) -> float:
    """Fleiss' kappa for a matrix of per-item category counts.

    Returns 1.0 when chance agreement is already perfect (every rating falls
    in a single category), where the ratio is otherwise 0/0.
    """
    a = as_rating_matrix(m)
    n_items, _ = a.shape
    n = int(a[0].sum())
    p_item = ((a * a).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_item.mean()
    p_cat = a.sum(axis=0) / (n_items * n)
    p_e = float((p_cat ** 2).sum())
    if p_e >= 1.0:
        return 1.0
    return float((p_bar - p_e) / (1.0 - p_e))


def read_rating_csv(path) -> np.ndarray:
    """One row per item, one column per category; a header row is optional."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows and not all(c.strip().lstrip("-").isdigit() for c in rows[0]):
        rows = rows[1:]
    try:
        return as_rating_matrix([[int(c) for c in r] for r in rows])
    except ValueError as exc:
        raise ContractViolation(str(exc)) from None


def accuracy_ci(correct: int, total: int, level: float = 0.95):
    """Clopper-Pearson interval for a binomial proportion.

    Returns ``(point, lower, upper)``.
    """
    if total < 1:
        raise ContractViolation("total must be >= 1")
    if not 0 <= correct <= total:
        raise ContractViolation("need 0 <= correct <= total")
    if not 0 < level < 1:
        raise ContractViolation("level must lie in (0, 1)")
    tail = (1.0 - level) / 2.0
    point = correct / total
    lower = 0.0 if correct == 0 else float(stats.beta.ppf(tail, correct, total - correct + 1))
    upper = 1.0 if correct == total else float(stats.beta.ppf(1 - tail, correct + 1, total - correct))
    return point, min(lower, point), max(upper, point)
