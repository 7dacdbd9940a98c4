"""Four-way polarity classification: linear SVM, naive Bayes and k-NN.

Every model predicts by argmax over per-class scores. Ties always resolve to
the earliest class in the fixed order F < C < U < OOC, because per-class
metrics are sensitive to how ties are broken.
"""
from __future__ import annotations

import enum
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation, DegenerateTraining, StratificationError
from .textprep import FeatureVector


class PolarityLabel(enum.Enum):
    F = "F"
    C = "C"
    U = "U"
    OOC = "OOC"

    @property
    def rank(self) -> int:
        return CLASS_ORDER.index(self)

    @classmethod
    def parse(cls, code: str) -> "PolarityLabel":
        try:
            return cls(code.strip().upper())
        except ValueError:
            raise ContractViolation(f"unknown label {code!r}") from None


CLASS_ORDER = (PolarityLabel.F, PolarityLabel.C, PolarityLabel.U, PolarityLabel.OOC)
CLASS_NAMES = {
    PolarityLabel.F: "Favourable",
    PolarityLabel.C: "Contrary",
    PolarityLabel.U: "Undecided",
    PolarityLabel.OOC: "Out of Context",
}


@dataclass(frozen=True)
class LabeledPost:
    post_id: str
    features: FeatureVector
    label: PolarityLabel


@dataclass
class LinearModel:
    algorithm: str
    classes: tuple
    weights: np.ndarray  # (n_classes, |V|)
    bias: np.ndarray
    config: dict = field(default_factory=dict)
    seed: int | None = None
    vocab_ref: str | None = None

    def scores(self, x: FeatureVector) -> np.ndarray:
        return self.weights[:, x.indices] @ x.counts + self.bias

    def predict(self, x: FeatureVector) -> PolarityLabel:
        # np.argmax returns the first maximum; classes are kept in CLASS_ORDER
        return self.classes[int(np.argmax(self.scores(x)))]

    def predict_many(self, xs) -> list[PolarityLabel]:
        if not xs:
            return []
        s = np.asarray(to_csr(xs, self.weights.shape[1]) @ self.weights.T) + self.bias
        return [self.classes[i] for i in np.argmax(s, axis=1)]

    def to_json(self) -> str:
        weights = {}
        for k, c in enumerate(self.classes):
            nz = np.flatnonzero(self.weights[k])
            weights[c.value] = {str(int(j)): float(self.weights[k, j]) for j in nz}
        doc = {
            "algorithm": self.algorithm,
            "vocab_ref": self.vocab_ref,
            "classes": [c.value for c in self.classes],
            "dim": int(self.weights.shape[1]),
            "weights": weights,
            "bias": [float(b) for b in self.bias],
            "config": self.config,
            "seed": self.seed,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "LinearModel":
        doc = json.loads(text)
        classes = tuple(PolarityLabel(c) for c in doc["classes"])
        W = np.zeros((len(classes), doc["dim"]))
        for k, c in enumerate(classes):
            for j, v in doc["weights"].get(c.value, {}).items():
                W[k, int(j)] = v
        return cls(doc["algorithm"], classes, W, np.array(doc["bias"], dtype=float),
                   doc.get("config", {}), doc.get("seed"), doc.get("vocab_ref"))


def to_csr(xs, dim: int) -> sp.csr_matrix:
    indptr = np.zeros(len(xs) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([x.nnz for x in xs])
    indices = np.concatenate([x.indices for x in xs]) if xs else np.array([], np.int64)
    data = np.concatenate([x.counts for x in xs]) if xs else np.array([])
    return sp.csr_matrix((data, indices, indptr), shape=(len(xs), dim))


def _prepare(data):
    """Deduplicate by post_id (first wins) and check class coverage."""
    seen, uniq = set(), []
    for d in data:
        if d.post_id not in seen:
            seen.add(d.post_id)
            uniq.append(d)
    present = {d.label for d in uniq}
    if len(present) < 2:
        raise DegenerateTraining(f"need at least 2 classes, got {len(present)}")
    dims = {d.features.dim for d in uniq}
    if len(dims) != 1:
        raise ContractViolation("feature vectors come from different vocabularies")
    classes = tuple(c for c in CLASS_ORDER if c in present)
    return uniq, classes, dims.pop()


def svm_objective(model: LinearModel, data, reg: float) -> float:
    """Regularized one-vs-rest hinge objective (bias regularized as a feature)."""
    X = to_csr([d.features for d in data], model.weights.shape[1])
    S = np.asarray(X @ model.weights.T) + model.bias
    Y = np.array([[1.0 if d.label == c else -1.0 for c in model.classes] for d in data])
    hinge = np.maximum(0.0, 1.0 - Y * S).mean(axis=0).sum()
    sq = (model.weights ** 2).sum() + (model.bias ** 2).sum()
    return 0.5 * reg * sq + hinge


def train_svm(data, epochs: int = 10, reg: float = 1e-4, seed: int = 0,
              trace: list | None = None) -> LinearModel:
    """One-vs-rest linear SVM trained with Pegasos subgradient steps.

    Step size at update ``t`` is ``1 / (reg * t)``. The bias is handled as a
    constant feature, so it is regularized along with the weights. All
    classes share the same step schedule, which lets a single scale factor
    carry the shrinkage step for the whole weight matrix.

    If ``trace`` is a list, the weights after each epoch are appended to it.
    """
    if reg <= 0:
        raise ValueError("reg must be positive")
    uniq, classes, dim = _prepare(data)
    K, m = len(classes), len(uniq)
    X = to_csr([d.features for d in uniq], dim)
    Y = np.array([[1.0 if d.label == c else -1.0 for c in classes] for d in uniq])
    V = np.zeros((K, dim + 1))  # last column is the bias feature
    scale = 1.0
    rng = np.random.default_rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(m):
            t += 1
            eta = 1.0 / (reg * t)
            lo, hi = X.indptr[i], X.indptr[i + 1]
            idx = np.append(X.indices[lo:hi], dim)
            val = np.append(X.data[lo:hi], 1.0)
            margin = Y[i] * (scale * (V[:, idx] @ val))
            shrink = 1.0 - eta * reg
            if shrink <= 0.0:
                V[:] = 0.0
                scale = 1.0
            else:
                scale *= shrink
            viol = margin < 1.0
            if viol.any():
                V[np.ix_(viol, idx)] += (eta / scale) * np.outer(Y[i, viol], val)
            if scale < 1e-9:
                V *= scale
                scale = 1.0
        if trace is not None:
            W = scale * V
            trace.append((W[:, :dim].copy(), W[:, dim].copy()))
    W = scale * V
    config = {"epochs": epochs, "reg": reg}
    return LinearModel("svm", classes, W[:, :dim].copy(), W[:, dim].copy(), config, seed)


def train_nb(data, laplace_alpha: float = 1.0) -> LinearModel:
    """Multinomial naive Bayes expressed as a linear model.

    weights are log P(term | class) with add-alpha smoothing; bias is the
    log class prior.
    """
    if laplace_alpha <= 0:
        raise ValueError("laplace_alpha must be positive")
    uniq, classes, dim = _prepare(data)
    X = to_csr([d.features for d in uniq], dim)
    labels = np.array([classes.index(d.label) for d in uniq])
    W = np.empty((len(classes), dim))
    bias = np.empty(len(classes))
    for k in range(len(classes)):
        rows = labels == k
        term = np.asarray(X[rows].sum(axis=0)).ravel()
        W[k] = np.log(term + laplace_alpha) - np.log(term.sum() + laplace_alpha * dim)
        bias[k] = math.log(rows.sum() / len(uniq))
    return LinearModel("nb", classes, W, bias, {"laplace_alpha": laplace_alpha})


def _vote(labels) -> PolarityLabel:
    tally = Counter(labels)
    best = max(tally.values())
    return min((c for c in tally if tally[c] == best), key=lambda c: c.rank)


def _cosine(X: sp.csr_matrix, q: FeatureVector) -> np.ndarray:
    num = np.asarray(X[:, q.indices] @ q.counts).ravel()
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    qn = math.sqrt(float(q.counts @ q.counts))
    den = norms * qn
    out = np.zeros(X.shape[0])
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def predict_knn(train, query: FeatureVector, k: int = 5) -> PolarityLabel:
    """Majority label among the ``k`` most cosine-similar training posts.

    Equal similarities keep training order; vote ties go to the earlier
    class in the fixed order.
    """
    if k < 1 or k % 2 == 0:
        raise ContractViolation("k must be a positive odd integer")
    if not train:
        raise ContractViolation("empty training set")
    X = to_csr([d.features for d in train], query.dim)
    sims = _cosine(X, query)
    order = np.argsort(-sims, kind="stable")[:k]
    return _vote(train[i].label for i in order)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    per_class: dict
    accuracy: float
    macro: ClassMetrics
    weighted: ClassMetrics

    def to_dict(self) -> dict:
        return {
            "per_class": {c.value: asdict(m) for c, m in self.per_class.items()},
            "accuracy": self.accuracy,
            "macro": asdict(self.macro),
            "weighted": asdict(self.weighted),
        }

    def table(self) -> str:
        """Plain-text table with metrics rounded to two decimals."""
        lines = [f"{'':16s}{'precision':>10s}{'recall':>8s}{'f1':>8s}{'support':>9s}"]
        for c, m in self.per_class.items():
            lines.append(f"{CLASS_NAMES[c]:16s}{m.precision:10.2f}{m.recall:8.2f}"
                         f"{m.f1:8.2f}{m.support:9d}")
        n = self.macro.support
        lines.append(f"{'accuracy':16s}{'':18s}{self.accuracy:8.2f}{n:9d}")
        for name, m in (("macro avg", self.macro), ("weighted avg", self.weighted)):
            lines.append(f"{name:16s}{m.precision:10.2f}{m.recall:8.2f}{m.f1:8.2f}{n:9d}")
        return "\n".join(lines)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def support_weighted_mean(values, supports) -> float:
    values = np.asarray(values, dtype=float)
    supports = np.asarray(supports, dtype=float)
    return float(values @ supports / supports.sum())


def evaluate(predictions, truth) -> EvalReport:
    if len(predictions) != len(truth):
        raise ContractViolation(
            f"{len(predictions)} predictions vs {len(truth)} truth labels")
    if not truth:
        raise ContractViolation("nothing to evaluate")
    classes = [c for c in CLASS_ORDER if c in set(truth) | set(predictions)]
    pairs = Counter(zip(predictions, truth))
    per = {}
    for c in classes:
        tp = pairs[(c, c)]
        pred_c = sum(v for (p, _), v in pairs.items() if p == c)
        true_c = sum(v for (_, t), v in pairs.items() if t == c)
        prec = tp / pred_c if pred_c else 0.0
        rec = tp / true_c if true_c else 0.0
        per[c] = ClassMetrics(prec, rec, f1_score(prec, rec), true_c)
    n = len(truth)
    acc = sum(pairs[(c, c)] for c in classes) / n
    ms = list(per.values())
    sup = [m.support for m in ms]
    macro = ClassMetrics(float(np.mean([m.precision for m in ms])),
                         float(np.mean([m.recall for m in ms])),
                         float(np.mean([m.f1 for m in ms])), n)
    weighted = ClassMetrics(support_weighted_mean([m.precision for m in ms], sup),
                            support_weighted_mean([m.recall for m in ms], sup),
                            support_weighted_mean([m.f1 for m in ms], sup), n)
    return EvalReport(per, acc, macro, weighted)


ALGORITHMS = ("svm", "nb", "knn")
DEFAULT_PARAMS = {
    "svm": {"epochs": 10, "reg": 1e-4},
    "nb": {"laplace_alpha": 1.0},
    "knn": {"k": 5},
}


def stratified_folds(data, folds: int, seed: int) -> list[int]:
    """Assign each item a fold so every class is spread evenly across folds."""
    if folds < 2:
        raise ContractViolation("folds must be >= 2")
    by_class: dict = {}
    for i, d in enumerate(data):
        by_class.setdefault(d.label, []).append(i)
    rng = np.random.default_rng(seed)
    assign = [0] * len(data)
    offset = 0
    for c in CLASS_ORDER:
        members = by_class.get(c, [])
        if not members:
            continue
        if len(members) < folds:
            raise StratificationError(
                f"class {c.value} has {len(members)} members, fewer than {folds} folds")
        for j, i in enumerate(rng.permutation(members)):
            assign[int(i)] = (j + offset) % folds
        offset += len(members)
    return assign


def fit_predict(algorithm: str, train, test, seed: int = 0, params=None):
    p = dict(DEFAULT_PARAMS[algorithm], **(params or {}))
    if algorithm == "svm":
        return train_svm(train, p["epochs"], p["reg"], seed).predict_many(
            [d.features for d in test])
    if algorithm == "nb":
        return train_nb(train, p["laplace_alpha"]).predict_many([d.features for d in test])
    if algorithm == "knn":
        return [predict_knn(train, d.features, p["k"]) for d in test]
    raise ContractViolation(f"unknown algorithm {algorithm!r}")


def model_select(data, folds: int = 5, algorithms=ALGORITHMS, seed: int = 0, params=None):
    """Cross-validate each algorithm and pick the best by weighted F1.

    Out-of-fold predictions are pooled into one report per algorithm. Equal
    scores go to the algorithm listed first in ``ALGORITHMS``.
    """
    data, _, _ = _prepare(data)
    assign = stratified_folds(data, folds, seed)
    params = params or {}
    reports = {}
    for alg in sorted(set(algorithms), key=ALGORITHMS.index):
        preds = [None] * len(data)
        for f in range(folds):
            tr = [d for d, a in zip(data, assign) if a != f]
            te_idx = [i for i, a in enumerate(assign) if a == f]
            out = fit_predict(alg, tr, [data[i] for i in te_idx], seed, params.get(alg))
            for i, p in zip(te_idx, out):
                preds[i] = p
        reports[alg] = evaluate(preds, [d.label for d in data])
    best = max(reports, key=lambda a: (reports[a].weighted.f1, -ALGORITHMS.index(a)))
    return best, reports
