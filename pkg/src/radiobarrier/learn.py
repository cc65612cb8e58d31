"""Classifiers, cross-validation and evaluation reports.

Both classifiers standardize features with statistics fitted on their own
training data, so per-fold standardization in cross-validation follows for
free.  The SVM solves the soft-margin dual with sequential pairwise updates
until no multiplier violates the KKT conditions beyond the tolerance.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import InputDataError, TrainingError

MODEL_FORMAT = "radiobarrier-model"
MODEL_VERSION = 1


def _standardize_fit(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return mean, std


class KnnClassifier:
    """k-nearest-neighbour vote over standardized Euclidean distances.

    Ties are broken by the smaller mean neighbour distance, then by the
    label with more training samples, then lexicographically.
    """

    def __init__(self, k: int = 3):
        if k < 1:
            raise TrainingError("k must be at least 1")
        self.k = k
        self._X: Optional[np.ndarray] = None
        self._y: Optional[np.ndarray] = None
        self.mean: Optional[np.ndarray] = None
        self.std: Optional[np.ndarray] = None

    def fit(self, X, y) -> "KnnClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or len(X) != len(y):
            raise InputDataError("X must be 2-D with one label per row")
        if self.k > len(X):
            raise TrainingError(f"k={self.k} exceeds the {len(X)} training samples")
        self.mean, self.std = _standardize_fit(X)
        self._X = (X - self.mean) / self.std
        self._y = y
        return self

    def predict_one(self, query) -> str:
        query = np.asarray(query, dtype=float)
        if query.shape != (self._X.shape[1],):
            raise InputDataError(
                f"query has {query.shape} features, model expects {self._X.shape[1]}"
            )
        q = (query - self.mean) / self.std
        dists = np.sqrt(((self._X - q) ** 2).sum(axis=1))
        order = np.argsort(dists, kind="stable")[: self.k]
        neigh_labels = self._y[order]
        neigh_dists = dists[order]

        counts: Dict[str, int] = {}
        for lab in neigh_labels:
            counts[lab] = counts.get(lab, 0) + 1
        best = max(counts.values())
        tied = sorted(lab for lab, c in counts.items() if c == best)
        if len(tied) == 1:
            return tied[0]
        mean_dist = {
            lab: float(neigh_dists[neigh_labels == lab].mean()) for lab in tied
        }
        lowest = min(mean_dist.values())
        tied = sorted(lab for lab in tied if mean_dist[lab] == lowest)
        if len(tied) == 1:
            return tied[0]
        train_counts = {lab: int((self._y == lab).sum()) for lab in tied}
        most = max(train_counts.values())
        tied = sorted(lab for lab in tied if train_counts[lab] == most)
        return tied[0]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.array([self.predict_one(row) for row in X])


def knn_fit(X, y, k: int = 3) -> KnnClassifier:
    return KnnClassifier(k=k).fit(X, y)


def knn_predict(model: KnnClassifier, query) -> str:
    return model.predict_one(query)


class SvmClassifier:
    """Binary soft-margin SVM trained with sequential pairwise optimization."""

    def __init__(
        self,
        kernel: str = "rbf",
        C: float = 10.0,
        gamma: Optional[float] = None,
        tol: float = 1e-3,
        max_iter: int = 10_000,
        num_passes: int = 10,
        seed: int = 0,
    ):
        if kernel not in ("linear", "rbf"):
            raise TrainingError(f"unknown kernel {kernel!r}")
        if C <= 0:
            raise TrainingError("C must be positive")
        self.kernel = kernel
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.num_passes = num_passes
        self.seed = seed
        self.classes: Optional[Tuple[str, str]] = None
        self.support_vectors: Optional[np.ndarray] = None
        self.dual_coef: Optional[np.ndarray] = None  # alpha_i * y_i
        self.bias: float = 0.0
        self.mean: Optional[np.ndarray] = None
        self.std: Optional[np.ndarray] = None
        self.n_iter: int = 0
        self.max_kkt_residual: float = math.inf

    # -- kernel ------------------------------------------------------------

    def _gamma_value(self, n_features: int) -> float:
        return self.gamma if self.gamma is not None else 1.0 / n_features

    def _kernel_matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        if self.kernel == "linear":
            return A @ B.T
        g = self._gamma_value(A.shape[1])
        sq = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-g * sq)

    # -- training ----------------------------------------------------------

    def fit(self, X, y) -> "SvmClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        classes = sorted(set(y.tolist()))
        if len(classes) != 2:
            raise TrainingError(f"binary SVM needs exactly two classes, got {classes}")
        self.classes = (classes[0], classes[1])
        ysign = np.where(y == classes[1], 1.0, -1.0)

        self.mean, self.std = _standardize_fit(X)
        Xs = (X - self.mean) / self.std
        n = len(Xs)
        K = self._kernel_matrix(Xs, Xs)

        alphas = np.zeros(n)
        b = 0.0
        rng = np.random.default_rng(self.seed)
        tol = self.tol
        C = self.C

        def error(i: int) -> float:
            return float((alphas * ysign) @ K[:, i] + b - ysign[i])

        def take_step(i: int, j: int) -> bool:
            nonlocal b
            if i == j:
                return False
            Ei = error(i)
            Ej = error(j)
            ai_old, aj_old = alphas[i], alphas[j]
            if ysign[i] == ysign[j]:
                L = max(0.0, ai_old + aj_old - C)
                H = min(C, ai_old + aj_old)
            else:
                L = max(0.0, aj_old - ai_old)
                H = min(C, C + aj_old - ai_old)
            if H - L < 1e-12:
                return False
            eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
            if eta >= 0:
                return False
            aj_new = aj_old - ysign[j] * (Ei - Ej) / eta
            aj_new = min(H, max(L, aj_new))
            if abs(aj_new - aj_old) < 1e-8:
                return False
            ai_new = ai_old + ysign[i] * ysign[j] * (aj_old - aj_new)
            alphas[i] = ai_new
            alphas[j] = aj_new
            b1 = b - Ei - ysign[i] * (ai_new - ai_old) * K[i, i] - ysign[j] * (aj_new - aj_old) * K[i, j]
            b2 = b - Ej - ysign[i] * (ai_new - ai_old) * K[i, j] - ysign[j] * (aj_new - aj_old) * K[j, j]
            if 0.0 < ai_new < C:
                b = b1
            elif 0.0 < aj_new < C:
                b = b2
            else:
                b = 0.5 * (b1 + b2)
            return True

        passes = 0
        iters = 0
        while passes < self.num_passes:
            if iters >= self.max_iter:
                raise TrainingError(
                    f"SVM did not converge after {iters} sweeps "
                    f"(max residual {self._max_residual(alphas, ysign, K, b):.3g}, tol {tol})"
                )
            changed = 0
            for i in range(n):
                r = ysign[i] * error(i)
                if (r < -tol and alphas[i] < C) or (r > tol and alphas[i] > 0):
                    j = int(rng.integers(n - 1))
                    if j >= i:
                        j += 1
                    if take_step(i, j):
                        changed += 1
                        continue
                    stepped = False
                    for j in range(n):
                        if take_step(i, j):
                            changed += 1
                            stepped = True
                            break
                    if not stepped:
                        pass  # no pair improves this violator; re-checked at the end
            iters += 1
            passes = passes + 1 if changed == 0 else 0

        self.n_iter = iters
        self.bias = float(b)
        self.max_kkt_residual = self._max_residual(alphas, ysign, K, b)
        if self.max_kkt_residual > tol:
            raise TrainingError(
                f"SVM stalled with KKT residual {self.max_kkt_residual:.3g} > tol {tol}"
            )
        keep = alphas > 1e-9
        self.support_vectors = Xs[keep]
        self.dual_coef = (alphas * ysign)[keep]
        return self

    def _max_residual(self, alphas, ysign, K, b) -> float:
        f = (alphas * ysign) @ K + b
        r = ysign * f - 1.0
        lo = np.where(alphas < 1e-9, np.maximum(0.0, -r), 0.0)
        hi = np.where(alphas > self.C - 1e-9, np.maximum(0.0, r), 0.0)
        mid = np.where((alphas >= 1e-9) & (alphas <= self.C - 1e-9), np.abs(r), 0.0)
        return float(np.maximum(np.maximum(lo, hi), mid).max())

    # -- prediction ----------------------------------------------------------

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Xs = (X - self.mean) / self.std
        K = self._kernel_matrix(Xs, self.support_vectors)
        return K @ self.dual_coef + self.bias

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return np.array([self.classes[1] if s >= 0 else self.classes[0] for s in scores])


def svm_fit(X, y, kernel: str = "rbf", C: float = 10.0, tol: float = 1e-3, **kwargs) -> SvmClassifier:
    return SvmClassifier(kernel=kernel, C=C, tol=tol, **kwargs).fit(X, y)


def svm_predict(model: SvmClassifier, query) -> str:
    return str(model.predict(np.asarray(query, dtype=float)[None, :])[0])


class LengthThresholdClassifier:
    """1-D rule: length >= threshold reads 'truck', below it 'passenger_car'.

    The threshold is the accuracy-maximizing midpoint between adjacent
    sorted training lengths; ties pick the lower midpoint.
    """

    def __init__(self):
        self.threshold: Optional[float] = None

    def fit(self, X, y) -> "LengthThresholdClassifier":
        X = np.asarray(X, dtype=float)
        lengths = X[:, 0] if X.ndim == 2 else X
        y = np.asarray(y)
        labels = set(y.tolist())
        if len(labels) < 2:
            raise TrainingError("threshold training needs both labels present")
        if not labels <= {"passenger_car", "truck"}:
            raise TrainingError(f"threshold rule only knows passenger_car/truck, got {sorted(labels)}")
        values = np.sort(np.unique(lengths))
        candidates = [(values[i] + values[i + 1]) / 2.0 for i in range(len(values) - 1)]
        best_thr = None
        best_acc = -1.0
        for thr in candidates:
            pred = np.where(lengths >= thr, "truck", "passenger_car")
            acc = float((pred == y).mean())
            if acc > best_acc:
                best_acc = acc
                best_thr = thr
        self.threshold = best_thr
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        lengths = X[:, 0] if X.ndim == 2 else X
        return np.where(lengths >= self.threshold, "truck", "passenger_car")


def length_only_classify(train_lengths, train_labels, query_length: float) -> str:
    model = LengthThresholdClassifier().fit(np.asarray(train_lengths), train_labels)
    return str(model.predict(np.array([query_length]))[0])


# ---------------------------------------------------------------------------
# Cross-validation

@dataclass(frozen=True)
class CvSummary:
    fold_accuracies: Tuple[float, ...]
    mean: float
    std: float  # sample standard deviation, n-1 denominator
    assignments: Dict[int, int]  # event id -> fold index


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n-1 denominator)."""
    if len(values) < 2:
        raise InputDataError("need at least two values for mean/std")
    m = sum(values) / len(values)
    var = sum((v - m) ** 2 for v in values) / (len(values) - 1)
    return m, math.sqrt(var)


def cross_validate(
    X,
    y,
    event_ids: Sequence[int],
    factory: Callable[[], object],
    folds: int = 5,
    seed: int = 0,
    stratified: bool = True,
) -> CvSummary:
    """Seeded k-fold cross-validation; each event is tested exactly once.

    Rows are canonicalized by event id before the seeded shuffle, so
    permuting the input order changes nothing.  Standardization happens
    inside each model's fit, i.e. on the training folds only.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    ids = np.asarray(event_ids)
    n = len(X)
    if n < folds:
        raise InputDataError(f"{n} events cannot fill {folds} folds")
    if len(set(ids.tolist())) != n:
        raise InputDataError("event ids must be unique")

    order = np.argsort(ids, kind="stable")
    X, y, ids = X[order], y[order], ids[order]

    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=int)
    if stratified:
        for label in sorted(set(y.tolist())):
            idxs = np.flatnonzero(y == label)
            perm = idxs.copy()
            rng.shuffle(perm)
            for pos, idx in enumerate(perm):
                fold_of[idx] = pos % folds
    else:
        perm = np.arange(n)
        rng.shuffle(perm)
        for pos, idx in enumerate(perm):
            fold_of[idx] = pos % folds

    accuracies = []
    for f in range(folds):
        test = fold_of == f
        model = factory()
        model.fit(X[~test], y[~test])
        pred = model.predict(X[test])
        accuracies.append(float((pred == y[test]).mean()))
    m, s = mean_std(accuracies)
    return CvSummary(
        fold_accuracies=tuple(accuracies),
        mean=m,
        std=s,
        assignments={int(i): int(f) for i, f in zip(ids, fold_of)},
    )


# ---------------------------------------------------------------------------
# Evaluation reports

@dataclass(frozen=True)
class TypeResult:
    type_name: str
    label: str
    count: int
    correct: int

    @property
    def rate(self) -> float:
        return self.correct / self.count if self.count else 0.0


@dataclass(frozen=True)
class EvaluationReport:
    labels: Tuple[str, ...]
    confusion: Dict[str, Dict[str, int]]  # true label -> predicted label -> count
    per_type: Tuple[TypeResult, ...]
    total: int
    correct: int

    @property
    def overall_rate(self) -> float:
        return self.correct / self.total if self.total else 0.0


def format_percent(fraction: float) -> str:
    """Render a fraction as a percentage with two decimals, e.g. '98.68%'."""
    return f"{fraction * 100.0:.2f}%"


def evaluate_predictions(y_true, y_pred, type_names) -> EvaluationReport:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    type_names = list(type_names)
    if len(y_true) == 0:
        raise InputDataError("empty test set")
    if not len(y_true) == len(y_pred) == len(type_names):
        raise InputDataError("labels, predictions and type names must align")

    labels = tuple(sorted(set(y_true.tolist()) | set(y_pred.tolist())))
    confusion: Dict[str, Dict[str, int]] = {t: {p: 0 for p in labels} for t in labels}
    for t, p in zip(y_true, y_pred):
        confusion[t][p] += 1

    per_type = []
    seen = []
    for name in type_names:
        if name not in seen:
            seen.append(name)
    for name in seen:
        idx = [i for i, t in enumerate(type_names) if t == name]
        correct = int(sum(y_true[i] == y_pred[i] for i in idx))
        per_type.append(TypeResult(name, str(y_true[idx[0]]), len(idx), correct))

    total = len(y_true)
    correct = int((y_true == y_pred).sum())
    return EvaluationReport(
        labels=labels,
        confusion=confusion,
        per_type=tuple(per_type),
        total=total,
        correct=correct,
    )


def evaluate(model, X_test, y_test, type_names) -> EvaluationReport:
    pred = model.predict(np.asarray(X_test, dtype=float))
    return evaluate_predictions(y_test, pred, type_names)


# ---------------------------------------------------------------------------
# Model persistence: self-describing text, round-trips predictions exactly.

def save_model(model, path) -> None:
    if isinstance(model, KnnClassifier):
        payload = {
            "algo": "knn",
            "k": model.k,
            "mean": model.mean.tolist(),
            "std": model.std.tolist(),
            "X": model._X.tolist(),
            "y": model._y.tolist(),
        }
    elif isinstance(model, SvmClassifier):
        payload = {
            "algo": "svm",
            "kernel": model.kernel,
            "C": model.C,
            "gamma": model.gamma,
            "tol": model.tol,
            "classes": list(model.classes),
            "mean": model.mean.tolist(),
            "std": model.std.tolist(),
            "support_vectors": model.support_vectors.tolist(),
            "dual_coef": model.dual_coef.tolist(),
            "bias": model.bias,
            "max_kkt_residual": model.max_kkt_residual,
        }
    elif isinstance(model, LengthThresholdClassifier):
        payload = {"algo": "length_threshold", "threshold": model.threshold}
    else:
        raise TrainingError(f"cannot persist model of type {type(model)!r}")
    payload["format"] = MODEL_FORMAT
    payload["version"] = MODEL_VERSION
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"model file {path} does not exist")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputDataError(f"{path}: not a model file: {exc}") from exc
    if payload.get("format") != MODEL_FORMAT:
        raise InputDataError(f"{path} is not a {MODEL_FORMAT} file")
    algo = payload["algo"]
    if algo == "knn":
        model = KnnClassifier(k=payload["k"])
        model.mean = np.array(payload["mean"])
        model.std = np.array(payload["std"])
        model._X = np.array(payload["X"])
        model._y = np.array(payload["y"])
        return model
    if algo == "svm":
        model = SvmClassifier(
            kernel=payload["kernel"], C=payload["C"], gamma=payload["gamma"], tol=payload["tol"]
        )
        model.classes = tuple(payload["classes"])
        model.mean = np.array(payload["mean"])
        model.std = np.array(payload["std"])
        model.support_vectors = np.array(payload["support_vectors"])
        model.dual_coef = np.array(payload["dual_coef"])
        model.bias = payload["bias"]
        model.max_kkt_residual = payload["max_kkt_residual"]
        return model
    if algo == "length_threshold":
        model = LengthThresholdClassifier()
        model.threshold = payload["threshold"]
        return model
    raise InputDataError(f"unknown model algo {algo!r}")
