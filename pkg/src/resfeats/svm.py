"""One-vs-rest linear SVM trained by dual coordinate descent.

Each binary problem is the L2-regularized hinge-loss SVM

    min_w  0.5 ||w||^2 + C sum_i max(0, 1 - y_i w.x_i)

with the bias folded into w through a constant feature of 1. The dual is
maximized one coordinate at a time, each alpha_i clipped to [0, C].
"""

from dataclasses import dataclass, field

import numpy as np

from . import container
from .errors import InsufficientClassSamples, InvalidConfig, ShapeMismatch, SingleClassData

DEFAULT_GRID = tuple(2.0 ** e for e in range(-5, 6, 2))


@dataclass(frozen=True)
class SVMModel:
    classes: np.ndarray  # (K,) labels in score order
    weights: np.ndarray  # (K, n)
    biases: np.ndarray  # (K,)
    C: float
    normalize: bool = True
    history: tuple = field(default=(), compare=False, repr=False)

    @property
    def n_features(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class BinaryResult:
    w: np.ndarray
    b: float
    alpha: np.ndarray
    dual: list  # dual objective after each epoch
    gap: list  # relative duality gap after each epoch
    epochs: int


@dataclass(frozen=True)
class CVReport:
    grid: tuple
    fold_accuracies: np.ndarray  # (len(grid), k)
    chosen_C: float
    folds: np.ndarray  # fold index of every sample

    @property
    def mean_accuracies(self):
        return self.fold_accuracies.mean(axis=1)


def l2_normalize(X):
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=-1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def _objectives(Xa, y, w, alpha, C):
    margins = 1.0 - y * (Xa @ w)
    ww = float(w @ w)
    primal = 0.5 * ww + C * float(np.maximum(margins, 0.0).sum())
    dual = float(alpha.sum()) - 0.5 * ww
    return primal, dual


def dual_cd_binary(X, y, C, tol=1e-3, max_iter=1000, rng=None, callback=None):
    """Solve one binary problem; ``y`` holds +1/-1.

    ``callback(epoch, alpha, dual)`` runs after every epoch.
    """
    rng = np.random.default_rng(rng)
    n_samples = X.shape[0]
    Xa = np.hstack([np.asarray(X, dtype=np.float64), np.ones((n_samples, 1))])
    y = np.asarray(y, dtype=np.float64)
    q_diag = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(n_samples)
    w = np.zeros(Xa.shape[1])
    duals, gaps = [], []
    epoch = 0
    for epoch in range(1, max_iter + 1):
        for i in rng.permutation(n_samples):
            qii = q_diag[i]
            if qii <= 0.0:
                continue
            yi = y[i]
            xi = Xa[i]
            grad = yi * float(w @ xi) - 1.0
            old = alpha[i]
            new = min(max(old - grad / qii, 0.0), C)
            if new != old:
                alpha[i] = new
                w += (new - old) * yi * xi
        primal, dual = _objectives(Xa, y, w, alpha, C)
        gap = (primal - dual) / max(abs(primal), 1e-12)
        duals.append(dual)
        gaps.append(gap)
        if callback is not None:
            callback(epoch, alpha, dual)
        if gap <= tol:
            break
    return BinaryResult(w[:-1].copy(), float(w[-1]), alpha, duals, gaps, epoch)


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeMismatch(f"X {X.shape} and y {y.shape} disagree")
    if not np.all(np.isfinite(X)):
        raise InvalidConfig("feature rows must be finite")
    return X, y


def svm_train(X, y, C=1.0, tol=1e-3, max_iter=1000, seed=0, normalize=True, callback=None):
    """Train K one-vs-rest classifiers. ``callback(class_index, epoch, alpha, dual)``."""
    X, y = _check_xy(X, y)
    if not C > 0:
        raise InvalidConfig(f"C must be positive, got {C}")
    if max_iter < 1 or tol < 0:
        raise InvalidConfig("max_iter must be >= 1 and tol >= 0")
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassData("training data contains a single class")
    if normalize:
        X = l2_normalize(X)
    weights, biases, history = [], [], []
    for k, label in enumerate(classes):
        target = np.where(y == label, 1.0, -1.0)
        cb = None if callback is None else (lambda e, a, d, k=k: callback(k, e, a, d))
        res = dual_cd_binary(X, target, C, tol, max_iter, np.random.default_rng([seed, k]), cb)
        weights.append(res.w)
        biases.append(res.b)
        history.append(res)
    return SVMModel(classes, np.array(weights), np.array(biases), float(C), bool(normalize), tuple(history))


def decision_scores(m: SVMModel, X):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != m.n_features:
        raise ShapeMismatch(f"model expects {m.n_features} features, got {X.shape[-1]}")
    if m.normalize:
        X = l2_normalize(X)
    return X @ m.weights.T + m.biases


def svm_predict(m: SVMModel, x):
    """(label, scores) for a single vector; ties go to the earlier class."""
    scores = decision_scores(m, np.asarray(x)[None, :] if np.ndim(x) == 1 else x)
    if scores.shape[0] != 1:
        raise ShapeMismatch("svm_predict takes one vector; use svm_predict_batch")
    return m.classes[int(np.argmax(scores[0]))], scores[0]


def svm_predict_batch(m: SVMModel, X):
    scores = decision_scores(m, X)
    return m.classes[np.argmax(scores, axis=1)], scores


def stratified_folds(y, k, seed=0):
    """Fold index per sample; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = np.empty(y.shape[0], dtype=np.int64)
    offset = 0
    for label in np.unique(y):
        idx = np.flatnonzero(y == label)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (np.arange(idx.size) + offset) % k
        # rotate the start so small classes do not all pile into fold 0
        offset = (offset + idx.size) % k
    return folds


def cross_validate(X, y, grid=DEFAULT_GRID, k=4, seed=0, tol=1e-3, max_iter=1000, normalize=True):
    X, y = _check_xy(X, y)
    grid = tuple(float(c) for c in grid)
    if not grid:
        raise InvalidConfig("C grid is empty")
    if k < 2:
        raise InvalidConfig(f"need at least 2 folds, got {k}")
    labels, counts = np.unique(y, return_counts=True)
    if labels.size < 2:
        raise SingleClassData("cross-validation data contains a single class")
    if counts.min() < k:
        raise InsufficientClassSamples(
            f"class {labels[counts.argmin()]!r} has {counts.min()} samples, fewer than {k} folds"
        )
    folds = stratified_folds(y, k, seed)
    acc = np.zeros((len(grid), k))
    for f in range(k):
        train, test = folds != f, folds == f
        for g, C in enumerate(grid):
            model = svm_train(X[train], y[train], C=C, tol=tol, max_iter=max_iter, seed=seed, normalize=normalize)
            pred, _ = svm_predict_batch(model, X[test])
            acc[g, f] = np.mean(pred == y[test])
    means = acc.mean(axis=1)
    best = means.max()
    chosen = min(C for C, m in zip(grid, means) if m == best)
    return CVReport(grid, acc, chosen, folds)


def save_svm(m: SVMModel, path):
    container.save(path, {"svm.weights": m.weights, "svm.biases": m.biases})
    container.save_meta(path, {
        "classes": ",".join(str(int(c)) for c in m.classes),
        "C": repr(m.C),
        "normalize": int(m.normalize),
    })


def load_svm(path):
    from .errors import MetaMismatch, MissingTensor

    entries = container.load(path)
    meta = container.load_meta(path)
    try:
        weights = entries["svm.weights"].astype(np.float64)
        biases = entries["svm.biases"].astype(np.float64)
    except KeyError as exc:
        raise MissingTensor(f"{path}: missing {exc.args[0]}") from None
    try:
        classes = np.array([int(c) for c in meta["classes"].split(",")])
        C = float(meta["C"])
        normalize = bool(int(meta.get("normalize", "1")))
    except (KeyError, ValueError) as exc:
        raise MetaMismatch(f"{path}: bad sidecar ({exc})") from None
    if weights.ndim != 2 or weights.shape[0] != classes.size or biases.shape != (classes.size,):
        raise MetaMismatch(f"{path}: {classes.size} classes in sidecar but weights {weights.shape}")
    return SVMModel(classes, weights, biases, C, normalize)
