"""PCA reduction of flattened feature vectors."""

from dataclasses import dataclass

import numpy as np

from . import container
from .errors import DegenerateData, InvalidConfig, ShapeMismatch


@dataclass(frozen=True)
class PCAModel:
    mean: np.ndarray  # (D,)
    basis: np.ndarray  # (n, D), orthonormal rows, descending variance
    explained_variance: np.ndarray  # (n,)

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]


def _normalize_signs(basis):
    # largest-magnitude coordinate of every row is made positive
    idx = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(basis.shape[0]), idx])
    signs[signs == 0] = 1.0
    return basis * signs[:, None]


def pca_fit(X, n):
    """Fit a rank-n PCA on the rows of X.

    When there are fewer samples than dimensions the eigenproblem is solved
    on the samples x samples Gram matrix instead of the D x D covariance.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidConfig(f"X must be a samples x features matrix, got shape {X.shape}")
    samples, dim = X.shape
    if samples < 2:
        raise InvalidConfig("PCA needs at least two samples")
    n = int(n)
    if not 1 <= n <= min(dim, samples - 1):
        raise InvalidConfig(f"n={n} outside [1, {min(dim, samples - 1)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    if not np.any(Xc):
        raise DegenerateData("centered data is identically zero")

    if samples < dim:
        gram = Xc @ Xc.T
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:n]
        evals = np.clip(evals[order], 0.0, None)
        if evals[-1] <= 0:
            raise DegenerateData(f"data has rank below n={n}")
        basis = (Xc.T @ evecs[:, order] / np.sqrt(evals)).T
    else:
        _, sing, vt = np.linalg.svd(Xc, full_matrices=False)
        evals = sing[:n] ** 2
        basis = vt[:n]
    basis = _normalize_signs(basis)
    return PCAModel(mean=mean, basis=basis, explained_variance=evals / (samples - 1))


def pca_transform(m: PCAModel, x):
    """Project a vector (D,) or a batch (N, D) onto the principal basis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.dim:
        raise ShapeMismatch(f"PCA model expects dimension {m.dim}, got {x.shape[-1]}")
    return (x - m.mean) @ m.basis.T


def pca_reconstruct(m: PCAModel, z):
    return np.asarray(z, dtype=np.float64) @ m.basis + m.mean


def select_n(candidates, train, val, C=1.0, max_iter=1000, tol=1e-3, seed=0, normalize=True):
    """Pick the PCA size with the best validation accuracy of a linear SVM.

    ``train`` and ``val`` are FeatureSet-like objects (``features``,
    ``labels``). Ties go to the smaller n. Returns ``(best_n, accuracies)``.
    """
    from .svm import svm_predict_batch, svm_train

    candidates = sorted({int(c) for c in candidates})
    if not candidates:
        raise InvalidConfig("candidate list is empty")
    Xtr = np.asarray(train.features, dtype=np.float64)
    Xva = np.asarray(val.features, dtype=np.float64)
    ytr = np.asarray(train.labels)
    yva = np.asarray(val.labels)
    accuracies = {}
    for n in candidates:
        m = pca_fit(Xtr, n)
        model = svm_train(pca_transform(m, Xtr), ytr, C=C, tol=tol, max_iter=max_iter,
                          seed=seed, normalize=normalize)
        pred, _ = svm_predict_batch(model, pca_transform(m, Xva))
        accuracies[n] = float(np.mean(pred == yva))
    best = max(accuracies.values())
    return min(n for n, acc in accuracies.items() if acc == best), accuracies


def save_pca(m: PCAModel, path):
    container.save(path, {
        "pca.mean": m.mean,
        "pca.basis": m.basis,
        "pca.explained_variance": m.explained_variance,
    })


def load_pca(path):
    entries = container.load(path)
    try:
        mean = entries["pca.mean"].astype(np.float64)
        basis = entries["pca.basis"].astype(np.float64)
        var = entries["pca.explained_variance"].astype(np.float64)
    except KeyError as exc:
        from .errors import MissingTensor
        raise MissingTensor(f"{path}: missing {exc.args[0]}") from None
    if basis.ndim != 2 or mean.shape != (basis.shape[1],) or var.shape != (basis.shape[0],):
        raise ShapeMismatch(f"{path}: inconsistent PCA entry shapes")
    return PCAModel(mean, basis, var)
