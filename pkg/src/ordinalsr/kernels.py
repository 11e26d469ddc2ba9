"""Linear and Gaussian RBF kernels, Gram matrices, and the median bandwidth heuristic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError

__all__ = ["KernelSpec", "kernel_eval", "gram_matrix", "median_bandwidth"]

MEDIAN_SUBSAMPLE_CAP = 1000


@dataclass(frozen=True)
class KernelSpec:
    """kind is 'linear' or 'gaussian'; bandwidth is the Gaussian sigma."""

    kind: str
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "gaussian"):
            raise DataError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.bandwidth is None or self.bandwidth <= 0:
                raise DataError("gaussian kernel requires bandwidth > 0")

    def with_bandwidth(self, sigma):
        return KernelSpec(self.kind, float(sigma))


def kernel_eval(spec: KernelSpec, u, v) -> float:
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise DataError("kernel arguments must have equal dimension")
    if spec.kind == "linear":
        return float(u @ v)
    d2 = float(np.sum((u - v) ** 2))
    return float(np.exp(-d2 / (2.0 * spec.bandwidth**2)))


def gram_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """m x q matrix of kernel values between rows of A and rows of B."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DataError("gram_matrix column counts differ")
    if spec.kind == "linear":
        return A @ B.T
    sq = (
        np.sum(A**2, axis=1)[:, None]
        + np.sum(B**2, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * spec.bandwidth**2))


def median_bandwidth(X, seed=0) -> float:
    """Median pairwise Euclidean distance, subsampled to at most 1000 rows.

    The subsample is deterministic under the given seed.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("median_bandwidth needs at least two rows")
    if X.shape[0] > MEDIAN_SUBSAMPLE_CAP:
        idx = np.random.default_rng(seed).choice(
            X.shape[0], MEDIAN_SUBSAMPLE_CAP, replace=False
        )
        X = X[np.sort(idx)]
    sq = (
        np.sum(X**2, axis=1)[:, None]
        + np.sum(X**2, axis=1)[None, :]
        - 2.0 * (X @ X.T)
    )
    iu = np.triu_indices(X.shape[0], k=1)
    d = np.sqrt(np.maximum(sq[iu], 0.0))
    med = float(np.median(d))
    if med <= 0:
        raise DataError("all rows identical; median bandwidth undefined")
    return med
