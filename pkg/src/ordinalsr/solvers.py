"""Core numerical workhorses.

Contains the four optimizers everything else is built on: ordinary least
squares (ridge-jittered normal equations), IRLS logistic regression, an
SMO-style solver for the weighted hinge-loss dual, and a two-phase dense
simplex with Bland's anti-cycling rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConvergenceError,
    DataError,
    InfeasibleLPError,
    UnboundedLPError,
)

__all__ = [
    "LinearModel",
    "LogisticModel",
    "KernelRidgeModel",
    "DualSolution",
    "LinearProgram",
    "LPSolution",
    "ols_fit",
    "logistic_fit",
    "kernel_ridge_fit",
    "wsvm_dual_solve",
    "simplex_solve",
]

_OLS_JITTER = 1e-8
_LOGISTIC_RIDGE = 1e-6
_LOGISTIC_GTOL = 1e-8
_LOGISTIC_MAXIT = 100
_COEF_CAP = 30.0


@dataclass(frozen=True)
class LinearModel:
    intercept: float
    slopes: np.ndarray

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.intercept + X @ self.slopes


@dataclass(frozen=True)
class LogisticModel:
    intercept: float
    slopes: np.ndarray
    converged: bool
    iterations: int

    def decision_value(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.slopes.size == 0:
            return np.full(X.shape[0], self.intercept)
        return self.intercept + X @ self.slopes

    def predict_proba(self, X):
        return 1.0 / (1.0 + np.exp(-np.clip(self.decision_value(X), -35, 35)))


@dataclass(frozen=True)
class KernelRidgeModel:
    points: np.ndarray
    coefs: np.ndarray
    intercept: float
    kernel: object

    def predict(self, X):
        from .kernels import gram_matrix

        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.intercept + gram_matrix(self.kernel, X, self.points) @ self.coefs


def ols_fit(X, y) -> LinearModel:
    """Least squares of y on [1, X] with a 1e-8 ridge jitter for rank safety."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("ols_fit requires finite inputs")
    A = np.column_stack([np.ones(X.shape[0]), X])
    H = A.T @ A + _OLS_JITTER * np.eye(A.shape[1])
    beta = np.linalg.solve(H, A.T @ y)
    return LinearModel(intercept=float(beta[0]), slopes=beta[1:])


def kernel_ridge_fit(X, y, kernel, ridge=1e-3) -> KernelRidgeModel:
    """Centered kernel ridge regression; used as the residual model m-hat."""
    from .kernels import gram_matrix

    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    ybar = float(np.mean(y))
    K = gram_matrix(kernel, X, X)
    coefs = np.linalg.solve(K + ridge * X.shape[0] * np.eye(X.shape[0]), y - ybar)
    return KernelRidgeModel(points=X, coefs=coefs, intercept=ybar, kernel=kernel)


def logistic_fit(X, labels, max_iter=_LOGISTIC_MAXIT, weights=None) -> LogisticModel:
    """IRLS maximization of the (optionally weighted) Bernoulli log-likelihood.

    Hessian gets a 1e-6 ridge; stops at gradient norm < 1e-8.  Separated data
    does not error: coefficients are capped at |coef| <= 30 and the model is
    returned with converged=False.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(labels, dtype=float)
    if set(np.unique(y)) - {0.0, 1.0}:
        raise DataError("labels must be 0/1")
    if np.unique(y).size < 2:
        raise DataError("logistic_fit needs both classes present")
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    A = np.column_stack([np.ones(n), X])
    d = A.shape[1]
    beta = np.zeros(d)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = np.clip(A @ beta, -35, 35)
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = A.T @ (w * (y - p))
        if np.linalg.norm(grad) < _LOGISTIC_GTOL:
            converged = True
            break
        wirls = np.maximum(w * p * (1.0 - p), 1e-10)
        H = (A * wirls[:, None]).T @ A + _LOGISTIC_RIDGE * np.eye(d)
        beta = np.clip(beta + np.linalg.solve(H, grad), -_COEF_CAP, _COEF_CAP)
    if np.any(np.abs(beta) >= _COEF_CAP - 1e-12):
        converged = False
    return LogisticModel(
        intercept=float(beta[0]), slopes=beta[1:], converged=converged, iterations=it
    )


@dataclass(frozen=True)
class DualSolution:
    """Solution of max sum(a) - 1/2 a'Qa s.t. 0 <= alpha <= C, sum(alpha*label) = 0."""

    alphas: np.ndarray
    intercept: float
    objective: float
    kkt_violation: float


def wsvm_dual_solve(gram, labels, caps, tol=1e-5, max_updates=1_000_000) -> DualSolution:
    """SMO on the weighted hinge-loss dual, maximal-KKT-violating pair selection.

    gram is the kernel matrix; caps are the per-sample box bounds C_i.  The
    recovered intercept averages over free support vectors, falling back to
    the midpoint of the feasible interval.
    """
    K = np.asarray(gram, dtype=float)
    a = np.asarray(labels, dtype=float)
    C = np.asarray(caps, dtype=float)
    m = a.shape[0]
    if K.shape != (m, m) or C.shape != (m,):
        raise DataError("wsvm_dual_solve shape mismatch")
    if np.any(C <= 0) or not np.all(np.isfinite(C)):
        raise DataError("caps must be finite and positive")
    eps = 1e-12
    alpha = np.zeros(m)
    grad = -np.ones(m)  # gradient of (1/2 a'Qa - sum a)
    pos = a > 0
    updates = 0
    viol = np.inf
    while True:
        up = (pos & (alpha < C - eps)) | (~pos & (alpha > eps))
        low = (~pos & (alpha < C - eps)) | (pos & (alpha > eps))
        vals = -a * grad
        if not up.any() or not low.any():
            viol = 0.0
            break
        vu = np.where(up, vals, -np.inf)
        vl = np.where(low, vals, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        viol = vu[i] - vl[j]
        if viol < tol:
            break
        if updates >= max_updates:
            break
        # feasible step along alpha_i += a_i*t, alpha_j -= a_j*t (t > 0)
        hi_i = (C[i] - alpha[i]) if pos[i] else alpha[i]
        hi_j = alpha[j] if pos[j] else (C[j] - alpha[j])
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        t = viol / quad if quad > 1e-12 else np.inf
        t = min(t, hi_i, hi_j)
        alpha[i] = np.clip(alpha[i] + a[i] * t, 0.0, C[i])
        alpha[j] = np.clip(alpha[j] - a[j] * t, 0.0, C[j])
        grad += t * a * (K[:, i] - K[:, j])
        updates += 1
    coef = alpha * a
    fx = K @ coef
    free = (alpha > 1e-8 * C) & (alpha < C * (1 - 1e-8))
    resid = a - fx
    if free.any():
        b0 = float(np.mean(resid[free]))
    else:
        lower = resid[(pos & (alpha <= eps)) | (~pos & (alpha >= C - eps))]
        upper = resid[(pos & (alpha >= C - eps)) | (~pos & (alpha <= eps))]
        lo = np.max(lower) if lower.size else -np.inf
        hi = np.min(upper) if upper.size else np.inf
        if np.isfinite(lo) and np.isfinite(hi):
            b0 = float((lo + hi) / 2.0)
        elif np.isfinite(lo):
            b0 = float(lo)
        elif np.isfinite(hi):
            b0 = float(hi)
        else:
            b0 = 0.0
    objective = float(np.sum(alpha) - 0.5 * coef @ fx)
    sol = DualSolution(
        alphas=alpha, intercept=b0, objective=objective, kkt_violation=float(viol)
    )
    if updates >= max_updates and viol > 10 * tol:
        raise ConvergenceError(
            f"SMO hit {max_updates} pair updates with violation {viol:.3g}", best=sol
        )
    return sol


@dataclass(frozen=True)
class LinearProgram:
    """min c'x  s.t.  G x (sense_i) h,  x_j >= 0 unless free[j]."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    senses: tuple
    free: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        h = np.asarray(self.h, dtype=float)
        free = np.asarray(self.free, dtype=bool)
        if G.shape != (h.shape[0], c.shape[0]) or free.shape != c.shape:
            raise DataError("LinearProgram dimensions inconsistent")
        if len(self.senses) != h.shape[0]:
            raise DataError("one sense per constraint row required")
        for s in self.senses:
            if s not in ("<=", "=", ">="):
                raise DataError(f"bad constraint sense {s!r}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "senses", tuple(self.senses))
        object.__setattr__(self, "free", free)


@dataclass(frozen=True)
class LPSolution:
    x: np.ndarray
    objective: float


_LP_TOL = 1e-9


def _bland_pivot(T, basis, cost):
    """Pivot T (rows = equality constraints, b >= 0 maintained) to optimality.

    cost is the full cost vector over tableau columns.  Entering variable is
    the lowest-index negative reduced cost (Bland); leaving row is the min
    ratio with ties broken toward the smallest basis index.
    """
    m = T.shape[0]
    while True:
        cb = cost[basis]
        red = cost[:-1] - cb @ T[:, :-1]
        enter = -1
        for j in range(red.shape[0]):
            if red[j] < -_LP_TOL:
                enter = j
                break
        if enter < 0:
            return
        ratios = np.full(m, np.inf)
        col = T[:, enter]
        ok = col > _LP_TOL
        ratios[ok] = T[ok, -1] / col[ok]
        best = np.min(ratios)
        if not np.isfinite(best):
            raise UnboundedLPError("LP objective unbounded below")
        cand = [i for i in range(m) if ratios[i] <= best + _LP_TOL]
        leave = min(cand, key=lambda i: basis[i])
        piv = T[leave, enter]
        T[leave] /= piv
        for r in range(m):
            if r != leave:
                T[r] -= T[r, enter] * T[leave]
        basis[leave] = enter


def simplex_solve(lp: LinearProgram) -> LPSolution:
    """Two-phase dense simplex.  Free variables are split into x+ - x-."""
    nv = lp.c.shape[0]
    # split free variables
    cols, costs, back = [], [], []
    for j in range(nv):
        cols.append(lp.G[:, j])
        costs.append(lp.c[j])
        back.append((j, 1.0))
        if lp.free[j]:
            cols.append(-lp.G[:, j])
            costs.append(-lp.c[j])
            back.append((j, -1.0))
    A = np.column_stack(cols) if cols else np.zeros((lp.h.shape[0], 0))
    b = lp.h.copy()
    senses = list(lp.senses)
    for i in range(b.shape[0]):
        if b[i] < 0:
            A[i] = -A[i]
            b[i] = -b[i]
            senses[i] = {"<=": ">=", ">=": "<=", "=": "="}[senses[i]]
    m, nstd = A.shape
    slack_cols, art_rows = [], []
    for i, s in enumerate(senses):
        if s == "<=":
            e = np.zeros(m)
            e[i] = 1.0
            slack_cols.append(e)
        elif s == ">=":
            e = np.zeros(m)
            e[i] = -1.0
            slack_cols.append(e)
            art_rows.append(i)
        else:
            art_rows.append(i)
    nslack = len(slack_cols)
    S = np.column_stack(slack_cols) if slack_cols else np.zeros((m, 0))
    basis = [-1] * m
    # slack columns with +1 coefficient start basic for their row
    scol = 0
    for i, s in enumerate(senses):
        if s == "<=":
            basis[i] = nstd + scol
        if s in ("<=", ">="):
            scol += 1
    nart = len(art_rows)
    Art = np.zeros((m, nart))
    for k, i in enumerate(art_rows):
        Art[i, k] = 1.0
        basis[i] = nstd + nslack + k
    T = np.column_stack([A, S, Art, b])
    ncols = T.shape[1]
    if nart:
        cost1 = np.zeros(ncols)
        cost1[nstd + nslack : nstd + nslack + nart] = 1.0
        _bland_pivot(T, basis, cost1)
        if cost1[basis] @ T[:, -1] > 1e-7:
            raise InfeasibleLPError("phase-1 objective positive: LP infeasible")
        # pivot lingering zero-level artificials out, or drop their rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] >= nstd + nslack:
                piv_col = -1
                for j in range(nstd + nslack):
                    if abs(T[r, j]) > _LP_TOL:
                        piv_col = j
                        break
                if piv_col < 0:
                    keep[r] = False
                    continue
                piv = T[r, piv_col]
                T[r] /= piv
                for q in range(m):
                    if q != r:
                        T[q] -= T[q, piv_col] * T[r]
                basis[r] = piv_col
        T = np.delete(T[keep], np.s_[nstd + nslack : nstd + nslack + nart], axis=1)
        basis = [bidx for bidx, k in zip(basis, keep) if k]
        ncols = T.shape[1]
    cost2 = np.zeros(ncols)
    cost2[:nstd] = costs
    _bland_pivot(T, basis, cost2)
    xstd = np.zeros(nstd + nslack)
    for r, bidx in enumerate(basis):
        if bidx < nstd + nslack:
            xstd[bidx] = T[r, -1]
    x = np.zeros(nv)
    for val, (j, sign) in zip(xstd[:nstd], back):
        x[j] += sign * val
    return LPSolution(x=x, objective=float(lp.c @ x))
