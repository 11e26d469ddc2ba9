"""Variable selection for binary steps.

Linear rules get selection for free through the L1 penalty.  Gaussian-kernel
rules use a two-stage procedure: a forward-backward stepwise logistic screen
over first- and second-order monomials scored by EBIC, followed by a kernel
fit restricted to the covariates appearing in any selected monomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .aol import BinarySubproblem, fit_aol_l2
from .exceptions import DataError

__all__ = [
    "ScreenResult",
    "expand_second_order",
    "screen_stepwise",
    "screen_for_subproblem",
    "fit_two_stage",
]

EBIC_GAMMA = 0.5
_NEWTON_ITERS = 25
_NEWTON_GTOL = 1e-6


@dataclass(frozen=True)
class ScreenResult:
    selected_monomials: tuple  # (j,) first-order or (j, k) second-order, 0-based
    selected_covariates: tuple  # union of covariate indices in the monomials
    trace: tuple  # (action, monomial, ebic) per accepted move


def expand_second_order(X):
    """Append quadratic and two-way interaction columns.

    Returns (augmented matrix, descriptors); descriptors list the p
    first-order terms (j,) then pairs (j, k) with j <= k in lexicographic
    order, matching column order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    p = X.shape[1]
    if p < 1:
        raise DataError("expand_second_order needs at least one covariate")
    cols = [X]
    desc = [(j,) for j in range(p)]
    second = []
    for j in range(p):
        for k in range(j, p):
            second.append(X[:, j] * X[:, k])
            desc.append((j, k))
    cols.append(np.column_stack(second))
    return np.column_stack(cols), tuple(desc)


def _loglik_newton(A, y, iters=_NEWTON_ITERS):
    """Bernoulli log-likelihood of y on design A (ridge-damped Newton)."""
    n, d = A.shape
    beta = np.zeros(d)
    for _ in range(iters):
        eta = np.clip(A @ beta, -35, 35)
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = A.T @ (y - p)
        if np.linalg.norm(grad) < _NEWTON_GTOL:
            break
        w = np.maximum(p * (1.0 - p), 1e-10)
        H = (A * w[:, None]).T @ A + 1e-6 * np.eye(d)
        beta = np.clip(beta + np.linalg.solve(H, grad), -30.0, 30.0)
    eta = np.clip(A @ beta, -35, 35)
    return float(y @ eta - np.sum(np.log1p(np.exp(eta))))


def _ebic(ll, k_terms, n, n_candidates, gamma=EBIC_GAMMA):
    penalty = (k_terms + 1) * math.log(n)
    choose = (
        math.lgamma(n_candidates + 1)
        - math.lgamma(k_terms + 1)
        - math.lgamma(n_candidates - k_terms + 1)
    )
    return -2.0 * ll + penalty + 2.0 * gamma * choose


def screen_stepwise(X_aug, labels, descriptors=None, weights=None, gamma=EBIC_GAMMA):
    """Forward-backward stepwise logistic screening scored by EBIC.

    X_aug columns are monomials (see expand_second_order); columns are
    standardized internally so the screen is scale-invariant.  Unweighted by
    default; AOL weights are accepted but off unless passed explicitly.
    """
    X_aug = np.atleast_2d(np.asarray(X_aug, dtype=float))
    y = np.asarray(labels, dtype=float)
    n, P = X_aug.shape
    if n < 20:
        raise DataError("screen_stepwise needs n >= 20")
    if np.unique(y).size < 2:
        raise DataError("screen_stepwise needs both classes present")
    if descriptors is None:
        descriptors = tuple((j,) for j in range(P))
    mu = X_aug.mean(axis=0)
    sd = X_aug.std(axis=0)
    usable = sd > 1e-12
    Z = np.zeros_like(X_aug)
    Z[:, usable] = (X_aug[:, usable] - mu[usable]) / sd[usable]
    if weights is not None:
        # weighted screening is an opt-in variant; fold weights in via
        # replication-style sqrt scaling of the design is not equivalent for
        # logistic, so we simply pass them through to the likelihood
        w = np.asarray(weights, dtype=float)
    else:
        w = None
    ones = np.ones((n, 1))

    def model_ll(cols):
        A = np.column_stack([ones, Z[:, cols]]) if cols else ones
        if w is None:
            return _loglik_newton(A, y)
        return _wloglik_newton(A, y, w)

    cap = int(min(n / 5, 50))
    selected = []
    current = _ebic(model_ll([]), 0, n, P, gamma)
    trace = [("init", None, current)]
    improved = True
    while improved:
        improved = False
        # forward
        if len(selected) < cap:
            best_j, best_val = -1, current
            for j in range(P):
                if j in selected or not usable[j]:
                    continue
                val = _ebic(model_ll(selected + [j]), len(selected) + 1, n, P, gamma)
                if val < best_val - 1e-8:
                    best_j, best_val = j, val
            if best_j >= 0:
                selected.append(best_j)
                current = best_val
                trace.append(("add", descriptors[best_j], current))
                improved = True
        # backward
        if len(selected) > 1:
            best_j, best_val = -1, current
            for j in selected:
                rest = [s for s in selected if s != j]
                val = _ebic(model_ll(rest), len(rest), n, P, gamma)
                if val < best_val - 1e-8:
                    best_j, best_val = j, val
            if best_j >= 0:
                selected.remove(best_j)
                current = best_val
                trace.append(("drop", descriptors[best_j], current))
                improved = True
    monomials = tuple(descriptors[j] for j in sorted(selected))
    covariates = tuple(sorted({idx for mono in monomials for idx in mono}))
    return ScreenResult(
        selected_monomials=monomials, selected_covariates=covariates, trace=tuple(trace)
    )


def _wloglik_newton(A, y, w, iters=_NEWTON_ITERS):
    beta = np.zeros(A.shape[1])
    for _ in range(iters):
        eta = np.clip(A @ beta, -35, 35)
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = A.T @ (w * (y - p))
        if np.linalg.norm(grad) < _NEWTON_GTOL:
            break
        wi = np.maximum(w * p * (1.0 - p), 1e-10)
        H = (A * wi[:, None]).T @ A + 1e-6 * np.eye(A.shape[1])
        beta = np.clip(beta + np.linalg.solve(H, grad), -30.0, 30.0)
    eta = np.clip(A @ beta, -35, 35)
    return float((w * y) @ eta - w @ np.log1p(np.exp(eta)))


def screen_for_subproblem(sub: BinarySubproblem) -> ScreenResult:
    """Stage-1 screen on a binary step: labels A*sign(e) rescaled to {0, 1}."""
    X_aug, desc = expand_second_order(sub.features)
    return screen_stepwise(X_aug, (sub.labels + 1) // 2, descriptors=desc)


def mask_features(features, selected, p):
    out = np.array(features, dtype=float, copy=True)
    mask = np.zeros(p, dtype=bool)
    mask[list(selected)] = True
    out[:, ~mask] = 0.0
    return out


def fit_two_stage(sub: BinarySubproblem, kernel, lam, screen=None, tol=1e-5):
    """Screen-then-refit: kernel fit on covariates kept by the stage-1 screen.

    Unselected covariates are zeroed (fixed diagonal mask) rather than
    dropped so rule dimensions stay stable.  An empty screen falls back to
    the full covariate set with the fallback flag raised.
    """
    if screen is None:
        screen = screen_for_subproblem(sub)
    selected = screen.selected_covariates
    fallback = len(selected) == 0
    if fallback:
        selected = tuple(range(sub.p))
    masked = replace(sub, features=mask_features(sub.features, selected, sub.p))
    rule = fit_aol_l2(masked, kernel, lam, tol=tol)
    return replace(
        rule, selected_features=tuple(selected), selection_fallback=fallback
    )
