"""Augmented outcome-weighted binary subproblems and their fitted rules.

Each sequential or re-estimation step reduces to a weighted binary
classification: labels are the arm-side indicator flipped by the sign of the
outcome residual, and case weights are |residual| / propensity-of-side.
Rules come in two flavors: an L2 (kernel) weighted SVM fit, and an L1 linear
fit solved as a linear program.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, DegenerateStepError
from .kernels import KernelSpec, gram_matrix
from .solvers import LinearProgram, logistic_fit, simplex_solve, wsvm_dual_solve

__all__ = [
    "BinarySubproblem",
    "SparseLinearRule",
    "KernelExpansionRule",
    "build_subproblem",
    "fit_aol_l2",
    "fit_aol_l1_linear",
    "predict_binary",
    "lambda_max",
]

PROPENSITY_FLOOR = 0.01
COEF_SNAP = 1e-8
SUPPORT_EPS = 1e-12


@dataclass(frozen=True)
class BinarySubproblem:
    """One S- or R-step classification problem over its eligible subjects."""

    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray  # +-1, arm side flipped by sign of residual
    weights: np.ndarray  # |e| / P(side | X), >= 0
    arm_labels: np.ndarray  # +-1 arm side of the observed treatment
    outcomes: np.ndarray
    propensities: np.ndarray  # P(side | X), floored
    step_id: str
    arm_map: dict

    @property
    def m(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def subset(self, rows):
        rows = np.asarray(rows)
        return BinarySubproblem(
            indices=self.indices[rows],
            features=self.features[rows],
            labels=self.labels[rows],
            weights=self.weights[rows],
            arm_labels=self.arm_labels[rows],
            outcomes=self.outcomes[rows],
            propensities=self.propensities[rows],
            step_id=self.step_id,
            arm_map=self.arm_map,
        )


@dataclass(frozen=True)
class SparseLinearRule:
    intercept: float
    slopes: np.ndarray
    selected_features: tuple = None  # None means the full feature set
    selection_fallback: bool = False

    def __post_init__(self):
        if self.selected_features is None:
            object.__setattr__(
                self, "selected_features", tuple(range(self.slopes.shape[0]))
            )

    def decision_value(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.slopes.shape[0]:
            raise DataError("feature dimension mismatch in rule")
        return self.intercept + X @ self.slopes

    def predict(self, X):
        return _sign_tie_negative(self.decision_value(X))


@dataclass(frozen=True)
class KernelExpansionRule:
    """f(x) = b0 + sum_i coef_i K(x_i, x); coef_i = alpha_i * label_i.

    When selected_features is a proper subset, the unselected coordinates are
    zeroed before kernel evaluation (the fixed diagonal-mask formulation).
    """

    points: np.ndarray
    coefs: np.ndarray
    intercept: float
    kernel: KernelSpec
    n_features: int
    selected_features: tuple = None  # None means the full feature set
    selection_fallback: bool = False

    def __post_init__(self):
        if self.selected_features is None:
            object.__setattr__(self, "selected_features", tuple(range(self.n_features)))

    def decision_value(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DataError("feature dimension mismatch in rule")
        if len(self.selected_features) != self.n_features:
            mask = np.zeros(self.n_features)
            mask[list(self.selected_features)] = 1.0
            X = X * mask
        if self.coefs.size == 0:
            return np.full(X.shape[0], self.intercept)
        return self.intercept + gram_matrix(self.kernel, X, self.points) @ self.coefs

    def predict(self, X):
        return _sign_tie_negative(self.decision_value(X))


def _sign_tie_negative(f):
    """+1 where f > 0, else -1 (ties at 0 go to the less intensive side)."""
    return np.where(np.asarray(f) > 0, 1, -1)


def predict_binary(rule, x):
    """Single-subject +-1 decision; exposed for symmetry with the batch .predict."""
    return int(rule.predict(np.atleast_2d(x))[0])


def build_subproblem(
    data,
    negative_arms,
    positive_arms,
    eligible,
    residual_model,
    propensity_mode="known",
    step_id="",
    min_size=10,
    features=None,
) -> BinarySubproblem:
    """Assemble labels/weights for the binary step comparing two arm groups.

    residual_model must expose .predict(X) giving m-hat; residuals
    e = Y - m-hat(X) set both the weight magnitude and a possible label flip
    (sign(0) counts as +1).  ``features`` overrides data.features when the
    pipeline works in scaled coordinates.
    """
    negative_arms = tuple(sorted(negative_arms))
    positive_arms = tuple(sorted(positive_arms))
    if set(negative_arms) & set(positive_arms):
        raise DataError("arm groups must be disjoint")
    eligible = np.asarray(eligible, dtype=int)
    X_all = data.features if features is None else np.asarray(features, dtype=float)
    arms = data.treatment[eligible]
    in_neg = np.isin(arms, negative_arms)
    in_pos = np.isin(arms, positive_arms)
    if not np.all(in_neg | in_pos):
        raise DataError("eligible subject with arm outside both groups")
    if eligible.shape[0] < min_size:
        raise DegenerateStepError(
            f"{step_id or 'step'}: only {eligible.shape[0]} eligible subjects"
        )
    b = np.where(in_pos, 1, -1)
    if np.unique(b).size < 2:
        raise DegenerateStepError(f"{step_id or 'step'}: single-class arm labels")
    X = X_all[eligible]
    y = data.outcome[eligible]
    e = y - np.asarray(residual_model.predict(X), dtype=float)
    sign_e = np.where(e >= 0, 1, -1)
    labels = b * sign_e
    if propensity_mode == "known":
        per_arm = data.effective_propensity()[eligible]
        group_size = np.where(b > 0, len(positive_arms), len(negative_arms))
        prop = per_arm * group_size
    elif propensity_mode == "logistic":
        model = logistic_fit(X, (b + 1) // 2)
        p_pos = model.predict_proba(X)
        prop = np.where(b > 0, p_pos, 1.0 - p_pos)
    else:
        raise DataError(f"unknown propensity mode {propensity_mode!r}")
    prop = np.clip(prop, PROPENSITY_FLOOR, 1.0)
    weights = np.abs(e) / prop
    return BinarySubproblem(
        indices=eligible,
        features=X,
        labels=labels,
        weights=weights,
        arm_labels=b,
        outcomes=y,
        propensities=prop,
        step_id=step_id or "step",
        arm_map={-1: negative_arms, 1: positive_arms},
    )


def _active(sub):
    """Rows with positive weight; fitting is invariant to dropping the rest."""
    keep = sub.weights > 0
    if np.unique(sub.labels[keep]).size < 2:
        raise DegenerateStepError(
            f"{sub.step_id}: single-class labels among weighted subjects"
        )
    return keep


def fit_l2_from_gram(labels, weights, gram, lam, tol=1e-5):
    """Shared core of fit_aol_l2: returns (coefs = alpha*label, intercept).

    Caps follow C_i = w_i / (2 lambda m) with m the active sample count.
    """
    m = labels.shape[0]
    caps = weights / (2.0 * lam * m)
    sol = wsvm_dual_solve(gram, labels, caps, tol=tol)
    return sol.alphas * labels, sol.intercept


def fit_aol_l2(sub: BinarySubproblem, kernel: KernelSpec, lam, tol=1e-5):
    """Weighted hinge loss + lambda * ||f||^2, via the SMO dual solver."""
    if lam <= 0:
        raise DataError("lambda must be positive")
    keep = _active(sub)
    X = sub.features[keep]
    labels = sub.labels[keep]
    weights = sub.weights[keep]
    gram = gram_matrix(kernel, X, X)
    coefs, b0 = fit_l2_from_gram(labels, weights, gram, lam, tol=tol)
    if kernel.kind == "linear":
        return SparseLinearRule(intercept=b0, slopes=X.T @ coefs)
    support = np.abs(coefs) > SUPPORT_EPS
    return KernelExpansionRule(
        points=X[support],
        coefs=coefs[support],
        intercept=b0,
        kernel=kernel,
        n_features=sub.p,
    )


def fit_aol_l1_linear(sub: BinarySubproblem, lam) -> SparseLinearRule:
    """Weighted hinge loss + lambda * ||beta||_1 as an LP (intercept unpenalized).

    Variables: beta0 (free), beta split into +/- parts, one slack xi per
    subject; constraints xi_i >= 1 - label_i * f(x_i).  Slopes below 1e-8 in
    magnitude are snapped to exactly zero.
    """
    if lam <= 0:
        raise DataError("lambda must be positive")
    keep = _active(sub)
    X = sub.features[keep]
    labels = sub.labels[keep].astype(float)
    weights = sub.weights[keep]
    m, p = X.shape
    # variable order: beta0 (free), beta+ (p), beta- (p), xi (m); the explicit
    # +/- split carries cost lam on each part so the objective sees |beta|
    nv = 1 + 2 * p + m
    c = np.concatenate([[0.0], np.full(2 * p, lam), weights / m])
    free = np.zeros(nv, dtype=bool)
    free[0] = True
    G = np.zeros((m, nv))
    G[:, 0] = labels
    lx = labels[:, None] * X
    G[:, 1 : 1 + p] = lx
    G[:, 1 + p : 1 + 2 * p] = -lx
    G[np.arange(m), 1 + 2 * p + np.arange(m)] = 1.0
    lp = LinearProgram(c=c, G=G, h=np.ones(m), senses=(">=",) * m, free=free)
    sol = simplex_solve(lp)
    beta0 = float(sol.x[0])
    slopes = sol.x[1 : 1 + p] - sol.x[1 + p : 1 + 2 * p]
    slopes[np.abs(slopes) <= COEF_SNAP] = 0.0
    selected = tuple(int(j) for j in np.flatnonzero(slopes))
    return SparseLinearRule(intercept=beta0, slopes=slopes, selected_features=selected)


def lambda_max(sub: BinarySubproblem) -> float:
    """Smallest L1 penalty level at which every slope is zero (grid upper end)."""
    keep = sub.weights > 0
    X = sub.features[keep]
    wl = sub.weights[keep] * sub.labels[keep]
    m = X.shape[0]
    return float(np.max(np.abs(wl @ X)) / m)
