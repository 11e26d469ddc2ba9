"""Evaluation metrics, cross-validated tuning, and the replicated benchmark runner.

All value estimates use the self-normalized (ratio) IPW form, which under
constant propensities reduces to the plain mean outcome over subjects whose
observed arm matches the rule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .aol import fit_aol_l1_linear, fit_l2_from_gram
from .exceptions import (
    DataError,
    DegenerateStepError,
    OrdinalSRError,
    UndefinedMetricError,
)
from .kernels import KernelSpec, gram_matrix
from .simgen import get_setting, generate

__all__ = [
    "EvaluationReport",
    "CVResult",
    "misclassification",
    "disagreement",
    "value_estimate",
    "itr_effect",
    "assignment_proportions",
    "evaluate_rule",
    "cv_tune",
    "METHOD_PRESETS",
    "run_benchmark",
    "summarize",
    "write_rows_csv",
    "write_summary_csv",
    "write_manifest",
]


@dataclass(frozen=True)
class EvaluationReport:
    n_test: int
    value: float
    itr_effect: float  # nan when the complement set is empty
    assignment_proportions: tuple
    misclassification: float = None  # None when no true-optimal labels exist
    disagreement: float = None


@dataclass(frozen=True)
class CVResult:
    best_lambda: float
    best_sigma: float  # None for linear kernels
    table: tuple  # (lambda, sigma, mean held-out value) per grid point
    fold_seed: int


def misclassification(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise DataError("misclassification needs equal non-empty vectors")
    return float(np.mean(pred != truth))


def disagreement(pred, truth) -> float:
    """Mean |pred - truth|: penalizes far misses more than near ones."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size == 0:
        raise DataError("disagreement needs equal non-empty vectors")
    return float(np.mean(np.abs(pred - truth)))


def value_estimate(pred, data) -> float:
    """Self-normalized IPW value of an assignment vector against observed data."""
    pred = np.asarray(pred)
    if pred.shape != (data.n,):
        raise DataError("prediction length mismatch")
    matched = pred == data.treatment
    if not matched.any():
        raise UndefinedMetricError("no subject's observed arm matches the rule")
    invp = 1.0 / data.effective_propensity()
    return float(
        np.sum(data.outcome[matched] * invp[matched]) / np.sum(invp[matched])
    )


def itr_effect(pred, data) -> float:
    """Value among rule-concordant subjects minus value among the rest."""
    pred = np.asarray(pred)
    matched = pred == data.treatment
    if not matched.any() or matched.all():
        raise UndefinedMetricError("itr_effect needs matched and unmatched subjects")
    invp = 1.0 / data.effective_propensity()
    v_in = np.sum(data.outcome[matched] * invp[matched]) / np.sum(invp[matched])
    v_out = np.sum(data.outcome[~matched] * invp[~matched]) / np.sum(invp[~matched])
    return float(v_in - v_out)


def assignment_proportions(pred, k_arms) -> tuple:
    pred = np.asarray(pred)
    counts = np.bincount(pred, minlength=k_arms + 1)[1 : k_arms + 1]
    return tuple(counts / pred.size)


def evaluate_rule(pred, data) -> EvaluationReport:
    try:
        effect = itr_effect(pred, data)
    except UndefinedMetricError:
        effect = float("nan")
    misc = dis = None
    if data.true_optimal is not None:
        misc = misclassification(pred, data.true_optimal)
        dis = disagreement(pred, data.true_optimal)
    return EvaluationReport(
        n_test=data.n,
        value=value_estimate(pred, data),
        itr_effect=effect,
        assignment_proportions=assignment_proportions(pred, data.k_arms),
        misclassification=misc,
        disagreement=dis,
    )


# ---------------------------------------------------------------------------
# cross-validated tuning of one binary step


def _stratified_folds(labels, weights, folds, seed, redraws=20):
    """Fold assignment stratified by binary label; every training part must
    keep both classes among positive-weight rows.  Reduces the fold count when
    20 redraws cannot achieve that."""
    rng = np.random.default_rng(seed)
    n = labels.shape[0]
    while folds >= 2:
        for _ in range(redraws):
            assign = np.empty(n, dtype=int)
            for lab in (-1, 1):
                idx = np.flatnonzero(labels == lab)
                idx = rng.permutation(idx)
                assign[idx] = np.arange(idx.size) % folds
            ok = True
            for f in range(folds):
                tr = assign != f
                active = tr & (weights > 0)
                if np.unique(labels[active]).size < 2 or not (~tr).any():
                    ok = False
                    break
            if ok:
                return assign, folds
        folds -= 1
    raise DegenerateStepError("could not build two-class CV folds")


def _holdout_score(pred, sub, rows, criterion):
    b = sub.arm_labels[rows]
    if criterion == "weighted_misclass":
        miss = pred != sub.labels[rows]
        return -float(np.mean(miss * sub.weights[rows]))
    matched = pred == b
    if not matched.any():
        return float("nan")
    invp = 1.0 / sub.propensities[rows]
    return float(
        np.sum(sub.outcomes[rows][matched] * invp[matched]) / np.sum(invp[matched])
    )


def cv_tune(
    sub,
    lambda_grid,
    sigma_grid=(None,),
    folds=5,
    seed=0,
    fitter="l2",
    criterion="value",
    screen=None,
    cv_tol=1e-3,
) -> CVResult:
    """Grid search maximizing the held-out binary IPW value (ratio form).

    Ties break toward larger lambda, then larger sigma (simpler rules).  For
    the two-stage fitter the stage-1 screen is computed once on the full
    subproblem and held fixed across folds and grid points.
    """
    if sub.m < 2 * folds:
        folds = max(2, sub.m // 2)
    if sub.m < 4:
        raise DegenerateStepError(f"{sub.step_id}: too few subjects for CV")
    assign, folds = _stratified_folds(sub.labels, sub.weights, folds, seed)
    features = sub.features
    if fitter == "two-stage":
        from .varselect import mask_features, screen_for_subproblem

        if screen is None:
            screen = screen_for_subproblem(sub)
        if screen.selected_covariates:
            features = mask_features(features, screen.selected_covariates, sub.p)
    table = []
    for sigma in sigma_grid:
        kernel = KernelSpec("linear") if sigma is None else KernelSpec("gaussian", sigma)
        gram_full = None
        if fitter in ("l2", "two-stage"):
            gram_full = gram_matrix(kernel, features, features)
        for lam in lambda_grid:
            scores = []
            for f in range(folds):
                te = np.flatnonzero(assign == f)
                tr = np.flatnonzero(assign != f)
                if fitter == "l1linear":
                    rule = fit_aol_l1_linear(sub.subset(tr), lam)
                    pred = rule.predict(features[te])
                else:
                    active = tr[sub.weights[tr] > 0]
                    coefs, b0 = fit_l2_from_gram(
                        sub.labels[active],
                        sub.weights[active],
                        gram_full[np.ix_(active, active)],
                        lam,
                        tol=cv_tol,
                    )
                    fvals = gram_full[np.ix_(te, active)] @ coefs + b0
                    pred = np.where(fvals > 0, 1, -1)
                scores.append(_holdout_score(pred, sub, te, criterion))
            mean_score = float(np.nanmean(scores)) if not all(
                math.isnan(s) for s in scores
            ) else float("-inf")
            table.append((float(lam), sigma, mean_score))
    best = None
    for lam, sigma, score in sorted(
        table, key=lambda t: (t[0], t[1] if t[1] is not None else 0.0)
    ):
        if best is None or score >= best[2]:
            best = (lam, sigma, score)
    return CVResult(
        best_lambda=best[0], best_sigma=best[1], table=tuple(table), fold_seed=seed
    )


# ---------------------------------------------------------------------------
# replicated benchmark

METHOD_PRESETS = {
    "oracle": {"kind": "oracle"},
    "sr-linear": {"kind": "sr", "kernel_kind": "linear", "penalty": "l2"},
    "sr-linear-l1": {
        "kind": "sr",
        "kernel_kind": "linear",
        "penalty": "l1linear",
        "selection": "embedded",
    },
    "sr-gaussian": {"kind": "sr", "kernel_kind": "gaussian", "penalty": "l2"},
    "sr-gaussian-select": {
        "kind": "sr",
        "kernel_kind": "gaussian",
        "penalty": "l2",
        "selection": "two-stage",
    },
    "sr-linear-no-r": {
        "kind": "sr",
        "kernel_kind": "linear",
        "penalty": "l2",
        "use_r_steps": False,
    },
}


def resolve_method(method):
    """A method is a preset name or a dict with 'name' and SRConfig overrides."""
    if isinstance(method, str):
        if method not in METHOD_PRESETS:
            raise DataError(f"unknown method preset {method!r}")
        return method, dict(METHOD_PRESETS[method])
    method = dict(method)
    name = method.pop("name")
    return name, method


def _run_cell(spec, n, rep, methods, seed, test_size):
    from .sr import SRConfig, fit_sr, predict_ordinal

    train_seed = seed + rep
    test_seed = seed + 100_000 + rep
    train = generate(spec, n, train_seed)
    test = generate(spec, test_size, test_seed)
    rows, failures = [], []
    for method in methods:
        name, params = resolve_method(method)
        kind = params.pop("kind", "sr")
        try:
            if kind == "oracle":
                pred = test.true_optimal
            else:
                config = SRConfig(seed=train_seed, **params)
                model = fit_sr(train, config)
                pred = predict_ordinal(model, test.features)
            report = evaluate_rule(pred, test)
            rows.append(
                {
                    "setting": spec.id,
                    "n": n,
                    "method": name,
                    "replicate": rep,
                    "misclass": report.misclassification,
                    "value": report.value,
                    "itr_effect": report.itr_effect,
                    "props": report.assignment_proportions,
                    "seed": train_seed,
                }
            )
        except OrdinalSRError as exc:
            failures.append(
                {"setting": spec.id, "n": n, "method": name, "replicate": rep,
                 "error": str(exc)}
            )
    return rows, failures


def run_benchmark(
    settings, n_list, replicates, methods, seed=0, test_size=10_000, jobs=1, p=None
):
    """Replicated simulation benchmark.

    settings may be setting ids or SettingSpec objects; methods are preset
    names or dicts (see resolve_method).  The test set is shared by all
    methods within a (setting, n, replicate) cell.  Returns (rows, failures);
    rows are canonically sorted so output is independent of scheduling.
    """
    if replicates < 1:
        raise DataError("replicates must be >= 1")
    specs = [get_setting(s, p=p) if isinstance(s, str) else s for s in settings]
    tasks = [
        (spec, n, rep)
        for spec in specs
        for n in n_list
        for rep in range(replicates)
    ]
    rows, failures = [], []
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_cell, spec, n, rep, methods, seed, test_size)
                for spec, n, rep in tasks
            ]
            for fut in futures:
                r, f = fut.result()
                rows.extend(r)
                failures.extend(f)
    else:
        for spec, n, rep in tasks:
            r, f = _run_cell(spec, n, rep, methods, seed, test_size)
            rows.extend(r)
            failures.extend(f)
    order = {resolve_method(m)[0]: i for i, m in enumerate(methods)}
    rows.sort(key=lambda r: (r["setting"], r["n"], order[r["method"]], r["replicate"]))
    return rows, failures


def summarize(rows):
    """Per-(setting, n, method) mean and sd of misclassification and value."""
    cells = {}
    for row in rows:
        cells.setdefault((row["setting"], row["n"], row["method"]), []).append(row)
    out = []
    for (setting, n, method), group in sorted(cells.items()):
        misc = [r["misclass"] for r in group if r["misclass"] is not None]
        vals = [r["value"] for r in group]
        out.append(
            {
                "setting": setting,
                "n": n,
                "method": method,
                "replicates": len(group),
                "misclass_mean": float(np.mean(misc)) if misc else float("nan"),
                "misclass_sd": float(np.std(misc, ddof=1)) if len(misc) > 1 else 0.0,
                "value_mean": float(np.mean(vals)),
                "value_sd": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
            }
        )
    return out


def write_rows_csv(rows, path, k_arms):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["setting", "n", "method", "replicate", "misclass", "value", "itr_effect"]
            + [f"prop_{k}" for k in range(1, k_arms + 1)]
            + ["seed"]
        )
        for r in rows:
            misc = "" if r["misclass"] is None else repr(float(r["misclass"]))
            writer.writerow(
                [r["setting"], r["n"], r["method"], r["replicate"], misc,
                 repr(float(r["value"])), repr(float(r["itr_effect"]))]
                + [repr(float(v)) for v in r["props"]]
                + [r["seed"]]
            )


def write_summary_csv(summary, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["setting", "n", "method", "replicates",
             "misclass_mean", "misclass_sd", "value_mean", "value_sd"]
        )
        for s in summary:
            writer.writerow(
                [s["setting"], s["n"], s["method"], s["replicates"],
                 repr(s["misclass_mean"]), repr(s["misclass_sd"]),
                 repr(s["value_mean"]), repr(s["value_sd"])]
            )


def write_manifest(path, settings, n_list, replicates, methods, seed, test_size, p=None):
    """Plain-text record of every generator constant the benchmark relies on."""
    specs = [get_setting(s, p=p) if isinstance(s, str) else s for s in settings]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("ordinalsr benchmark manifest\n")
        fh.write(f"replicates {replicates} (desk scale; reference studies use 500)\n")
        fh.write(f"seed {seed}\n")
        fh.write(f"test_size {test_size}\n")
        fh.write(f"n_list {','.join(str(n) for n in n_list)}\n")
        fh.write(
            "methods " + ",".join(resolve_method(m)[0] for m in methods) + "\n"
        )
        fh.write(
            "note: boundary parameterizations and mu(X) are package constants, "
            "not published values; parallel settings use index weights "
            f"{_p_weights_str()} with the thresholds below.\n"
        )
        fh.write(
            "note: mu(X) = 5 + X1 + 2*X2 for parallel-family settings, 5 otherwise.\n"
        )
        fh.write(
            "note: nonlinear variable screening is forward-backward stepwise "
            "logistic with EBIC(gamma=0.5) over first/second-order monomials.\n"
        )
        fh.write(
            "note: outcome mean is mu(X) - effect_scale * loss(A, D*(X)); the "
            "per-setting effect_scale below reproduces the treatment-effect-to-"
            "noise ratio implied by the reference value tables.\n"
        )
        for spec in specs:
            fh.write(
                f"setting {spec.id} K={spec.k_arms} p={spec.p} loss={spec.loss_kind} "
                f"kind={spec.kind} params={list(spec.params)} "
                f"effect_scale={spec.effect_scale}\n"
            )


def _p_weights_str():
    from .simgen import _P_WEIGHTS

    return str(list(_P_WEIGHTS))
