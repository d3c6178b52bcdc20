"""Fitting the nuisance functions: propensity, outcome regression, and tau.

Parametric backends use the fixed designs from design.py (logistic for
propensities and binary outcomes, least squares otherwise). The neural backend
fits single-hidden-layer networks with cross-validated size/decay. Two-fold
cross-fitting assigns every observation a prediction from the model trained on
the other fold; tau has its own three-step cross-fitting procedure in which the
propensity and outcome models are refit inside each fold without cross-fitting,
the pseudo-outcomes are formed in-fold, and the tau regression fit on one fold
is evaluated on the other.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .data import Dataset
from .design import build_design
from .errors import (
    ConfigurationError,
    DegenerateFitError,
    EstimationError,
    InsufficientDataError,
)
from .glm import FitDiagnostics, fit_logistic, fit_ols
from .neural import cross_validated_fit
from .rng import stream

CLAMP_EPS = 0.001
CLAMP_WARN_FRACTION = 0.01
DEFAULT_TAU_CENSOR = ("quantile", 0.01)


@dataclass(frozen=True)
class ModelSpec:
    """Configuration of the nuisance estimators."""

    backend: str = "parametric"
    include_g_squared: bool = True
    nn_hidden_sizes: tuple = (0, 2, 4)
    nn_decay_grid: tuple = (0.01, 0.1)
    cv_folds: int = 5
    nn_max_iter: int = 5000
    tau_censor: tuple = DEFAULT_TAU_CENSOR
    binary_outcome_link: str = "logistic"  # "linear" fits OLS and clamps post hoc

    def __post_init__(self):
        if self.backend not in ("parametric", "neural"):
            raise ConfigurationError(f"unknown backend {self.backend!r}")
        if self.backend == "neural" and (not self.nn_hidden_sizes or not self.nn_decay_grid):
            raise ConfigurationError("neural backend requires nonempty hidden/decay grids")
        if self.cv_folds < 2:
            raise ConfigurationError("cv_folds must be at least 2")


class _FittedModel:
    """A trained nuisance model that can predict on any Dataset."""

    def __init__(self, predict: Callable[[Dataset], np.ndarray], coefficients=None,
                 diagnostics: Optional[FitDiagnostics] = None):
        self._predict = predict
        self.coefficients = coefficients
        self.diagnostics = diagnostics

    def predict(self, data: Dataset) -> np.ndarray:
        return self._predict(data)


@dataclass
class NuisanceFit:
    """Per-observation predictions of one nuisance function.

    fold_id is 0 for every row when no cross-fitting was used; otherwise row i
    was predicted by the model trained on rows with fold_id != fold_id[i]
    (training row ids are kept for the audit).
    """

    kind: str
    predictions: np.ndarray
    target_d: Optional[int] = None
    fold_id: Optional[np.ndarray] = None
    coefficients: object = None
    diagnostics: object = None
    clamp_info: dict = field(default_factory=dict)
    model: Optional[_FittedModel] = field(default=None, repr=False)
    training_row_ids: dict = field(default_factory=dict, repr=False)
    row_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.fold_id is None:
            self.fold_id = np.zeros(len(self.predictions), dtype=int)


def _clamp_probs(p: np.ndarray, eps: float = CLAMP_EPS) -> tuple[np.ndarray, dict]:
    lo = int(np.sum(p < eps))
    hi = int(np.sum(p > 1.0 - eps))
    return np.clip(p, eps, 1.0 - eps), {"clamped_low": lo, "clamped_high": hi, "eps": eps}


def _is_binary(y: np.ndarray) -> bool:
    return bool(np.isin(y, (0.0, 1.0)).all())


# ---------------------------------------------------------------------------
# propensity


def _propensity_model(train: Dataset, design: str, spec: ModelSpec, seed: int,
                      covariate_idx=None) -> _FittedModel:
    if spec.backend == "parametric" or design == "g_only":
        X, names = build_design(train, design, include_g_squared=spec.include_g_squared,
                                covariate_idx=covariate_idx)
        beta, diag = fit_logistic(X, train.d, column_names=names)

        def predict(ds: Dataset, beta=beta, design=design, spec=spec, covariate_idx=covariate_idx):
            Xn, _ = build_design(ds, design, include_g_squared=spec.include_g_squared,
                                 covariate_idx=covariate_idx)
            return expit(Xn @ beta)

        return _FittedModel(predict, dict(zip(names, beta)), diag)

    idx = list(range(train.k)) if covariate_idx is None else list(covariate_idx)
    net, info = cross_validated_fit(train.x[:, idx], train.d, spec.nn_hidden_sizes,
                                    spec.nn_decay_grid, spec.cv_folds, binary=True,
                                    seed=seed, max_iter=spec.nn_max_iter)

    def predict(ds: Dataset, net=net, idx=idx):
        return net.predict(ds.x[:, idx])

    return _FittedModel(predict, info, info["diagnostics"])


def fit_propensity(
    data: Dataset,
    conditioning: str = "full_x",
    spec: ModelSpec = ModelSpec(),
    seed: int = 0,
    covariate_idx: Optional[Sequence[int]] = None,
) -> NuisanceFit:
    """Fit P(D=1 | .) and predict it (clamped to [eps, 1-eps]) for all rows of data.

    conditioning: "full_x" uses the additive design on X plus G^2; "g_only"
    conditions on G alone (the E(D|G) used by descriptive slopes); for
    "full_x_given_p1" the model is trained on the P=1 rows only.
    """
    if conditioning not in ("full_x", "g_only", "full_x_given_p1"):
        raise ConfigurationError(f"unknown propensity conditioning {conditioning!r}")
    train = data
    if conditioning == "full_x_given_p1":
        if data.p is None:
            raise ConfigurationError("full_x_given_p1 conditioning requires a P column")
        train = data.subset(data.p == 1.0)
    design = "g_only" if conditioning == "g_only" else "propensity_additive"
    q = 3 if design == "g_only" else train.k + 2
    if train.n < q + 10:
        raise InsufficientDataError(
            f"propensity fit needs at least {q + 10} rows in the conditioning "
            f"population, got {train.n}"
        )
    model = _propensity_model(train, design, spec, seed, covariate_idx)
    raw = model.predict(data)
    preds, clamp = _clamp_probs(raw)
    kind = "dg_mean" if conditioning == "g_only" else "propensity"
    if kind == "dg_mean":
        frac = (clamp["clamped_low"] + clamp["clamped_high"]) / data.n
        if frac > CLAMP_WARN_FRACTION:
            warnings.warn(
                f"{frac:.1%} of E(D|G) predictions were clamped; the logit D|G "
                "slope may be unreliable",
                RuntimeWarning,
            )
    return NuisanceFit(kind=kind, predictions=preds, target_d=1,
                       coefficients=model.coefficients, diagnostics=model.diagnostics,
                       clamp_info=clamp, model=model, row_ids=data.row_ids)


# ---------------------------------------------------------------------------
# outcome regression


def _outcome_model(train: Dataset, target_d: int, conditioning: str, spec: ModelSpec,
                   seed: int, covariate_idx=None) -> _FittedModel:
    binary = _is_binary(train.y)
    use_logistic = binary and spec.binary_outcome_link == "logistic"

    if conditioning == "g_only":
        sub = train.subset(train.d == float(target_d))
        if sub.n == 0:
            raise InsufficientDataError(f"no rows with d={target_d}")
        if spec.backend == "parametric":
            X, names = build_design(sub, "g_only", include_g_squared=spec.include_g_squared)
            if use_logistic:
                beta, diag = fit_logistic(X, sub.y, column_names=names)
            else:
                beta, diag = fit_ols(X, sub.y, column_names=names)

            def predict(ds, beta=beta, spec=spec, link=use_logistic):
                Xn, _ = build_design(ds, "g_only", include_g_squared=spec.include_g_squared)
                eta = Xn @ beta
                return expit(eta) if link else eta

            return _FittedModel(predict, dict(zip(names, beta)), diag)
        net, info = cross_validated_fit(sub.g[:, None], sub.y, spec.nn_hidden_sizes,
                                        spec.nn_decay_grid, spec.cv_folds, binary=binary,
                                        seed=seed, max_iter=spec.nn_max_iter)
        return _FittedModel(lambda ds, net=net: net.predict(ds.g[:, None]), info,
                            info["diagnostics"])

    # full_x
    if binary:
        for dval in np.unique(train.d):
            ys = train.y[train.d == dval]
            if ys.size and np.all(ys == ys[0]):
                raise DegenerateFitError(
                    f"binary outcome is constant in the d={int(dval)} stratum"
                )
    if spec.backend == "parametric":
        X, names = build_design(train, "outcome_interacted",
                                include_g_squared=spec.include_g_squared,
                                covariate_idx=covariate_idx)
        if use_logistic:
            beta, diag = fit_logistic(X, train.y, column_names=names)
        else:
            beta, diag = fit_ols(X, train.y, column_names=names)

        def predict(ds, beta=beta, target_d=target_d, spec=spec, link=use_logistic,
                    covariate_idx=covariate_idx):
            Xn, _ = build_design(ds, "outcome_interacted", target_d=target_d,
                                 include_g_squared=spec.include_g_squared,
                                 covariate_idx=covariate_idx)
            eta = Xn @ beta
            return expit(eta) if link else eta

        return _FittedModel(predict, dict(zip(names, beta)), diag)

    # neural: fit within the target_d stratum on the covariate block
    sub = train.subset(train.d == float(target_d))
    if sub.n == 0:
        raise InsufficientDataError(f"no rows with d={target_d}")
    idx = list(range(train.k)) if covariate_idx is None else list(covariate_idx)
    net, info = cross_validated_fit(sub.x[:, idx], sub.y, spec.nn_hidden_sizes,
                                    spec.nn_decay_grid, spec.cv_folds, binary=binary,
                                    seed=seed, max_iter=spec.nn_max_iter)
    return _FittedModel(lambda ds, net=net, idx=idx: net.predict(ds.x[:, idx]), info,
                        info["diagnostics"])


def fit_outcome(
    data: Dataset,
    target_d: int,
    conditioning: str = "full_x",
    spec: ModelSpec = ModelSpec(),
    seed: int = 0,
    covariate_idx: Optional[Sequence[int]] = None,
) -> NuisanceFit:
    """Fit E(Y | D=target_d, .) and predict it for every row of data.

    "full_x" fits the interacted design on all rows and substitutes
    D=target_d at prediction; "g_only" fits on the D=target_d subsample with
    the [1, G, G^2] basis, which is the E(Y|D=d,G) entering factual slopes.
    Binary outcomes use the logistic link (predictions clamped); continuous
    outcomes use least squares.
    """
    if conditioning not in ("full_x", "g_only"):
        raise ConfigurationError(f"unknown outcome conditioning {conditioning!r}")
    if target_d not in (0, 1):
        raise ConfigurationError("target_d must be 0 or 1")
    model = _outcome_model(data, target_d, conditioning, spec, seed, covariate_idx)
    raw = model.predict(data)
    if _is_binary(data.y):
        preds, clamp = _clamp_probs(raw)
    else:
        preds, clamp = raw, {}
    kind = "y_dg_mean" if conditioning == "g_only" else "outcome"
    return NuisanceFit(kind=kind, predictions=preds, target_d=target_d,
                       coefficients=model.coefficients, diagnostics=model.diagnostics,
                       clamp_info=clamp, model=model, row_ids=data.row_ids)


# ---------------------------------------------------------------------------
# tau


def censor_tau(raw: np.ndarray, rule: tuple = DEFAULT_TAU_CENSOR) -> tuple[np.ndarray, dict]:
    """Censor fitted E(Y_d|G) values into (0, 1).

    Rules:
      ("in_range",)        out-of-range values are recoded to the largest and
                           smallest fitted values inside (0, 1);
      ("quantile", alpha)  additionally winsorize at the [alpha, 1-alpha]
                           sample quantiles of the fitted values (default) —
                           a global quadratic has no support in the extreme
                           tails of G and can cross 0/1 there, which makes the
                           1/(tau(1-tau)) factor explode on rare rows;
      ("fixed", lo, hi)    winsorize at user bounds, e.g. (0.03, 0.97).
    """
    in_range = (raw > 0.0) & (raw < 1.0)
    if not in_range.any():
        raise EstimationError("every fitted tau value is outside (0,1); nuisance fit unusable")
    lo_in, hi_in = float(raw[in_range].min()), float(raw[in_range].max())
    if rule[0] == "in_range":
        lo, hi = lo_in, hi_in
    elif rule[0] == "quantile":
        alpha = float(rule[1])
        qlo, qhi = np.quantile(raw, [alpha, 1.0 - alpha])
        lo, hi = max(float(qlo), lo_in), min(float(qhi), hi_in)
    elif rule[0] == "fixed":
        lo, hi = max(float(rule[1]), lo_in), min(float(rule[2]), hi_in)
        lo, hi = min(lo, hi), max(lo, hi)
    else:
        raise ConfigurationError(f"unknown tau censor rule {rule!r}")
    out = np.clip(raw, lo, hi)
    info = {"rule": rule, "bounds": (lo, hi),
            "n_below": int(np.sum(raw < lo)), "n_above": int(np.sum(raw > hi))}
    return out, info


def _tau_model(train: Dataset, rho_values: np.ndarray, spec: ModelSpec, seed: int) -> _FittedModel:
    if spec.backend == "parametric":
        X, names = build_design(train, "tau_quadratic", include_g_squared=spec.include_g_squared)
        beta, diag = fit_ols(X, rho_values, column_names=names)

        def predict(ds, beta=beta, spec=spec):
            Xn, _ = build_design(ds, "tau_quadratic", include_g_squared=spec.include_g_squared)
            return Xn @ beta

        return _FittedModel(predict, dict(zip(names, beta)), diag)
    net, info = cross_validated_fit(train.g[:, None], rho_values, spec.nn_hidden_sizes,
                                    spec.nn_decay_grid, spec.cv_folds, binary=False,
                                    seed=seed, max_iter=spec.nn_max_iter)
    return _FittedModel(lambda ds, net=net: net.predict(ds.g[:, None]), info,
                        info["diagnostics"])


def fit_tau(
    data: Dataset,
    rho_values: np.ndarray,
    spec: ModelSpec = ModelSpec(),
    conditioning: str = "marginal",
    seed: int = 0,
    censor: Optional[tuple] = None,
) -> NuisanceFit:
    """Regress pseudo-outcomes on [1, G, G^2] and censor predictions into (0,1).

    conditioning="given_p1" restricts fitting and prediction to the P=1 rows
    (the returned fit is aligned to that subset).
    """
    if conditioning not in ("marginal", "given_p1"):
        raise ConfigurationError(f"unknown tau conditioning {conditioning!r}")
    rho_values = np.asarray(rho_values, dtype=np.float64)
    if conditioning == "given_p1":
        if data.p is None:
            raise ConfigurationError("given_p1 conditioning requires a P column")
        mask = data.p == 1.0
        sub = data.subset(mask)
        rho_sub = rho_values[mask] if rho_values.shape[0] == data.n else rho_values
        target = sub
    else:
        sub, rho_sub, target = data, rho_values, data
    if rho_sub.shape[0] != sub.n:
        raise ConfigurationError("rho must be available for every row of the conditioning population")
    model = _tau_model(sub, rho_sub, spec, seed)
    raw = model.predict(target)
    censored, info = censor_tau(raw, censor if censor is not None else spec.tau_censor)
    return NuisanceFit(kind="tau", predictions=censored, target_d=None,
                       coefficients=model.coefficients, diagnostics=model.diagnostics,
                       clamp_info=info, model=model, row_ids=target.row_ids)


# ---------------------------------------------------------------------------
# cross-fitting


def split_folds(n: int, folds: int, seed: int) -> np.ndarray:
    """Deterministic random fold assignment (balanced within one unit)."""
    perm = stream(seed, 101).permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[perm] = np.arange(n) % folds
    return fold_of


def cross_fit(
    data: Dataset,
    fitter: Callable[[Dataset], NuisanceFit],
    folds: int = 2,
    seed: int = 0,
) -> NuisanceFit:
    """Two-fold cross-fitting: each row is predicted by the other fold's model."""
    if folds != 2:
        raise ConfigurationError("cross-fitting uses exactly 2 folds in this version")
    fold_of = split_folds(data.n, folds, seed)
    preds = np.empty(data.n, dtype=np.float64)
    training_rows = {}
    base = None
    for f in range(folds):
        train = data.subset(fold_of != f)
        heldout = data.subset(fold_of == f)
        fit = fitter(train)
        base = fit
        preds[fold_of == f] = fit.model.predict(heldout)
        training_rows[f] = train.row_ids
    if base.kind in ("propensity", "dg_mean") or (base.kind in ("outcome", "y_dg_mean") and _is_binary(data.y)):
        preds, clamp = _clamp_probs(preds)
    else:
        clamp = {}
    return NuisanceFit(kind=base.kind, predictions=preds, target_d=base.target_d,
                       fold_id=fold_of, coefficients=None, diagnostics=base.diagnostics,
                       clamp_info=clamp, model=None, training_row_ids=training_rows,
                       row_ids=data.row_ids)


def crossfit_tau(
    data: Dataset,
    target_d: int,
    spec: ModelSpec = ModelSpec(),
    seed: int = 0,
    censor: Optional[tuple] = None,
    covariate_idx_prop: Optional[Sequence[int]] = None,
    covariate_idx_out: Optional[Sequence[int]] = None,
) -> NuisanceFit:
    """Cross-fit tau(d, G) with in-fold nuisances.

    Within each fold the propensity and outcome models are fit without
    cross-fitting, the pseudo-outcomes are formed in-fold (stabilised within
    the fold), the regression of the pseudo-outcome on G is fit per fold, and
    its predictions are taken on the other fold. Censoring applies to the
    assembled predictions.
    """
    from .eif import stabilized_pseudo_outcomes

    fold_of = split_folds(data.n, 2, seed)
    raw = np.empty(data.n, dtype=np.float64)
    training_rows = {}
    for f in range(2):
        infold = data.subset(fold_of == f)
        other = data.subset(fold_of != f)
        pfit = fit_propensity(infold, "full_x", spec, seed=seed, covariate_idx=covariate_idx_prop)
        ofit = fit_outcome(infold, target_d, "full_x", spec, seed=seed, covariate_idx=covariate_idx_out)
        rho_in = stabilized_pseudo_outcomes(infold, pfit.predictions, ofit.predictions, target_d)
        tmodel = _tau_model(infold, rho_in.values, spec, seed)
        raw[fold_of != f] = tmodel.predict(other)
        training_rows[1 - f] = infold.row_ids  # rows of fold f trained the model predicting fold 1-f
    censored, info = censor_tau(raw, censor if censor is not None else spec.tau_censor)
    return NuisanceFit(kind="tau", predictions=censored, target_d=target_d,
                       fold_id=fold_of, clamp_info=info, training_row_ids=training_rows,
                       row_ids=data.row_ids)
