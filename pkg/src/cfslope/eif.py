"""Pseudo-outcomes, slope estimands, and their efficient influence functions.

Every slope estimator here is the sample solution of the estimating equation
mean(EIF) = 0. For a per-observation value column v (a doubly robust
pseudo-outcome, a raw 0/1 column, or a logit-corrected transform) the point
estimate is the least-squares slope of v on G using 1/n sample moments, and
the influence values are evaluated at that estimate, which makes
mean(eif) = 0 an exact identity used as a self-test.

Linear slope of v on G (xi = Cov(v, G)/Var(G)):

    eif_i = (v_i - mean(v)) (G_i - mean(G)) / Var(G) - (G_i - mean(G))^2 / Var(G) * xi

Logit slope (v plays rho, t the fitted E(Y_d|G) in (0,1)):

    T_i    = (v_i - t_i) / (t_i (1 - t_i)) + logit(t_i)
    xi     = Cov(T, G)/Var(G)
    eif_i  = (G_i - mean(G)) (T_i - mean(logit t)) / Var(G)
             - (G_i - mean(G))^2 / Var(G) * xi

With v = D and t = E(D|G) this is the logit D-on-G slope; with the G-only
pseudo-outcome and t = E(Y|D=d,G) it is the factual logit slope; with the
full-covariate pseudo-outcome and t = tau(d,G) it is the counterfactual logit
slope; restricted to the P=1 population it gives the conditional variants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import logit as _logit
from scipy.stats import norm

from .data import Dataset
from .errors import ConfigurationError, DataError, EstimationError, InsufficientDataError
from .nuisance import (
    ModelSpec,
    NuisanceFit,
    cross_fit,
    crossfit_tau,
    fit_outcome,
    fit_propensity,
    fit_tau,
)

Z_975 = 1.959964
MIN_G_VARIANCE = 1e-12


@dataclass
class PseudoOutcome:
    """Doubly robust per-observation imputation of Y_d."""

    values: np.ndarray
    target_d: int
    conditioning: str = "full_x"
    stabilizer: float = 1.0


@dataclass
class SlopeEstimate:
    """A slope estimand with its EIF-based Wald inference."""

    estimand: str
    target_d: Optional[int]
    point: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    eif: np.ndarray
    n: int
    row_ids: np.ndarray
    population: str = "full"
    diagnostics: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if self.target_d is None:
            return self.estimand
        return f"{self.estimand}({self.target_d})"


def _g_moments(g: np.ndarray) -> tuple[float, float]:
    gbar = float(g.mean())
    varg = float(np.mean((g - gbar) ** 2))
    if varg <= MIN_G_VARIANCE:
        raise DataError("Var(G) is numerically zero in the analysis population")
    return gbar, varg


def _wald(point: float, eif: np.ndarray) -> dict:
    n = eif.shape[0]
    se = float(np.sqrt(np.mean(eif ** 2) / n))
    z = 0.0 if point == 0.0 else (np.inf if se == 0.0 else abs(point) / se)
    p = 1.0 if z == 0.0 else (0.0 if np.isinf(z) else float(2.0 * norm.sf(z)))
    return dict(se=se, ci_low=point - Z_975 * se, ci_high=point + Z_975 * se, p_value=p)


def pseudo_outcome(y, d_obs, target_d: int, propensity, mu, stabilizer) -> np.ndarray:
    """rho = [1(d_obs = target_d)/propensity / stabilizer] (y - mu) + mu.

    propensity is P(D=target_d | .); stabilizer is the sample mean of
    1(D=target_d)/propensity over the analysis population.
    """
    stabilizer = float(stabilizer)
    if not stabilizer > 0.0:
        raise EstimationError(f"nonpositive weight stabilizer {stabilizer}")
    y = np.asarray(y, dtype=np.float64)
    d_obs = np.asarray(d_obs, dtype=np.float64)
    propensity = np.asarray(propensity, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    w = (d_obs == float(target_d)) / propensity
    return (w / stabilizer) * (y - mu) + mu


def stabilized_pseudo_outcomes(
    data: Dataset,
    propensity_d1: np.ndarray,
    mu: np.ndarray,
    target_d: int,
    conditioning: str = "full_x",
) -> PseudoOutcome:
    """Build the stabilized pseudo-outcome column for one transition status.

    propensity_d1 is P(D=1 | .); it is flipped for target_d = 0. The
    stabilizer is the sample mean of the raw inverse-probability weight over
    the rows of data, so the stabilized weights average to one exactly.
    """
    p_d = propensity_d1 if target_d == 1 else 1.0 - propensity_d1
    w = (data.d == float(target_d)) / p_d
    stab = float(w.mean())
    values = pseudo_outcome(data.y, data.d, target_d, p_d, mu, stab)
    return PseudoOutcome(values=values, target_d=target_d, conditioning=conditioning,
                         stabilizer=stab)


# ---------------------------------------------------------------------------
# slope machinery


def _linear_slope(values: np.ndarray, g: np.ndarray) -> tuple[float, np.ndarray]:
    gbar, varg = _g_moments(g)
    vbar = float(values.mean())
    gc = g - gbar
    point = float(np.mean((values - vbar) * gc) / varg)
    eif = (values - vbar) * gc / varg - (gc ** 2) / varg * point
    return point, eif


def _logit_slope(values: np.ndarray, t: np.ndarray, g: np.ndarray) -> tuple[float, np.ndarray]:
    if np.any(t <= 0.0) or np.any(t >= 1.0):
        raise EstimationError("tau values outside (0,1); censoring must run before the logit slope")
    gbar, varg = _g_moments(g)
    gc = g - gbar
    lt = _logit(t)
    T = (values - t) / (t * (1.0 - t)) + lt
    point = float(np.mean((T - T.mean()) * gc) / varg)
    eif = gc * (T - float(lt.mean())) / varg - (gc ** 2) / varg * point
    return point, eif


def _make_estimate(estimand, target_d, point, eif, data, population="full",
                   diagnostics=None) -> SlopeEstimate:
    w = _wald(point, eif)
    return SlopeEstimate(estimand=estimand, target_d=target_d, point=point,
                         eif=eif, n=data.n, row_ids=data.row_ids,
                         population=population, diagnostics=diagnostics or {}, **w)


def estimate_linear_slope(
    data: Dataset,
    values: Union[PseudoOutcome, np.ndarray],
    estimand: str = "linear_cf",
    target_d: Optional[int] = None,
    population: str = "full",
) -> SlopeEstimate:
    """Linear slope of a value column on G with its EIF.

    values may be a PseudoOutcome (counterfactual or factual slope) or a raw
    column such as D, which yields the Cov(D,G)/Var(G) influence function.
    """
    if isinstance(values, PseudoOutcome):
        if target_d is None:
            target_d = values.target_d
        col = values.values
    else:
        col = np.asarray(values, dtype=np.float64)
    if col.shape[0] != data.n:
        raise ConfigurationError("value column length does not match the dataset")
    point, eif = _linear_slope(col, data.g)
    return _make_estimate(estimand, target_d, point, eif, data, population)


def estimate_logit_slope(
    data: Dataset,
    rho: PseudoOutcome,
    tau: NuisanceFit,
    estimand: str = "logit_cf",
    population: str = "full",
) -> SlopeEstimate:
    """Logit counterfactual slope from a pseudo-outcome and a censored tau fit."""
    if tau.predictions.shape[0] != data.n:
        raise ConfigurationError("tau predictions do not align with the dataset")
    point, eif = _logit_slope(rho.values, tau.predictions, data.g)
    return _make_estimate(estimand, rho.target_d, point, eif, data, population,
                          diagnostics={"tau_censor": tau.clamp_info})


def estimate_factual_slopes(
    data: Dataset,
    d: int,
    scale: str = "linear",
    spec: ModelSpec = ModelSpec(),
    seed: int = 0,
    population: str = "full",
) -> SlopeEstimate:
    """Factual slope of E(Y|D=d,G) on G using G-only nuisances.

    The pseudo-outcome uses P(D=d|G) and E(Y|D=d,G); the linear scale projects
    it directly, the logit scale applies the logit correction with E(Y|D=d,G)
    in the tau slot.
    """
    if scale not in ("linear", "logit"):
        raise ConfigurationError(f"unknown scale {scale!r}")
    e_fit = fit_propensity(data, "g_only", spec, seed=seed)
    m_fit = fit_outcome(data, d, "g_only", spec, seed=seed)
    rho = stabilized_pseudo_outcomes(data, e_fit.predictions, m_fit.predictions, d,
                                     conditioning="g_only")
    diagnostics = {"dg_clamp": e_fit.clamp_info, "m_clamp": m_fit.clamp_info}
    if scale == "linear":
        est = estimate_linear_slope(data, rho, estimand="linear_factual", target_d=d,
                                    population=population)
        est.diagnostics.update(diagnostics)
        return est
    m = m_fit.predictions
    if np.any(m <= 0.0) or np.any(m >= 1.0):
        raise EstimationError("E(Y|D=d,G) predictions outside (0,1); logit factual slope undefined")
    point, eif = _logit_slope(rho.values, m, data.g)
    return _make_estimate("logit_factual", d, point, eif, data, population, diagnostics)


def estimate_dg_slope(
    data: Dataset,
    scale: str = "logit",
    given_p1: bool = False,
    spec: ModelSpec = ModelSpec(),
    seed: int = 0,
) -> SlopeEstimate:
    """Slope of the D-on-G relationship (logit of E(D|G), or Cov(D,G)/Var(G)).

    given_p1 restricts the analysis population to the P=1 rows.
    """
    if scale not in ("linear", "logit"):
        raise ConfigurationError(f"unknown scale {scale!r}")
    pop = data
    population = "full"
    if given_p1:
        if data.p is None:
            raise ConfigurationError("given_p1 requires a P column")
        pop = data.subset(data.p == 1.0)
        population = "p1"
    if scale == "linear":
        return estimate_linear_slope(pop, pop.d, estimand="linear_dg", target_d=None,
                                     population=population)
    e_fit = fit_propensity(pop, "g_only", spec, seed=seed)
    point, eif = _logit_slope(pop.d, e_fit.predictions, pop.g)
    name = "logit_dg_given_p1" if given_p1 else "logit_dg"
    return _make_estimate(name, None, point, eif, pop, population,
                          {"dg_clamp": e_fit.clamp_info})


def estimate_counterfactual_slope(
    data: Dataset,
    target_d: int,
    scale: str = "linear",
    spec: ModelSpec = ModelSpec(),
    seed: int = 0,
    use_cross_fit: bool = False,
    covariate_idx_prop=None,
    covariate_idx_out=None,
) -> SlopeEstimate:
    """Doubly robust counterfactual slope for one transition status.

    Fits the propensity and outcome nuisances (optionally two-fold
    cross-fitted), builds the stabilized pseudo-outcome for Y_d, and projects
    it on G; the logit scale additionally fits and censors tau(d, G).
    """
    if scale not in ("linear", "logit"):
        raise ConfigurationError(f"unknown scale {scale!r}")
    if use_cross_fit:
        p_fit = cross_fit(
            data, lambda ds: fit_propensity(ds, "full_x", spec, seed=seed,
                                            covariate_idx=covariate_idx_prop),
            seed=seed)
        o_fit = cross_fit(
            data, lambda ds: fit_outcome(ds, target_d, "full_x", spec, seed=seed,
                                         covariate_idx=covariate_idx_out),
            seed=seed)
    else:
        p_fit = fit_propensity(data, "full_x", spec, seed=seed, covariate_idx=covariate_idx_prop)
        o_fit = fit_outcome(data, target_d, "full_x", spec, seed=seed, covariate_idx=covariate_idx_out)
    rho = stabilized_pseudo_outcomes(data, p_fit.predictions, o_fit.predictions, target_d)
    diagnostics = {"propensity_clamp": p_fit.clamp_info, "stabilizer": rho.stabilizer}
    if scale == "linear":
        est = estimate_linear_slope(data, rho, estimand="linear_cf", target_d=target_d)
        est.diagnostics.update(diagnostics)
        return est
    if use_cross_fit:
        tau = crossfit_tau(data, target_d, spec, seed=seed,
                           covariate_idx_prop=covariate_idx_prop,
                           covariate_idx_out=covariate_idx_out)
    else:
        tau = fit_tau(data, rho.values, spec, "marginal", seed=seed)
    est = estimate_logit_slope(data, rho, tau, estimand="logit_cf")
    est.diagnostics.update(diagnostics)
    return est


def estimate_conditional_logit_cf_slope(
    data: Dataset,
    spec: ModelSpec = ModelSpec(),
    seed: int = 0,
    use_cross_fit: bool = False,
) -> SlopeEstimate:
    """Logit slope of E(Y_1 | P=1, G) on G over the P=1 population.

    The propensity is P(D=1 | P=1, X), the outcome regression is the usual
    mu(1, X), and tau(1,1,G) is the regression of the conditional
    pseudo-outcome on G within P=1; all moments use the P=1 rows and n is the
    P=1 count.
    """
    if data.p is None:
        raise ConfigurationError("the conditional slope requires a P column")
    sub = data.subset(data.p == 1.0)
    if sub.n < sub.k + 12:
        raise InsufficientDataError(f"only {sub.n} rows with P=1")
    est = estimate_counterfactual_slope(sub, 1, "logit", spec, seed=seed,
                                        use_cross_fit=use_cross_fit)
    est.estimand = "logit_cf_given_p1"
    est.population = "p1"
    return est
