"""Test statistics as contrasts of slope estimates, with EIF-based Wald inference.

A test statistic is the difference of two slopes computed on the same rows;
its influence function is the per-observation difference of the component
influence functions, which accounts for the shared-sample correlation that
independent variance addition would miss. Positive statistics support the
corresponding thesis: the background-outcome association weakens after the
transition (equalizer test), or the background-transition association weakens
across successive transitions (transition test).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .eif import (
    Z_975,
    SlopeEstimate,
    estimate_conditional_logit_cf_slope,
    estimate_counterfactual_slope,
    estimate_dg_slope,
    estimate_factual_slopes,
)
from .errors import ConfigurationError
from .nuisance import ModelSpec

TEST_NAMES = (
    "GE_descriptive", "GE_selection_free",
    "ST_descriptive", "ST_selection_free",
    "ST_linear_descriptive", "ST_linear_selection_free",
    "ST_cond_descriptive", "ST_cond_selection_free",
)

MISSPECIFICATIONS = ("none", "wrong_propensity", "wrong_outcome", "both_wrong")


@dataclass
class TestResult:
    """Contrast of two slope estimates on the same observations."""

    name: str
    point: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    p_one_sided: float
    component_a: SlopeEstimate
    component_b: SlopeEstimate
    n: int

    def stars(self) -> str:
        return "***" if self.p_value < 0.001 else "**" if self.p_value < 0.01 \
            else "*" if self.p_value < 0.05 else ""


def contrast(a: SlopeEstimate, b: SlopeEstimate, name: str = "contrast") -> TestResult:
    """TestResult for a - b with the EIF of the difference."""
    if a.n != b.n or not np.array_equal(a.row_ids, b.row_ids):
        raise ConfigurationError(
            f"cannot contrast {a.label} and {b.label}: estimates were computed "
            "on different observation sets"
        )
    point = a.point - b.point
    eif = a.eif - b.eif
    se = float(np.sqrt(np.mean(eif ** 2) / a.n))
    if point == 0.0:
        z, p = 0.0, 1.0
    elif se == 0.0:
        z, p = np.inf, 0.0
    else:
        z = point / se
        p = float(2.0 * norm.sf(abs(z)))
    p_one = float(norm.sf(z)) if np.isfinite(z) else (0.0 if z > 0 else 1.0)
    return TestResult(name=name, point=point, se=se,
                      ci_low=point - Z_975 * se, ci_high=point + Z_975 * se,
                      p_value=p, p_one_sided=p_one,
                      component_a=a, component_b=b, n=a.n)


def joint_se(a: SlopeEstimate, b: SlopeEstimate) -> float:
    """Conservative joint standard error for comparing two estimates."""
    return float(np.sqrt(a.se ** 2 + b.se ** 2))


def _misspec_indices(data: Dataset, misspecification: str):
    """Covariate subsets for the wrong-model modes: drop everything but G."""
    if misspecification not in MISSPECIFICATIONS:
        raise ConfigurationError(
            f"unknown misspecification {misspecification!r}, expected one of {MISSPECIFICATIONS}"
        )
    g_only = [data.g_index]
    prop = g_only if misspecification in ("wrong_propensity", "both_wrong") else None
    out = g_only if misspecification in ("wrong_outcome", "both_wrong") else None
    return prop, out


@dataclass
class AnalysisResult:
    """Slopes plus the descriptive and selection-free tests for one analysis."""

    slopes: dict
    descriptive: TestResult
    selection_free: TestResult
    diagnostics: dict = field(default_factory=dict)


def run_ge(
    data: Dataset,
    spec: ModelSpec = ModelSpec(),
    seed: int = 0,
    use_cross_fit: bool = False,
    misspecification: str = "none",
) -> AnalysisResult:
    """Great-equalizer tests: linear factual and counterfactual slope contrasts.

    descriptive     = linear_factual(0) - linear_factual(1)
    selection_free  = linear_cf(0) - linear_cf(1)
    """
    if bool(np.isin(data.y, (0.0, 1.0)).all()):
        raise ConfigurationError("the equalizer analysis expects a continuous outcome")
    prop_idx, out_idx = _misspec_indices(data, misspecification)
    slopes = {}
    for d in (0, 1):
        slopes[f"linear_factual({d})"] = estimate_factual_slopes(data, d, "linear", spec, seed)
        slopes[f"linear_cf({d})"] = estimate_counterfactual_slope(
            data, d, "linear", spec, seed, use_cross_fit,
            covariate_idx_prop=prop_idx, covariate_idx_out=out_idx)
    descriptive = contrast(slopes["linear_factual(0)"], slopes["linear_factual(1)"],
                           "GE_descriptive")
    selection_free = contrast(slopes["linear_cf(0)"], slopes["linear_cf(1)"],
                              "GE_selection_free")
    return AnalysisResult(slopes, descriptive, selection_free)


def run_st(
    data: Dataset,
    spec: ModelSpec = ModelSpec(),
    formulation: str = "logit_main",
    seed: int = 0,
    use_cross_fit: bool = False,
    misspecification: str = "none",
) -> AnalysisResult:
    """School-transition tests in one of three formulations.

    logit_main      descriptive    = logit_dg - logit_factual(1)
                    selection_free = logit_dg - logit_cf(1)
    linear_alt      same structure with linear slopes and Cov(D,G)/Var(G)
    conditional_alt the logit formulation restricted to the P=1 population
    """
    if not bool(np.isin(data.y, (0.0, 1.0)).all()):
        raise ConfigurationError("the transition analysis expects a binary outcome")
    if formulation not in ("logit_main", "linear_alt", "conditional_alt"):
        raise ConfigurationError(f"unknown formulation {formulation!r}")
    prop_idx, out_idx = _misspec_indices(data, misspecification)

    if formulation == "conditional_alt":
        if data.p is None:
            raise ConfigurationError("conditional_alt requires a P column")
        sub = data.subset(data.p == 1.0)
        dg = estimate_dg_slope(data, "logit", given_p1=True, spec=spec, seed=seed)
        factual = estimate_factual_slopes(sub, 1, "logit", spec, seed, population="p1")
        cf = estimate_conditional_logit_cf_slope(data, spec, seed, use_cross_fit)
        slopes = {"logit_dg_given_p1": dg, "logit_factual(1)|p1": factual,
                  "logit_cf_given_p1": cf}
        descriptive = contrast(dg, factual, "ST_cond_descriptive")
        selection_free = contrast(dg, cf, "ST_cond_selection_free")
        return AnalysisResult(slopes, descriptive, selection_free)

    scale = "logit" if formulation == "logit_main" else "linear"
    dg = estimate_dg_slope(data, scale, given_p1=False, spec=spec, seed=seed)
    factual = estimate_factual_slopes(data, 1, scale, spec, seed)
    cf = estimate_counterfactual_slope(data, 1, scale, spec, seed, use_cross_fit,
                                       covariate_idx_prop=prop_idx,
                                       covariate_idx_out=out_idx)
    prefix = "ST" if scale == "logit" else "ST_linear"
    slopes = {f"{scale}_dg": dg, f"{scale}_factual(1)": factual, f"{scale}_cf(1)": cf}
    descriptive = contrast(dg, factual, f"{prefix}_descriptive")
    selection_free = contrast(dg, cf, f"{prefix}_selection_free")
    return AnalysisResult(slopes, descriptive, selection_free)
