import numpy as np
import pytest
from scipy.special import expit

from cfslope import (
    ConfigurationError,
    Dataset,
    DegenerateFitError,
    EstimationError,
    InsufficientDataError,
    ModelSpec,
    censor_tau,
    cross_fit,
    dgp_b_logit_linear,
    estimate_counterfactual_slope,
    fit_outcome,
    fit_propensity,
    fit_tau,
    generate,
    joint_se,
    make_dgp,
    stabilized_pseudo_outcomes,
)
from cfslope.rng import derive_seed
from conftest import toy_dataset


def test_fair_coin_propensity_is_calibrated():
    rng = np.random.default_rng(1)
    n = 50_000
    g = rng.standard_normal(n)
    z = rng.standard_normal(n)
    d = (rng.random(n) < 0.5).astype(float)
    y = g + rng.standard_normal(n)
    data = Dataset(y=y, d=d, g=g, x=np.column_stack([g, z]),
                   covariate_names=["g", "z"], row_ids=np.arange(n), g_index=0)
    fit = fit_propensity(data)
    assert abs(fit.predictions.mean() - 0.5) < 0.01


def test_g_only_design_restriction(sample_a):
    fit = fit_propensity(sample_a.dataset, "g_only")
    assert set(fit.coefficients) == {"const", "g", "g_sq"}
    assert fit.kind == "dg_mean"


def test_clamp_rule_reports_bound():
    # a steep separation-free logit pushes fitted values to the floor
    rng = np.random.default_rng(2)
    n = 4000
    g = rng.standard_normal(n) * 4.0
    z = rng.standard_normal(n)
    d = (rng.random(n) < expit(3.0 * g)).astype(float)
    if d.min() == d.max():  # pragma: no cover
        pytest.skip("degenerate draw")
    y = g + rng.standard_normal(n)
    data = Dataset(y=y, d=d, g=g, x=np.column_stack([g, z]),
                   covariate_names=["g", "z"], row_ids=np.arange(n), g_index=0)
    fit = fit_propensity(data)
    assert fit.predictions.min() == pytest.approx(0.001)
    assert fit.predictions.max() == pytest.approx(0.999)
    assert fit.clamp_info["clamped_low"] > 0


def test_insufficient_rows_for_propensity():
    data = toy_dataset(n=10)
    with pytest.raises(InsufficientDataError):
        fit_propensity(data)


def test_outcome_exact_linear_difference():
    rng = np.random.default_rng(3)
    n = 500
    g = rng.standard_normal(n)
    z = rng.standard_normal(n)
    d = (rng.random(n) < 0.5).astype(float)
    y = 1.0 + 2.0 * d + 0.5 * g
    data = Dataset(y=y, d=d, g=g, x=np.column_stack([g, z]),
                   covariate_names=["g", "z"], row_ids=np.arange(n), g_index=0)
    mu1 = fit_outcome(data, 1).predictions
    mu0 = fit_outcome(data, 0).predictions
    assert np.max(np.abs(mu1 - mu0 - 2.0)) < 1e-8


def test_g_only_and_full_x_differ_under_confounding(sample_a):
    data = sample_a.dataset
    full = fit_outcome(data, 1, "full_x").predictions
    gonly = fit_outcome(data, 1, "g_only").predictions
    assert gonly.shape == full.shape
    # selection on Z makes E(Y|D=1,G) differ from mu(1,X) systematically
    assert np.max(np.abs(full - gonly)) > 0.05
    assert fit_outcome(data, 1, "g_only").kind == "y_dg_mean"


def test_binary_outcome_constant_stratum_is_degenerate():
    rng = np.random.default_rng(4)
    n = 300
    g = rng.standard_normal(n)
    z = rng.standard_normal(n)
    d = (rng.random(n) < 0.5).astype(float)
    y = np.where(d == 1, 0.0, (rng.random(n) < 0.5).astype(float))
    data = Dataset(y=y, d=d, g=g, x=np.column_stack([g, z]),
                   covariate_names=["g", "z"], row_ids=np.arange(n), g_index=0)
    with pytest.raises(DegenerateFitError, match="stratum"):
        fit_outcome(data, 1)


def test_tau_censor_recodes_to_sample_maximum():
    g = np.array([0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 2.2, 2.4])
    rho = 0.46 * g  # the quadratic fit reproduces the line exactly
    n = len(g)
    data = Dataset(y=np.ones(n), d=np.ones(n) * (np.arange(n) % 2), g=g,
                   x=g[:, None], covariate_names=["g"], row_ids=np.arange(n), g_index=0)
    fit = fit_tau(data, rho, censor=("in_range",))
    t = fit.predictions
    assert fit.clamp_info["n_above"] == 2
    # the two recoded values tie at the in-range maximum 0.46 * 1.6
    assert t[-1] == t[-2] == pytest.approx(0.46 * 1.6, abs=1e-8)
    assert t[-1] == t.max()


def test_tau_constant_rho():
    data = toy_dataset(n=100)
    fit = fit_tau(data, np.full(100, 0.4))
    assert np.max(np.abs(fit.predictions - 0.4)) < 1e-10


def test_tau_all_out_of_range_is_estimation_error():
    data = toy_dataset(n=100)
    with pytest.raises(EstimationError, match="outside"):
        fit_tau(data, np.full(100, 5.0))


def test_tau_tracks_true_curve_at_central_quantiles():
    # randomized transition keeps the pseudo-outcome light-tailed, so the
    # deviation at central quantiles is dominated by the quadratic basis;
    # averaging over seeds removes the remaining Monte Carlo noise
    deviations = []
    for r in range(5):
        config = make_dgp("B_binary", 50_000, derive_seed(31, r),
                          d0=0.0, d_g=0.0, d_z=0.0,
                          y0=-0.5, y_d=0.8, y_g=0.8, y_z=0.0, y_dg=0.0)
        sample = generate(config)
        data = sample.dataset
        p_fit = fit_propensity(data)
        o_fit = fit_outcome(data, 1)
        rho = stabilized_pseudo_outcomes(data, p_fit.predictions, o_fit.predictions, 1)
        tau = fit_tau(data, rho.values)
        gq = np.quantile(data.g, np.arange(0.1, 0.91, 0.1))
        idx = [int(np.argmin(np.abs(data.g - q))) for q in gq]
        truth = expit(0.3 + 0.8 * data.g[idx])
        deviations.append(tau.predictions[idx] - truth)
    assert np.max(np.abs(np.mean(deviations, axis=0))) < 0.02


def test_quantile_censor_winsorizes_tails():
    raw = np.concatenate([np.linspace(0.05, 0.95, 98), [1.2, -0.1]])
    out, info = censor_tau(raw, ("quantile", 0.01))
    assert out.min() > 0.0 and out.max() < 1.0
    assert info["n_above"] >= 1 and info["n_below"] >= 1


def test_fixed_censor_bounds():
    raw = np.linspace(-0.2, 1.3, 50)
    out, info = censor_tau(raw, ("fixed", 0.03, 0.97))
    assert out.min() == pytest.approx(0.03)
    assert out.max() == pytest.approx(0.97)


def test_cross_fit_fold_bookkeeping(sample_a):
    data = sample_a.dataset
    fit = cross_fit(data, lambda ds: fit_propensity(ds), seed=5)
    assert set(np.unique(fit.fold_id)) == {0, 1}
    for f in (0, 1):
        predicted = set(data.row_ids[fit.fold_id == f].tolist())
        trained = set(fit.training_row_ids[f].tolist())
        assert predicted.isdisjoint(trained)
        assert trained == set(data.row_ids[fit.fold_id != f].tolist())


def test_cross_fit_deterministic(sample_a):
    data = sample_a.dataset
    a = cross_fit(data, lambda ds: fit_propensity(ds), seed=5)
    b = cross_fit(data, lambda ds: fit_propensity(ds), seed=5)
    assert np.array_equal(a.predictions, b.predictions)
    assert np.array_equal(a.fold_id, b.fold_id)


def test_cross_fit_requires_two_folds(sample_a):
    with pytest.raises(ConfigurationError):
        cross_fit(sample_a.dataset, lambda ds: fit_propensity(ds), folds=5)


def test_cross_fit_insufficient_fold():
    data = toy_dataset(n=24)
    with pytest.raises(InsufficientDataError):
        cross_fit(data, lambda ds: fit_propensity(ds), seed=1)


def test_crossfit_vs_plain_parametric_agree():
    agree = 0
    R = 200
    for r in range(R):
        sample = generate(make_dgp("A_continuous", 10_000, derive_seed(77, r)))
        plain = estimate_counterfactual_slope(sample.dataset, 1, "linear")
        crossed = estimate_counterfactual_slope(sample.dataset, 1, "linear",
                                                seed=r, use_cross_fit=True)
        if abs(plain.point - crossed.point) < 2.0 * joint_se(plain, crossed):
            agree += 1
    assert agree / R >= 0.9


def test_stabilized_weights_average_to_one(sample_a):
    data = sample_a.dataset
    p_fit = fit_propensity(data)
    o_fit = fit_outcome(data, 1)
    rho = stabilized_pseudo_outcomes(data, p_fit.predictions, o_fit.predictions, 1)
    w = (data.d == 1.0) / p_fit.predictions / rho.stabilizer
    assert abs(w.mean() - 1.0) < 1e-12


def test_location_shift_invariance_parametric(sample_a):
    data = sample_a.dataset
    shift = 2.7
    x2 = data.x.copy()
    x2[:, data.g_index] = data.g + shift
    shifted = Dataset(y=data.y, d=data.d, g=data.g + shift, x=x2,
                      covariate_names=data.covariate_names,
                      row_ids=data.row_ids, g_index=data.g_index)
    for fit_fn in (lambda ds: fit_propensity(ds).predictions,
                   lambda ds: fit_outcome(ds, 1).predictions):
        base = fit_fn(data)
        moved = fit_fn(shifted)
        assert np.max(np.abs(base - moved)) < 1e-8
