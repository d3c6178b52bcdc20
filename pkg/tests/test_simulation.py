import numpy as np
import pytest

from cfslope import (
    ConfigurationError,
    ExperimentSpec,
    analytic_linear_cf,
    generate,
    make_dgp,
    oracle_truth,
    run_experiment,
)


def test_sutva_identity_exact():
    sample = generate(make_dgp("A_continuous", 2000, 1))
    d = sample.dataset.d
    assert np.array_equal(sample.dataset.y, d * sample.y1 + (1 - d) * sample.y0)


def test_z_on_g_slope_is_half():
    sample = generate(make_dgp("A_continuous", 100_000, 2))
    g = sample.dataset.g
    z = sample.dataset.x[:, 1]
    slope = np.cov(z, g, bias=True)[0, 1] / np.var(g)
    assert abs(slope - 0.5) < 0.02


def test_generation_is_bit_reproducible():
    a = generate(make_dgp("C_sequential", 3000, 9))
    b = generate(make_dgp("C_sequential", 3000, 9))
    assert np.array_equal(a.dataset.y, b.dataset.y)
    assert np.array_equal(a.dataset.d, b.dataset.d)
    assert np.array_equal(a.dataset.p, b.dataset.p)
    assert np.array_equal(a.y1, b.y1)
    assert np.array_equal(a.true_propensity, b.true_propensity)


def test_sequential_dgp_respects_prerequisite():
    sample = generate(make_dgp("C_sequential", 5000, 4))
    data = sample.dataset
    assert np.all(data.d[data.p == 0] == 0)


def test_overlap_violation_is_config_error():
    with pytest.raises(ConfigurationError, match="overlap"):
        generate(make_dgp("A_continuous", 20_000, 5, d_z=5.0))


def test_unknown_kind_listed():
    with pytest.raises(ConfigurationError, match="valid kinds"):
        make_dgp("D_bogus", 100, 1)


def test_oracle_matches_analytic_for_continuous_dgp():
    config = make_dgp("A_continuous", 1000, 7)
    for d in (0, 1):
        o = oracle_truth(config, f"linear_cf({d})")
        assert o.mc_se > 0.0
        assert abs(o.value - analytic_linear_cf(config, d)) <= 3 * o.mc_se
    assert analytic_linear_cf(config, 1) == pytest.approx(0.45)
    assert analytic_linear_cf(config, 0) == pytest.approx(0.65)


def test_null_dgp_oracles_are_exact_zero():
    ge = oracle_truth(make_dgp("null_GE", 100, 1), "ge_selection_free")
    assert ge.value == 0.0 and ge.mc_se == 0.0
    st = oracle_truth(make_dgp("null_ST", 100, 1), "st_selection_free")
    assert st.value == 0.0 and st.mc_se == 0.0


def test_unsupported_oracle_pair_rejected():
    with pytest.raises(ConfigurationError):
        oracle_truth(make_dgp("A_continuous", 100, 1), "logit_cf_given_p1")


def test_oracle_identities_between_components():
    # the ge statistic oracle equals the difference of its slope oracles
    config = make_dgp("A_continuous", 1000, 7)
    ge = oracle_truth(config, "ge_selection_free", mc_draws=2_000_000)
    c0 = oracle_truth(config, "linear_cf(0)", mc_draws=2_000_000)
    c1 = oracle_truth(config, "linear_cf(1)", mc_draws=2_000_000)
    assert ge.value == pytest.approx(c0.value - c1.value, abs=1e-12)


def test_run_experiment_reproducible_and_structured():
    config = make_dgp("A_continuous", 800, 5)
    spec = ExperimentSpec(analysis="linear_cf")
    r1 = run_experiment(config, spec, replications=4)
    r2 = run_experiment(config, spec, replications=4)
    assert r1.rows == r2.rows
    assert {row["estimand"] for row in r1.rows} == {"linear_cf(1)"}
    pts = r1.points("linear_cf(1)")
    assert len(pts) == 4 and np.all(np.isfinite(pts))
    summary = r1.summarize({"linear_cf(1)": 0.45})
    (row,) = summary
    assert set(row) >= {"estimand", "truth", "mean_est", "bias", "emp_sd",
                        "mean_se", "coverage"}


def test_run_experiment_misspecification_modes_run():
    config = make_dgp("A_continuous", 1200, 6)
    spec = ExperimentSpec(analysis="linear_cf")
    for mode in ("wrong_propensity", "wrong_outcome", "both_wrong"):
        rep = run_experiment(config, spec, replications=2, misspecification=mode)
        assert len(rep.points("linear_cf(1)")) == 2
    with pytest.raises(ConfigurationError):
        run_experiment(config, spec, replications=1, misspecification="oops")
