import numpy as np
import pytest

from cfslope import ConfigurationError, build_design
from conftest import toy_dataset


def test_outcome_interacted_column_count_k2():
    data = toy_dataset(n=30)
    X, names = build_design(data, "outcome_interacted")
    # 1 + X(2) + G^2 + D + D*X(2) + D*G^2 = 8 columns
    assert X.shape == (30, 8)
    assert names == ["const", "g", "z", "g_sq", "d", "d:g", "d:z", "d:g_sq"]


def test_tau_quadratic_is_three_columns():
    data = toy_dataset(n=30)
    X, names = build_design(data, "tau_quadratic")
    assert X.shape[1] == 3
    assert names == ["const", "g", "g_sq"]
    assert np.allclose(X[:, 2], data.g ** 2)


def test_prediction_row_substitutes_d():
    data = toy_dataset(n=30)
    X1, _ = build_design(data, "outcome_interacted", target_d=1)
    # with D=1 the interaction block duplicates the main-effect block
    assert np.array_equal(X1[:, 4], np.ones(30))
    assert np.array_equal(X1[:, 5:7], X1[:, 1:3])
    assert np.array_equal(X1[:, 7], X1[:, 3])
    X0, _ = build_design(data, "outcome_interacted", target_d=0)
    assert np.all(X0[:, 4:] == 0.0)


def test_propensity_additive_layout():
    data = toy_dataset(n=30)
    X, names = build_design(data, "propensity_additive")
    assert names == ["const", "g", "z", "g_sq"]
    X2, names2 = build_design(data, "propensity_additive", include_g_squared=False)
    assert names2 == ["const", "g", "z"]
    assert X2.shape[1] == 3


def test_covariate_subset_keeps_g():
    data = toy_dataset(n=30)
    # passing the non-G column only: the background column is re-added first
    other = [j for j in range(data.k) if j != data.g_index]
    X, names = build_design(data, "propensity_additive", covariate_idx=other)
    assert "g" in names


def test_unknown_design_rejected():
    with pytest.raises(ConfigurationError):
        build_design(toy_dataset(n=10), "cubic")
