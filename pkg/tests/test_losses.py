"""Loss-construction tests: explicit-formula oracles and form equivalences."""

import numpy as np
import pytest

from ivlate.errors import EmptyArm, EmptyCell
from ivlate.losses import (
    ips_cal_loss,
    ips_ml_loss,
    outcome_loss,
    sigmoid,
    treatment_loss,
    weight_function,
)
from ivlate.model import Dataset, DesignView, build_design, intercept_term, raw_terms


def make_data(rng, n=40, k=3):
    x = rng.standard_normal((n, k))
    z = (rng.random(n) < 0.5).astype(float)
    d = (rng.random(n) < 0.5).astype(float)
    y = rng.standard_normal(n) * d
    ds = Dataset(y=y, d=d, z=z, x=x)
    design = build_design(ds, [intercept_term()] + raw_terms(range(k)))
    return ds, design


def test_cal_loss_explicit_formula():
    rng = np.random.default_rng(0)
    ds, design = make_data(rng)
    loss = ips_cal_loss(1, design, ds.z)
    beta = rng.normal(0, 0.3, design.m + 1)
    eta = design.matrix @ beta
    oracle = np.mean((1.0 - ds.z) * eta + ds.z * np.exp(-eta))
    assert abs(loss.value(beta) - oracle) < 1e-12

    loss0 = ips_cal_loss(0, design, ds.z)
    oracle0 = np.mean(-ds.z * eta + (1.0 - ds.z) * np.exp(eta))
    assert abs(loss0.value(beta) - oracle0) < 1e-12


def test_ml_loss_is_logistic_nll():
    rng = np.random.default_rng(1)
    ds, design = make_data(rng)
    loss = ips_ml_loss(design, ds.z)
    beta = rng.normal(0, 0.3, design.m + 1)
    eta = design.matrix @ beta
    oracle = np.mean(-ds.z * eta + np.log1p(np.exp(eta)))
    assert abs(loss.value(beta) - oracle) < 1e-12


def test_treatment_wl_loss_oracle():
    rng = np.random.default_rng(2)
    ds, design = make_data(rng)
    gamma = rng.normal(0, 0.3, design.m + 1)
    loss = treatment_loss(1, "WL", design, ds.d, ds.z, design_f=design, gamma_hat=gamma)
    alpha = rng.normal(0, 0.3, design.m + 1)
    eta = design.matrix @ alpha
    w = np.exp(-np.clip(design.matrix @ gamma, -30, 30))
    oracle = np.mean(ds.z * w * (-ds.d * eta + np.log1p(np.exp(eta))))
    assert abs(loss.value(alpha) - oracle) < 1e-12


def test_outcome_wl_matches_pseudo_response_form():
    """The product form and the pseudo-response (divided) form agree."""
    rng = np.random.default_rng(3)
    for _ in range(100):
        ds, design = make_data(rng, n=30)
        gamma = rng.normal(0, 0.2, design.m + 1)
        # keep fitted m in [0.1, 0.9]
        alpha_z = np.zeros(design.m + 1)
        alpha_z[0] = rng.uniform(-2.0, 2.0)
        m_z = sigmoid(design.matrix @ alpha_z)
        assert np.all((m_z > 0.09) & (m_z < 0.91))
        loss = outcome_loss(
            1, 1, "WL", design, ds.y, ds.d, ds.z,
            design_f=design, gamma_hat=gamma,
            design_g=design, alpha_z_hat=alpha_z, link="identity",
        )
        beta = rng.normal(0, 0.3, design.m + 1)
        eta = design.matrix @ beta
        w = np.exp(-np.clip(design.matrix @ gamma, -30, 30))
        pseudo = ds.d * ds.y / m_z
        oracle = np.mean(ds.z * w * m_z * (-pseudo * eta + eta**2 / 2.0))
        assert abs(loss.value(beta) - oracle) < 1e-10


def test_outcome_ml_is_cell_least_squares():
    rng = np.random.default_rng(4)
    ds, design = make_data(rng)
    loss = outcome_loss(1, 1, "ML", design, ds.y, ds.d, ds.z, link="identity")
    beta = rng.normal(0, 0.3, design.m + 1)
    eta = design.matrix @ beta
    cell = (ds.z == 1.0) & (ds.d == 1.0)
    oracle = np.mean(cell * (-ds.y * eta + eta**2 / 2.0))
    assert abs(loss.value(beta) - oracle) < 1e-12


def test_weight_function_is_inverse_odds():
    rng = np.random.default_rng(5)
    ds, design = make_data(rng)
    gamma = rng.normal(0, 0.3, design.m + 1)
    pi = sigmoid(design.matrix @ gamma)
    np.testing.assert_allclose(
        weight_function(1, design, gamma), (1.0 - pi) / pi, rtol=1e-10
    )
    np.testing.assert_allclose(
        weight_function(0, design, gamma), pi / (1.0 - pi), rtol=1e-10
    )


def test_empty_arm_and_cell_raise():
    rng = np.random.default_rng(6)
    ds, design = make_data(rng)
    all_one = Dataset(y=ds.y, d=ds.d, z=np.ones(ds.n), x=ds.x)
    with pytest.raises(EmptyArm):
        treatment_loss(0, "ML", design, all_one.d, all_one.z)
    none_treated = Dataset(y=ds.y * 0.0, d=np.zeros(ds.n), z=ds.z, x=ds.x)
    with pytest.raises(EmptyCell):
        outcome_loss(1, 1, "ML", design, none_treated.y, none_treated.d,
                     none_treated.z, link="identity")


def test_subset_indices_restrict_rows():
    rng = np.random.default_rng(7)
    ds, design = make_data(rng)
    idx = np.arange(0, ds.n, 2)
    loss = ips_ml_loss(design, ds.z, indices=idx)
    beta = rng.normal(0, 0.3, design.m + 1)
    eta = (design.matrix @ beta)[idx]
    oracle = np.mean(-ds.z[idx] * eta + np.log1p(np.exp(eta)))
    assert abs(loss.value(beta) - oracle) < 1e-12
