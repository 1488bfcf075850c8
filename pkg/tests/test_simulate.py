"""Data-generating process tests: transforms, truncation, scenarios, studies."""

import numpy as np
import pytest
from scipy.special import ndtr

from ivlate.errors import InvalidDims
from ivlate.simulate import (
    SimConfig,
    TRUNC_HI,
    TRUNC_LO,
    W_MEANS,
    W_SDS,
    gen_covariates,
    gen_sample,
    run_replication,
    run_study,
    study_spec,
    transform_covariates,
    true_theta,
    truncated_sd,
)


def test_truncated_sd_value():
    # closed form: sqrt(1 - 2 c phi(c) / (2 Phi(c) - 1)) at c = 2.5
    c = 2.5
    phi = np.exp(-0.5 * c * c) / np.sqrt(2 * np.pi)
    mass = ndtr(c) - ndtr(-c)
    assert truncated_sd() == pytest.approx(np.sqrt(1 - 2 * c * phi / mass), abs=1e-14)
    assert truncated_sd() == pytest.approx(0.9545974863445807, abs=1e-12)


def test_truncated_support_and_moments():
    cov = gen_covariates(20000, 4, seed=0)
    x = cov["x_raw"]
    sd = truncated_sd()
    assert np.all(x > TRUNC_LO / sd) and np.all(x < TRUNC_HI / sd)
    # standardized draws: mean 0, sd 1
    assert np.mean(x) == pytest.approx(0.0, abs=0.02)
    assert np.std(x) == pytest.approx(1.0, abs=0.02)


def test_transform_point_values():
    # at x = 0 the raw transforms are W1 = e^0 = 1, W2 = 10 + 0 = 10,
    # W3 = 0.6^3 = 0.216, W4 = 20^2 = 400
    x = np.zeros((1, 5))
    out = transform_covariates(x)
    raw = out[0, :4] * np.array(W_SDS) + np.array(W_MEANS)
    np.testing.assert_allclose(raw, [1.0, 10.0, 0.216, 400.0], atol=1e-8)
    # columns beyond the fourth pass through untouched
    assert out[0, 4] == 0.0


def test_transformed_columns_are_standardized():
    cov = gen_covariates(200000, 4, seed=1)
    xd = cov["x_dag"]
    np.testing.assert_allclose(np.mean(xd, axis=0), np.zeros(4), atol=0.02)
    np.testing.assert_allclose(np.std(xd, axis=0), np.ones(4), atol=0.02)


def test_gen_sample_determinism_and_shapes():
    cfg = SimConfig(scenario="C1", n=150, p=8, seed=42)
    a = gen_sample(cfg)
    b = gen_sample(cfg)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.x.shape == (150, 8)
    assert set(np.unique(a.z)) <= {0.0, 1.0}
    assert set(np.unique(a.d)) <= {0.0, 1.0}
    # Y = Y(1) * D: zero whenever untreated
    assert np.all(a.y[a.d == 0.0] == 0.0)
    np.testing.assert_array_equal(a.y_observed, a.d == 1.0)


def test_c4_instrument_marginally_randomized():
    cfg = SimConfig(scenario="C4", n=20000, p=4, seed=3)
    ds = gen_sample(cfg)
    assert np.mean(ds.z) == pytest.approx(0.5, abs=0.02)
    # the instrument is independent of the covariates
    corr = np.abs(np.corrcoef(ds.z, ds.x[:, 0])[0, 1])
    assert corr < 0.03


def test_c1_instrument_depends_on_covariates():
    cfg = SimConfig(scenario="C1", n=20000, p=4, seed=4)
    ds = gen_sample(cfg)
    corr = np.corrcoef(ds.z, ds.x[:, 0])[0, 1]
    assert corr > 0.1


def test_instrument_monotonicity_in_sample():
    # with the same latent draws, lowering the instrument index by 2.5
    # removes treatment only; compliers have D(0) <= D(1)... the DGP builds
    # D(z) = 1(1 - 2.5 z + index >= U), so D is non-increasing in z and the
    # complier share is positive
    cfg = SimConfig(scenario="C1", n=5000, p=4, seed=5)
    ds = gen_sample(cfg)
    assert 0.0 < np.mean(ds.d) < 1.0
    # empirical complier share: P(D=1|Z=0) - P(D=1|Z=1) > 0
    p0 = np.mean(ds.d[ds.z == 0.0])
    p1 = np.mean(ds.d[ds.z == 1.0])
    assert p0 - p1 > 0.2


def test_true_theta_determinism_and_mc_rate():
    t1 = true_theta("C1", mc_samples=20000, mc_reps=4)
    t2 = true_theta("C1", mc_samples=20000, mc_reps=4)
    assert t1 == t2
    t_big = true_theta("C1", mc_samples=200000, mc_reps=4)
    # the Monte Carlo standard error shrinks roughly like 1/sqrt(samples)
    assert t_big["mc_se"] < t1["mc_se"]
    assert t1["theta1"] == pytest.approx(t_big["theta1"], abs=5 * t1["mc_se"] + 5 * t_big["mc_se"])
    # C1 and C4 share the treatment/outcome covariates, hence the same truth
    t4 = true_theta("C4", mc_samples=20000, mc_reps=4)
    assert t4["theta1"] == t1["theta1"]


def test_study_spec_m2_adds_fitted_terms():
    m1 = study_spec(SimConfig(scenario="C1", p=6))
    m2 = study_spec(SimConfig(scenario="C1", p=6, model_spec="M2"))
    assert m1.f_terms == m2.f_terms == m1.g_terms
    assert len(m2.h_terms) == len(m1.h_terms) + 8
    kinds = [t.kind for t in m2.h_terms[len(m1.h_terms):]]
    assert kinds == ["fitted"] + ["fitted_hinge"] * 3 + ["fitted"] + ["fitted_hinge"] * 3


def test_config_validation():
    with pytest.raises(InvalidDims):
        SimConfig(scenario="C9")
    with pytest.raises(InvalidDims):
        SimConfig(scenario="C1", p=3)
    with pytest.raises(InvalidDims):
        SimConfig(scenario="C1", estimators=("OLS",))
    with pytest.raises(InvalidDims):
        SimConfig(scenario="C1", model_spec="M3")


def test_run_replication_deterministic_and_distinct():
    cfg = SimConfig(
        scenario="C4", n=300, p=10, seed=6, replications=3, estimators=("IPW",)
    )
    a = run_replication(cfg, 0)
    b = run_replication(cfg, 0)
    c = run_replication(cfg, 1)
    assert a["IPW"]["theta1"] == b["IPW"]["theta1"]
    assert a["IPW"]["theta1"] != c["IPW"]["theta1"]


def test_run_study_small_end_to_end(tmp_path):
    cfg = SimConfig(
        scenario="C4", n=400, p=10, seed=7, replications=8, estimators=("IPW",)
    )
    truth = true_theta("C4", mc_samples=50000, mc_reps=3)
    table = run_study(cfg, truth=truth)
    row = table.rows["IPW"]
    assert row.n_used == 8 and row.n_failed == 0
    ests = table.estimates["IPW"]
    assert row.bias == pytest.approx(np.mean(ests) - truth["theta1"], abs=1e-12)
    assert row.sqrt_var == pytest.approx(np.std(ests, ddof=1), abs=1e-12)
    assert row.sqrt_evar == pytest.approx(
        np.sqrt(np.mean(table.variances["IPW"] / cfg.n)), abs=1e-12
    )
    assert 0.0 <= row.cov90 <= 1.0 and 0.0 <= row.cov95 <= 1.0

    csv_path = tmp_path / "table.csv"
    json_path = tmp_path / "table.json"
    table.to_csv(str(csv_path))
    table.to_json(str(json_path))
    text = csv_path.read_text()
    assert "IPW" in text and "bias" in text
    import json

    prov = json.loads(json_path.read_text())
    assert prov["config"]["scenario"] == "C4"
    assert prov["failures"] == {"IPW": 0}
