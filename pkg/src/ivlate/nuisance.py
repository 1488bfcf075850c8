"""Sequential nuisance-model fitting: RCAL, RML, and post-Lasso RML2.

The pipeline is order-dependent by construction:

  1. instrument-propensity coefficients gamma (calibrated per arm for RCAL;
     one shared maximum-likelihood fit for RML/RML2);
  2. treatment-model coefficients alpha_z, with inverse-odds weights from
     step 1 under RCAL;
  3. outcome-model coefficients alpha_{dz}, with weights from step 1 and
     fitted treatment means from step 2 under RCAL.

Each penalized fit selects its penalty by 5-fold cross-validation on its own
loss.  The outcome design h may contain terms built from the fitted
treatment means of step 2, so it is constructed mid-sequence.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Dict, Optional, Tuple

import numpy as np

from .crossval import CvConfig, CvResult, make_folds, select_lambda
from .errors import EmptyArm, NotConverged, RefitDiverged
from .losses import (
    Y_LINKS,
    ips_cal_loss,
    ips_ml_loss,
    outcome_loss,
    sigmoid,
    treatment_loss,
)
from .model import (
    BasisSpec,
    Dataset,
    DesignView,
    NuisanceEstimates,
    build_design,
    coef_to_original_scale,
    standardize,
    validate_spec,
)
from .solver import LossObjective, PenalizedFit, SolverConfig, fit_penalized

Vector = np.ndarray

METHODS = ("RCAL", "RML", "RML2")

# post-Lasso refits are unpenalized; drive the score essentially to zero
REFIT_CONFIG = SolverConfig(tol_obj=1e-12, tol_kkt=1e-9, tol_intercept=1e-10)


def post_lasso_refit(fit: PenalizedFit, loss: LossObjective) -> Vector:
    """Unpenalized refit of ``loss`` restricted to {intercept} + active set.

    Returns a full-length coefficient vector, exactly zero off the support.
    Raises RefitDiverged on separation or non-convergence; the caller is
    expected to fall back to the penalized coefficients.
    """
    cols = np.array([0] + list(fit.active_set), dtype=np.intp)
    sub_loss = LossObjective(
        X=np.ascontiguousarray(loss.X[:, cols]),
        a=loss.a,
        b=loss.b,
        link=loss.link,
        n0=loss.n0,
        cap=loss.cap,
    )
    refit = fit_penalized(sub_loss, 0.0, REFIT_CONFIG, warm_start=fit.coef[cols])
    if refit.diverged or not refit.converged:
        raise RefitDiverged(
            f"unpenalized refit on support of size {len(fit.active_set)} "
            "did not converge"
        )
    out = np.zeros(loss.dimension)
    out[cols] = refit.coef
    return out


def _cv_fit(
    name: str,
    loss_builder,
    folds,
    cv_config: CvConfig,
    solver_config: SolverConfig,
) -> CvResult:
    result = select_lambda(
        loss_builder, folds, config=solver_config, n_grid=cv_config.n_grid
    )
    if not result.fit.converged:
        raise NotConverged(
            f"{name} fit did not converge at the selected penalty "
            f"lambda={result.lambda_selected:.6g}"
        )
    return result


def fit_nuisances(
    dataset: Dataset,
    spec: BasisSpec,
    method: str,
    cv_config: CvConfig = CvConfig(),
    solver_config: SolverConfig = SolverConfig(),
    include_theta0: bool = False,
    y_link: str = "identity",
) -> NuisanceEstimates:
    """Fit all nuisance models for one dataset under one method."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if y_link not in Y_LINKS:
        raise ValueError(f"unsupported outcome link {y_link!r}")
    if not spec.validated:
        spec = validate_spec(spec, dataset)
    z, d, y = dataset.z, dataset.d, dataset.y
    for arm in (1, 0):
        if not np.any(z == arm):
            raise EmptyArm(f"no observations with Z={arm}")

    # one stratified fold partition, shared by every model fit: stratifying
    # on (Z, D) keeps each training complement valid for all three losses
    strata = (2 * z + d).astype(np.intp)
    folds = make_folds(strata, cv_config.n_folds, cv_config.seed)

    design_f = build_design(dataset, list(spec.f_terms))
    design_g = build_design(dataset, list(spec.g_terms))
    f_std = standardize(design_f)
    g_std = standardize(design_g)

    lambdas: Dict[str, float] = {}
    extras: Dict[str, object] = {"refit_failures": [], "cv": {}}

    def run(name: str, builder) -> Vector:
        result = _cv_fit(name, builder, folds, cv_config, solver_config)
        lambdas[name] = result.lambda_selected
        extras["cv"][name] = {
            "grid": result.lambda_grid,
            "curve": result.cv_curve,
        }
        extras.setdefault("fits", {})[name] = result.fit
        return result.fit.coef

    def refit_or_keep(name: str, coef_std: Vector, loss: LossObjective) -> Vector:
        fit = extras["fits"][name]
        try:
            return post_lasso_refit(fit, loss)
        except RefitDiverged as exc:
            extras["refit_failures"].append(f"{name}: {exc}")
            return coef_std

    # --- instrument propensity score ------------------------------------
    gamma_std: Dict[int, Vector] = {}
    if method == "RCAL":
        for arm in (1, 0):
            gamma_std[arm] = run(
                f"gamma{arm}",
                lambda idx, a=arm: ips_cal_loss(a, f_std, z, indices=idx),
            )
    else:
        shared = run("gamma", lambda idx: ips_ml_loss(f_std, z, indices=idx))
        if method == "RML2":
            shared = refit_or_keep("gamma", shared, ips_ml_loss(f_std, z))
        gamma_std = {1: shared, 0: shared}

    # --- treatment model -------------------------------------------------
    variant = "WL" if method == "RCAL" else "ML"
    alpha_d_std: Dict[int, Vector] = {}
    for arm in (1, 0):
        builder = lambda idx, a=arm: treatment_loss(
            a, variant, g_std, d, z,
            design_f=f_std, gamma_hat=gamma_std[a], indices=idx,
        )
        alpha_d_std[arm] = run(f"alpha_d{arm}", builder)
        if method == "RML2":
            alpha_d_std[arm] = refit_or_keep(
                f"alpha_d{arm}", alpha_d_std[arm], builder(None)
            )

    gamma = {arm: coef_to_original_scale(f_std, gamma_std[arm]) for arm in (1, 0)}
    alpha_d = {arm: coef_to_original_scale(g_std, alpha_d_std[arm]) for arm in (1, 0)}
    fitted_pi = {arm: sigmoid(design_f.matrix @ gamma[arm]) for arm in (1, 0)}
    fitted_m = {arm: sigmoid(design_g.matrix @ alpha_d[arm]) for arm in (1, 0)}

    # --- outcome models (h may reference the fitted treatment means) -----
    design_h = build_design(
        dataset,
        list(spec.h_terms),
        fitted={"m_d0": fitted_m[0], "m_d1": fitted_m[1]},
    )
    h_std = standardize(design_h)

    cells: Tuple[Tuple[int, int], ...] = ((1, 1), (1, 0))
    if include_theta0:
        cells += ((0, 0), (0, 1))
    alpha_y_std: Dict[Tuple[int, int], Vector] = {}
    for treated, arm in cells:
        builder = lambda idx, t=treated, a=arm: outcome_loss(
            t, a, variant, h_std, y, d, z,
            design_f=f_std, gamma_hat=gamma_std[a],
            design_g=g_std, alpha_z_hat=alpha_d_std[a],
            link=y_link, indices=idx,
        )
        name = f"alpha_y{treated}{arm}"
        alpha_y_std[(treated, arm)] = run(name, builder)
        if method == "RML2":
            alpha_y_std[(treated, arm)] = refit_or_keep(
                name, alpha_y_std[(treated, arm)], builder(None)
            )

    alpha_y = {
        key: coef_to_original_scale(h_std, coef) for key, coef in alpha_y_std.items()
    }
    if y_link == "identity":
        fitted_my = {key: design_h.matrix @ coef for key, coef in alpha_y.items()}
    else:
        fitted_my = {key: sigmoid(design_h.matrix @ coef) for key, coef in alpha_y.items()}

    extras.pop("fits", None)
    return NuisanceEstimates(
        method=method,
        gamma=gamma,
        alpha_d=alpha_d,
        alpha_y=alpha_y,
        fitted_pi=fitted_pi,
        fitted_m=fitted_m,
        fitted_my=fitted_my,
        lambdas=lambdas,
        y_link=y_link,
        design_f=design_f,
        design_g=design_g,
        design_h=design_h,
        design_f_std=f_std,
        design_g_std=g_std,
        design_h_std=h_std,
        extras=extras,
    )
