"""Loss constructors for instrument-propensity, treatment, and outcome models.

All losses share the generic shape handled by the solver:

    L(beta) = (1/n0) sum_i [ -a_i eta_i + b_i Phi(eta_i) ],   eta = X beta.

Instrument propensity score (IPS) losses over gamma:
  calibration, arm z=1:  E~{ Z e^{-eta} + (1-Z) eta }
  calibration, arm z=0:  E~{ (1-Z) e^{eta} - Z eta }
  likelihood:            E~{ -Z eta + log(1 + e^{eta}) }

Treatment model losses over alpha_z (logistic link), restricted to Z=z:
  weighted:   E~( 1{Z=z} w_z [-D eta + log(1+e^{eta})] ),
              w_z(x; gamma) = [{1-pi(x)}/pi(x)]^{2z-1}
  likelihood: the same with w == 1.

Outcome model losses over alpha_{dz} (identity or logistic psi_Y):
  weighted, d=1: E~( 1{Z=z} w_z [-DY eta + m_z Psi_Y(eta)] )
  weighted, d=0: DY replaced by (1-D)Y and m_z by 1-m_z
  likelihood:    E~( 1{Z=z} 1{D=d} [-Y eta + Psi_Y(eta)] )

Weights and treatment means entering a loss are computed once at
construction from the supplied coefficients (capped linear predictors) and
frozen; the sequential procedure holds earlier-stage fits fixed.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch, EmptyArm, EmptyCell
from .model import DesignView
from .solver import LINK_EXP, LINK_EXPNEG, LINK_LOGISTIC, LINK_QUAD, LossObjective

Vector = NDArray[np.float64]

LINPRED_CAP = 30.0

Y_LINKS = {"identity": LINK_QUAD, "logistic": LINK_LOGISTIC}


def sigmoid(eta: Vector) -> Vector:
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -500.0, 500.0)))


def weight_function(arm: int, design_f: DesignView, gamma: Vector, cap: float = LINPRED_CAP) -> Vector:
    """Inverse-odds weight w_z(x; gamma) = [{1-pi}/pi]^{2z-1} from capped eta."""
    eta = np.clip(design_f.matrix @ gamma, -cap, cap)
    if arm == 1:
        return np.exp(-eta)
    return np.exp(eta)


def _subset(idx: Optional[Vector], n: int) -> Vector:
    if idx is None:
        return np.arange(n)
    return np.asarray(idx, dtype=np.intp)


def ips_cal_loss(
    arm: int,
    design_f: DesignView,
    z_vec: Vector,
    indices: Optional[Vector] = None,
) -> LossObjective:
    """Calibration loss for the instrument propensity score, one arm."""
    if design_f.n != z_vec.shape[0]:
        raise DimensionMismatch("design and z have different lengths")
    idx = _subset(indices, design_f.n)
    X = design_f.matrix[idx]
    z = z_vec[idx]
    if arm == 1:
        return LossObjective(X=X, a=z - 1.0, b=z, link=LINK_EXPNEG, n0=len(idx), cap=LINPRED_CAP)
    return LossObjective(X=X, a=z, b=1.0 - z, link=LINK_EXP, n0=len(idx), cap=LINPRED_CAP)


def ips_ml_loss(
    design_f: DesignView,
    z_vec: Vector,
    indices: Optional[Vector] = None,
) -> LossObjective:
    """Average negative log-likelihood for the logistic instrument model."""
    if design_f.n != z_vec.shape[0]:
        raise DimensionMismatch("design and z have different lengths")
    idx = _subset(indices, design_f.n)
    X = design_f.matrix[idx]
    z = z_vec[idx]
    return LossObjective(X=X, a=z, b=np.ones(len(idx)), link=LINK_LOGISTIC, n0=len(idx))


def treatment_loss(
    arm: int,
    variant: str,
    design_g: DesignView,
    d_vec: Vector,
    z_vec: Vector,
    design_f: Optional[DesignView] = None,
    gamma_hat: Optional[Vector] = None,
    indices: Optional[Vector] = None,
) -> LossObjective:
    """Treatment-model loss over alpha_z; variant 'WL' (weighted) or 'ML'."""
    n = design_g.n
    if d_vec.shape[0] != n or z_vec.shape[0] != n:
        raise DimensionMismatch("design and data vectors have different lengths")
    idx = _subset(indices, n)
    z = z_vec[idx]
    ind = z == arm if arm == 1 else z == 0
    if not np.any(ind):
        raise EmptyArm(f"no observations with Z={arm}")
    if variant == "WL":
        if gamma_hat is None or design_f is None:
            raise ValueError("WL variant requires design_f and gamma_hat")
        w = weight_function(arm, design_f, gamma_hat)[idx]
        c = np.where(ind, w, 0.0)
    elif variant == "ML":
        c = ind.astype(float)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    rows = np.nonzero(c > 0.0)[0]
    X = design_g.matrix[idx][rows]
    a = (c * d_vec[idx])[rows]
    b = c[rows]
    return LossObjective(X=X, a=a, b=b, link=LINK_LOGISTIC, n0=len(idx), cap=LINPRED_CAP)


def outcome_loss(
    treated: int,
    arm: int,
    variant: str,
    design_h: DesignView,
    y_vec: Vector,
    d_vec: Vector,
    z_vec: Vector,
    design_f: Optional[DesignView] = None,
    gamma_hat: Optional[Vector] = None,
    design_g: Optional[DesignView] = None,
    alpha_z_hat: Optional[Vector] = None,
    link: str = "identity",
    indices: Optional[Vector] = None,
) -> LossObjective:
    """Outcome-model loss over alpha_{dz} for the D=treated, Z=arm cell.

    The weighted variant multiplies Psi_Y by the fitted treatment mean
    (rather than dividing the response by it), avoiding division by
    near-zero probabilities; the two forms have identical minimizers.
    """
    n = design_h.n
    if y_vec.shape[0] != n or d_vec.shape[0] != n or z_vec.shape[0] != n:
        raise DimensionMismatch("design and data vectors have different lengths")
    if link not in Y_LINKS:
        raise ValueError(f"unsupported outcome link {link!r}")
    idx = _subset(indices, n)
    z = z_vec[idx]
    d = d_vec[idx]
    y = y_vec[idx]
    in_arm = z == arm
    in_cell = in_arm & (d == treated)
    if not np.any(in_cell):
        raise EmptyCell(f"no observations with Z={arm}, D={treated}")
    if variant == "WL":
        if gamma_hat is None or design_f is None or alpha_z_hat is None or design_g is None:
            raise ValueError("WL variant requires design_f/gamma_hat and design_g/alpha_z_hat")
        w = weight_function(arm, design_f, gamma_hat)[idx]
        m_z = sigmoid(design_g.matrix @ alpha_z_hat)[idx]
        c = np.where(in_arm, w, 0.0)
        resp = d * y if treated == 1 else (1.0 - d) * y
        bvec = c * (m_z if treated == 1 else 1.0 - m_z)
        avec = c * resp
        rows = np.nonzero(in_arm)[0]
    elif variant == "ML":
        c = in_cell.astype(float)
        avec = c * y
        bvec = c
        rows = np.nonzero(in_cell)[0]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    X = design_h.matrix[idx][rows]
    return LossObjective(
        X=X, a=avec[rows], b=bvec[rows], link=Y_LINKS[link], n0=len(idx), cap=LINPRED_CAP
    )
