"""Augmented-IPW estimating functions, point estimates, variances, Wald CIs.

Point estimates are ratios of sample means of per-observation estimating
functions; variances come from the sandwich forms in the source methodology,
with Wald intervals estimate +/- z * sqrt(V / n).  IPW and outcome-regression
plug-in baselines are included for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import PropensityAtBoundary, ZeroDenominator
from .model import Dataset, NuisanceEstimates

Vector = np.ndarray

DENOM_TOL = 1e-12
DEFAULT_LEVELS = (0.90, 0.95)
# fixed rounded critical values for the two standard levels
Z_CRIT = {0.90: 1.6449, 0.95: 1.9600}


def _z_crit(level: float) -> float:
    return Z_CRIT.get(level, NormalDist().inv_cdf(0.5 + level / 2.0))


@dataclass(frozen=True)
class EstimatingFunctions:
    """Per-observation AIPW estimating functions and their contrasts."""

    phi_d1: Vector
    phi_d0: Vector
    phi_d1y11: Vector
    phi_d0y10: Vector
    phi_d0y00: Optional[Vector] = None
    phi_d1y01: Optional[Vector] = None

    @property
    def tau_d(self) -> Vector:
        return self.phi_d1 - self.phi_d0

    @property
    def tau_dy1(self) -> Vector:
        return self.phi_d1y11 - self.phi_d0y10

    @property
    def tau_dy0(self) -> Optional[Vector]:
        if self.phi_d0y00 is None or self.phi_d1y01 is None:
            return None
        return self.phi_d0y00 - self.phi_d1y01


@dataclass(frozen=True)
class LateReport:
    """Point estimates, variances, and Wald intervals for theta1/theta0/LATE."""

    method: str
    n: int
    theta1: Optional[float] = None
    theta0: Optional[float] = None
    late: Optional[float] = None
    v1: Optional[float] = None
    v0: Optional[float] = None
    v: Optional[float] = None
    # ci[target][level] = (lower, upper)
    ci: Dict[str, Dict[float, Tuple[float, float]]] = field(default_factory=dict)
    denominator: float = float("nan")


def _wald(est: float, v: float, n: int, levels: Sequence[float]) -> Dict[float, Tuple[float, float]]:
    half = {lev: _z_crit(lev) * np.sqrt(v / n) for lev in levels}
    return {lev: (est - h, est + h) for lev, h in half.items()}


def estimating_functions(
    dataset: Dataset, nuisance: NuisanceEstimates
) -> EstimatingFunctions:
    """Evaluate the per-observation AIPW estimating functions."""
    z, d, y = dataset.z, dataset.d, dataset.y
    pi1 = nuisance.fitted_pi[1]
    pi0 = nuisance.fitted_pi[0]
    for name, pi in (("pi1", pi1), ("pi0", pi0)):
        if np.any(pi <= 0.0) or np.any(pi >= 1.0):
            raise PropensityAtBoundary(f"{name} reaches 0 or 1")
    m1 = nuisance.fitted_m[1]
    m0 = nuisance.fitted_m[0]
    my11 = nuisance.fitted_my[(1, 1)]
    my10 = nuisance.fitted_my[(1, 0)]

    w1 = z / pi1
    w0 = (1.0 - z) / (1.0 - pi0)
    phi_d1 = w1 * d - (w1 - 1.0) * m1
    phi_d0 = w0 * d - (w0 - 1.0) * m0
    phi_d1y11 = w1 * d * y - (w1 - 1.0) * m1 * my11
    phi_d0y10 = w0 * d * y - (w0 - 1.0) * m0 * my10

    phi_d0y00 = phi_d1y01 = None
    if (0, 0) in nuisance.fitted_my and (0, 1) in nuisance.fitted_my:
        my00 = nuisance.fitted_my[(0, 0)]
        my01 = nuisance.fitted_my[(0, 1)]
        phi_d0y00 = w0 * (1.0 - d) * y - (w0 - 1.0) * (1.0 - m0) * my00
        phi_d1y01 = w1 * (1.0 - d) * y - (w1 - 1.0) * (1.0 - m1) * my01

    return EstimatingFunctions(
        phi_d1=phi_d1,
        phi_d0=phi_d0,
        phi_d1y11=phi_d1y11,
        phi_d0y10=phi_d0y10,
        phi_d0y00=phi_d0y00,
        phi_d1y01=phi_d1y01,
    )


def estimate_effects(
    dataset: Dataset,
    nuisance: NuisanceEstimates,
    targets: Optional[Sequence[str]] = None,
    levels: Sequence[float] = DEFAULT_LEVELS,
) -> LateReport:
    """AIPW ratio estimates with sandwich variances and Wald intervals."""
    ef = estimating_functions(dataset, nuisance)
    n = dataset.n
    tau_d = ef.tau_d
    denom = float(np.mean(tau_d))
    if abs(denom) < DENOM_TOL:
        raise ZeroDenominator("mean estimated complier share is numerically zero")
    if targets is None:
        targets = ("theta1",) if ef.tau_dy0 is None else ("theta1", "theta0", "late")
    unknown = set(targets) - {"theta1", "theta0", "late"}
    if unknown:
        raise ValueError(f"unknown targets {sorted(unknown)}")
    if {"theta0", "late"} & set(targets) and ef.tau_dy0 is None:
        raise ValueError("theta0/late require the untreated-outcome models")

    out: Dict[str, float] = {}
    var: Dict[str, float] = {}
    ci: Dict[str, Dict[float, Tuple[float, float]]] = {}

    theta1 = float(np.mean(ef.tau_dy1)) / denom
    theta0 = None
    if ef.tau_dy0 is not None:
        theta0 = float(np.mean(ef.tau_dy0)) / denom
    if "theta1" in targets:
        out["theta1"] = theta1
        var["theta1"] = float(np.mean((ef.tau_dy1 - theta1 * tau_d) ** 2)) / denom**2
    if "theta0" in targets:
        out["theta0"] = theta0
        var["theta0"] = float(np.mean((ef.tau_dy0 - theta0 * tau_d) ** 2)) / denom**2
    if "late" in targets:
        late = theta1 - theta0
        out["late"] = late
        var["late"] = (
            float(np.mean((ef.tau_dy1 - ef.tau_dy0 - late * tau_d) ** 2)) / denom**2
        )
    for key, est in out.items():
        ci[key] = _wald(est, var[key], n, levels)

    return LateReport(
        method=nuisance.method,
        n=n,
        theta1=out.get("theta1"),
        theta0=out.get("theta0"),
        late=out.get("late"),
        v1=var.get("theta1"),
        v0=var.get("theta0"),
        v=var.get("late"),
        ci=ci,
        denominator=denom,
    )


def _ipw_influence(
    z: Vector,
    d: Vector,
    y: Vector,
    num_d: Vector,
    pi: Vector,
    p: Optional[float],
) -> Tuple[float, Vector]:
    """Ratio estimate and per-observation influence values for one IPW target.

    ``num_d`` selects the outcome-side indicator (d for theta1, 1-d for
    theta0 with the arms swapped by the caller via sign conventions).  When
    ``p`` is given, pi is the constant p = mean(z) and the delta method
    includes the variation of that sample proportion.
    """
    # divide only on rows whose arm indicator is 1, so a boundary pi on a
    # non-contributing row never produces 0 * inf
    w1 = np.where(z == 1.0, np.divide(1.0, pi, where=z == 1.0, out=np.zeros_like(pi)), 0.0)
    w0 = np.where(
        z == 0.0, np.divide(1.0, 1.0 - pi, where=z == 0.0, out=np.zeros_like(pi)), 0.0
    )
    a = w1 * num_d * y - w0 * num_d * y
    c = w1 * d - w0 * d
    num = float(np.mean(a))
    den = float(np.mean(c))
    if abs(den) < DENOM_TOL:
        raise ZeroDenominator("IPW denominator is numerically zero")
    theta = num / den
    infl = (a - num) - theta * (c - den)
    if p is not None:
        # d(num)/dp and d(den)/dp for the plugged-in sample proportion
        dnum = float(np.mean(-z * num_d * y / p**2 - (1.0 - z) * num_d * y / (1.0 - p) ** 2))
        dden = float(np.mean(-z * d / p**2 - (1.0 - z) * d / (1.0 - p) ** 2))
        infl = infl + (dnum - theta * dden) * (z - p)
    return theta, infl / den


def ipw_wald(
    dataset: Dataset,
    pi_hat: Union[float, Vector, None] = None,
    levels: Sequence[float] = DEFAULT_LEVELS,
    include_theta0: bool = False,
) -> LateReport:
    """IPW (Wald) ratio estimator with delta-method variances.

    ``pi_hat`` may be omitted (the sample proportion mean(Z) is used and its
    sampling variation enters the variance), a constant, or a fitted vector.
    """
    z, d, y = dataset.z, dataset.d, dataset.y
    n = dataset.n
    p = None
    if pi_hat is None:
        p = float(np.mean(z))
        pi = np.full(n, p)
    elif np.isscalar(pi_hat):
        pi = np.full(n, float(pi_hat))
    else:
        pi = np.asarray(pi_hat, dtype=float)
    bad = ((pi <= 0.0) & (z == 1.0)) | ((pi >= 1.0) & (z == 0.0))
    if np.any(bad):
        raise PropensityAtBoundary("pi_hat hits a boundary on a contributing row")

    theta1, inf1 = _ipw_influence(z, d, y, d, pi, p)
    v1 = float(np.mean(inf1**2))
    report = {
        "theta1": theta1,
        "v1": v1,
        "ci": {"theta1": _wald(theta1, v1, n, levels)},
    }
    theta0 = late = v0 = v = None
    if include_theta0:
        theta0, inf0 = _ipw_influence(z, d, y, 1.0 - d, pi, p)
        # theta0 swaps the instrument arms in the numerator
        theta0 = -theta0
        inf0 = -inf0
        v0 = float(np.mean(inf0**2))
        late = theta1 - theta0
        v = float(np.mean((inf1 - inf0) ** 2))
        report["ci"]["theta0"] = _wald(theta0, v0, n, levels)
        report["ci"]["late"] = _wald(late, v, n, levels)
    return LateReport(
        method="IPW",
        n=n,
        theta1=theta1,
        theta0=theta0,
        late=late,
        v1=v1,
        v0=v0,
        v=v,
        ci=report["ci"],
    )


def or_plugin(dataset: Dataset, nuisance: NuisanceEstimates) -> LateReport:
    """Outcome-regression plug-in ratio estimates (no variance reported)."""
    m1 = nuisance.fitted_m[1]
    m0 = nuisance.fitted_m[0]
    denom = float(np.mean(m1) - np.mean(m0))
    if abs(denom) < DENOM_TOL:
        raise ZeroDenominator("mean fitted complier share is numerically zero")
    my11 = nuisance.fitted_my[(1, 1)]
    my10 = nuisance.fitted_my[(1, 0)]
    theta1 = float(np.mean(my11 * m1) - np.mean(my10 * m0)) / denom
    theta0 = late = None
    if (0, 0) in nuisance.fitted_my and (0, 1) in nuisance.fitted_my:
        my00 = nuisance.fitted_my[(0, 0)]
        my01 = nuisance.fitted_my[(0, 1)]
        theta0 = float(
            np.mean((1.0 - m0) * my00) - np.mean((1.0 - m1) * my01)
        ) / denom
        late = theta1 - theta0
    return LateReport(
        method=f"{nuisance.method}-OR",
        n=dataset.n,
        theta1=theta1,
        theta0=theta0,
        late=late,
        denominator=denom,
    )
