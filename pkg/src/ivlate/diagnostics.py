"""Post-fit diagnostics: KKT/balance residuals, boundedness, calibration
differences, and per-observation influence values.

All diagnostics are pure reports; nothing here mutates a fit.  Exports are
CSV only — plotting is left to external tools.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .aipw import LateReport, estimating_functions
from .errors import ZeroDenominator, ZeroVariance
from .model import Dataset, DesignView, NuisanceEstimates

Vector = np.ndarray


def calibration_differences(
    dataset: Dataset, pi_hat: Vector, design_f: DesignView
) -> Dict[str, object]:
    """Standardized calibration differences of each non-intercept f_j.

    The Z=1 version divides the weighted-minus-overall mean gap of f_j by
    its sample standard deviation; the Z=0 version is the symmetric analog
    with weights (1-Z)/(1-pi).
    """
    z = dataset.z
    mat = design_f.matrix[:, 1:]
    sds = mat.std(axis=0)
    if np.any(sds <= 0.0):
        raise ZeroVariance("design contains a constant non-intercept column")
    labels = [t.label() for t in design_f.terms[1:]] or [
        f"f{j}" for j in range(1, mat.shape[1] + 1)
    ]
    out: Dict[str, object] = {"labels": labels}
    for arm, w in ((1, z / pi_hat), (0, (1.0 - z) / (1.0 - pi_hat))):
        num = (w - 1.0)[:, None] * mat
        cal = num.mean(axis=0) / np.mean(w) / sds
        out[f"cal{arm}"] = cal
    return out


@dataclass(frozen=True)
class RangeCheck:
    estimate: float
    range_lo: float
    range_hi: float

    @property
    def inside(self) -> bool:
        return self.range_lo <= self.estimate <= self.range_hi


def boundedness_check(
    dataset: Dataset, nuisance: NuisanceEstimates
) -> Dict[str, RangeCheck]:
    """Verify the AIPW means lie inside their sample/fitted-value ranges.

    For calibrated fits the simplified-form identities make this automatic;
    for likelihood-based fits the report may show inside=False.
    """
    ef = estimating_functions(dataset, nuisance)
    z, d, y = dataset.z, dataset.d, dataset.y
    m1, m0 = nuisance.fitted_m[1], nuisance.fitted_m[0]
    my11, my10 = nuisance.fitted_my[(1, 1)], nuisance.fitted_my[(1, 0)]
    checks = {
        "phi_d1": (ef.phi_d1, np.concatenate([d[z == 1.0], m1[z == 0.0]])),
        "phi_d0": (ef.phi_d0, np.concatenate([d[z == 0.0], m0[z == 1.0]])),
        "phi_d1y11": (
            ef.phi_d1y11,
            np.concatenate([(d * y)[z == 1.0], (m1 * my11)[z == 0.0]]),
        ),
        "phi_d0y10": (
            ef.phi_d0y10,
            np.concatenate([(d * y)[z == 0.0], (m0 * my10)[z == 1.0]]),
        ),
    }
    return {
        name: RangeCheck(
            estimate=float(np.mean(phi)),
            range_lo=float(np.min(pool)),
            range_hi=float(np.max(pool)),
        )
        for name, (phi, pool) in checks.items()
    }


def kkt_balance_report(
    dataset: Dataset, nuisance: NuisanceEstimates
) -> Dict[str, object]:
    """Weight-sum, covariate-balance, and intercept-identity residuals.

    The balance bound applies to the standardized design the penalized fit
    ran on; the maximum absolute weighted-balance gap should not exceed the
    selected penalty (up to solver tolerance) for a calibrated fit.
    """
    z, d, y = dataset.z, dataset.d, dataset.y
    pi1, pi0 = nuisance.fitted_pi[1], nuisance.fitted_pi[0]
    m1, m0 = nuisance.fitted_m[1], nuisance.fitted_m[0]
    my11, my10 = nuisance.fitted_my[(1, 1)], nuisance.fitted_my[(1, 0)]
    f_std = nuisance.design_f_std.matrix[:, 1:]
    w1 = z / pi1
    w0 = (1.0 - z) / (1.0 - pi0)
    report: Dict[str, object] = {
        "weight_sum_1": float(np.mean(w1) - 1.0),
        "weight_sum_0": float(np.mean(w0) - 1.0),
        "balance_max_1": float(np.max(np.abs(np.mean((w1 - 1.0)[:, None] * f_std, axis=0)))),
        "balance_max_0": float(np.max(np.abs(np.mean((w0 - 1.0)[:, None] * f_std, axis=0)))),
        "treatment_intercept_1": float(np.mean(z * (1.0 - pi1) / pi1 * (d - m1))),
        "treatment_intercept_0": float(np.mean((1.0 - z) * pi0 / (1.0 - pi0) * (d - m0))),
        "outcome_intercept_11": float(
            np.mean(z * (1.0 - pi1) / pi1 * (d * y - m1 * my11))
        ),
        "outcome_intercept_10": float(
            np.mean((1.0 - z) * pi0 / (1.0 - pi0) * (d * y - m0 * my10))
        ),
        "lambda_gamma1": nuisance.lambdas.get("gamma1", nuisance.lambdas.get("gamma")),
        "lambda_gamma0": nuisance.lambdas.get("gamma0", nuisance.lambdas.get("gamma")),
    }
    if (0, 0) in nuisance.fitted_my:
        my00, my01 = nuisance.fitted_my[(0, 0)], nuisance.fitted_my[(0, 1)]
        report["outcome_intercept_00"] = float(
            np.mean((1.0 - z) * pi0 / (1.0 - pi0) * ((1.0 - d) * y - (1.0 - m0) * my00))
        )
        report["outcome_intercept_01"] = float(
            np.mean(z * (1.0 - pi1) / pi1 * ((1.0 - d) * y - (1.0 - m1) * my01))
        )
    return report


def influence_values(
    dataset: Dataset,
    nuisance: NuisanceEstimates,
    report: LateReport,
    standardized: bool = True,
) -> Vector:
    """Per-observation influence values for the LATE estimate.

    With ``standardized`` the values are centered and scaled to unit sample
    variance (the form used for QQ plotting); otherwise the raw values are
    returned, whose mean is zero by the estimating-equation identity and
    whose mean square equals the variance estimate V-hat.
    """
    if report.late is None:
        raise ZeroDenominator("report does not contain a LATE estimate")
    ef = estimating_functions(dataset, nuisance)
    tau_d = ef.tau_d
    denom = float(np.mean(tau_d))
    if abs(denom) < 1e-12:
        raise ZeroDenominator("mean estimated complier share is numerically zero")
    raw = (ef.tau_dy1 - ef.tau_dy0 - report.late * tau_d) / denom
    if not standardized:
        return raw
    centered = raw - raw.mean()
    sd = centered.std()
    if sd <= 0.0:
        raise ZeroVariance("influence values are constant")
    return centered / sd


def export_influence_csv(path: str, values: Vector) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "influence"])
        for i, v in enumerate(values):
            writer.writerow([i, repr(float(v))])


def export_calibration_csv(path: str, diffs: Dict[str, object]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["term", "cal_z1", "cal_z0"])
        for label, c1, c0 in zip(diffs["labels"], diffs["cal1"], diffs["cal0"]):
            writer.writerow([label, repr(float(c1)), repr(float(c0))])
