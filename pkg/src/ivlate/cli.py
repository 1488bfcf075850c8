"""Command-line interface.

Commands: simulate (emit dataset CSVs), fit (dataset -> LATE report JSON),
study (Monte Carlo summary table), diagnose (post-fit diagnostic CSVs),
oracle-constants (regenerate the frozen standardization constants).

Exit codes: 0 success, 2 validation error, 3 convergence failure,
4 degenerate estimand.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Dict, Optional

import numpy as np

from . import __version__
from .aipw import estimate_effects, ipw_wald
from .crossval import CvConfig
from .diagnostics import (
    boundedness_check,
    calibration_differences,
    export_calibration_csv,
    export_influence_csv,
    influence_values,
    kkt_balance_report,
)
from .errors import (
    AllFitsDiverged,
    ConstantColumn,
    DimensionMismatch,
    DuplicateColumn,
    EmptyArm,
    EmptyCell,
    FoldConstructionFailed,
    InvalidDims,
    IvlateError,
    MissingColumn,
    NonBinaryInstrument,
    NonBinaryTreatment,
    NonFiniteObjective,
    NotConverged,
    ParseError,
    PropensityAtBoundary,
    RefitDiverged,
    SubvectorViolation,
    ZeroDenominator,
    ZeroVariance,
)
from .io import BasisRecipe, Schema, expand_basis, load_dataset, write_dataset
from .nuisance import fit_nuisances
from .simulate import (
    SimConfig,
    gen_sample,
    oracle_constants,
    run_study,
    true_theta,
)

VALIDATION_ERRORS = (
    ParseError,
    MissingColumn,
    DuplicateColumn,
    NonBinaryTreatment,
    NonBinaryInstrument,
    ConstantColumn,
    SubvectorViolation,
    DimensionMismatch,
    InvalidDims,
    EmptyArm,
    EmptyCell,
)
CONVERGENCE_ERRORS = (
    NotConverged,
    AllFitsDiverged,
    RefitDiverged,
    NonFiniteObjective,
    FoldConstructionFailed,
)
DEGENERATE_ERRORS = (ZeroDenominator, PropensityAtBoundary, ZeroVariance)


def _schema_from_args(args) -> Schema:
    return Schema(
        y_col=args.y_col,
        d_col=args.d_col,
        z_col=args.z_col,
        x_cols=tuple(args.x_cols.split(",")),
        na_tokens=tuple(args.na_tokens.split("|")),
        add_missing_indicators=not args.no_missing_indicators,
    )


def _report_to_dict(report) -> Dict[str, object]:
    targets: Dict[str, object] = {}
    for name, est, var in (
        ("theta1", report.theta1, report.v1),
        ("theta0", report.theta0, report.v0),
        ("late", report.late, report.v),
    ):
        if est is None:
            continue
        entry: Dict[str, object] = {"est": est, "var": var}
        for level, pair in report.ci.get(name, {}).items():
            entry[f"ci{int(round(level * 100))}"] = [float(pair[0]), float(pair[1])]
        targets[name] = entry
    return {"method": report.method, "n": report.n, "targets": targets}


def cmd_simulate(args) -> int:
    config = SimConfig(
        scenario=args.scenario, n=args.n, p=args.p, seed=args.seed,
        replications=args.reps,
    )
    children = np.random.SeedSequence(config.seed).spawn(config.replications)
    for r in range(config.replications):
        ds = gen_sample(config, rng=np.random.default_rng(children[r]))
        out = f"{args.out}_rep{r}.csv"
        write_dataset(out, ds)
        print(out)
    return 0


def _fit_pipeline(args):
    dataset = load_dataset(args.data, _schema_from_args(args))
    recipe = BasisRecipe(mode=args.model_spec)
    spec, _ = expand_basis(dataset, recipe)
    if args.method == "IPW":
        return dataset, None, ipw_wald(dataset, include_theta0=args.theta0)
    nuisance = fit_nuisances(
        dataset,
        spec,
        args.method,
        cv_config=CvConfig(seed=args.seed),
        include_theta0=args.theta0,
    )
    targets = ("theta1", "theta0", "late") if args.theta0 else ("theta1",)
    report = estimate_effects(dataset, nuisance, targets=targets)
    return dataset, nuisance, report


def cmd_fit(args) -> int:
    dataset, nuisance, report = _fit_pipeline(args)
    payload = _report_to_dict(report)
    payload["seed"] = args.seed
    if nuisance is not None:
        payload["lambdas"] = nuisance.lambdas
        payload["kkt"] = kkt_balance_report(dataset, nuisance)
        payload["boundedness"] = {
            k: {"estimate": v.estimate, "range_lo": v.range_lo,
                "range_hi": v.range_hi, "inside": v.inside}
            for k, v in boundedness_check(dataset, nuisance).items()
        }
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_study(args) -> int:
    config = SimConfig(
        scenario=args.scenario,
        n=args.n,
        p=args.p,
        seed=args.seed,
        model_spec=args.model_spec,
        replications=args.reps,
        estimators=tuple(args.estimators.split(",")),
    )
    if args.full_scale:
        truth = true_theta(config.scenario, mc_samples=10**7, mc_reps=100)
    else:
        truth = true_theta(config.scenario)
    table = run_study(config, truth=truth, verbose=args.verbose)
    table.to_csv(f"{args.out}_summary.csv")
    table.to_json(f"{args.out}_provenance.json")
    for name, row in table.rows.items():
        print(
            f"{name}: bias={row.bias:+.4f} sqrt_var={row.sqrt_var:.4f} "
            f"sqrt_evar={row.sqrt_evar:.4f} cov90={row.cov90:.3f} "
            f"cov95={row.cov95:.3f} failed={row.n_failed}"
        )
    return 0


def cmd_diagnose(args) -> int:
    dataset, nuisance, report = _fit_pipeline(args)
    if nuisance is None:
        raise InvalidDims("diagnose requires a model-based method, not IPW")
    prefix = args.out
    diffs = calibration_differences(
        dataset, nuisance.fitted_pi[1], nuisance.design_f
    )
    export_calibration_csv(f"{prefix}_calibration.csv", diffs)
    if report.late is not None:
        vals = influence_values(dataset, nuisance, report)
        export_influence_csv(f"{prefix}_influence.csv", vals)
    payload = {
        "kkt": kkt_balance_report(dataset, nuisance),
        "boundedness": {
            k: {"estimate": v.estimate, "range_lo": v.range_lo,
                "range_hi": v.range_hi, "inside": v.inside}
            for k, v in boundedness_check(dataset, nuisance).items()
        },
    }
    with open(f"{prefix}_checks.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"{prefix}_calibration.csv")
    print(f"{prefix}_checks.json")
    return 0


def cmd_oracle_constants(args) -> int:
    out = oracle_constants(seed=args.seed, draws=args.draws)
    print(json.dumps(out, indent=2))
    return 0


def _add_schema_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="input CSV path")
    p.add_argument("--y-col", required=True)
    p.add_argument("--d-col", required=True)
    p.add_argument("--z-col", required=True)
    p.add_argument("--x-cols", required=True, help="comma-separated covariate columns")
    p.add_argument("--na-tokens", default="|NA", help="pipe-separated NA tokens")
    p.add_argument("--no-missing-indicators", action="store_true")
    p.add_argument("--method", default="RCAL",
                   choices=["RCAL", "RML", "RML2", "IPW"])
    p.add_argument("--model-spec", default="M1", choices=["M1", "M2"])
    p.add_argument("--theta0", action="store_true",
                   help="also estimate theta0 and the LATE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="", help="output path (prefix for diagnose)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivlate",
        description="Regularized calibrated estimation of LATE with "
        "instrumental variables in high dimensions",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit simulated dataset CSVs")
    p.add_argument("--scenario", required=True,
                   choices=["C1", "C2", "C3", "C4", "C5"])
    p.add_argument("--n", type=int, default=800)
    p.add_argument("--p", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one dataset and report estimates")
    _add_schema_args(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("study", help="run a Monte Carlo study")
    p.add_argument("--scenario", required=True,
                   choices=["C1", "C2", "C3", "C4", "C5"])
    p.add_argument("--n", type=int, default=800)
    p.add_argument("--p", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--model-spec", default="M1", choices=["M1", "M2"])
    p.add_argument("--estimators", default="RCAL",
                   help="comma-separated subset of RCAL,RML,RML2,IPW")
    p.add_argument("--full-scale", action="store_true",
                   help="use the full-scale truth computation (100 x 1e7)")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("diagnose", help="fit and export diagnostic CSVs")
    _add_schema_args(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("oracle-constants",
                       help="recompute the frozen W standardization constants")
    p.add_argument("--seed", type=int, default=314159)
    p.add_argument("--draws", type=int, default=10**7)
    p.set_defaults(func=cmd_oracle_constants)

    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DEGENERATE_ERRORS as exc:
        print(f"error (degenerate estimand): {exc}", file=sys.stderr)
        return 4
    except CONVERGENCE_ERRORS as exc:
        print(f"error (convergence): {exc}", file=sys.stderr)
        return 3
    except VALIDATION_ERRORS as exc:
        print(f"error (validation): {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return 2
    except IvlateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
