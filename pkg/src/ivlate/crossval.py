"""Tuning-parameter selection by K-fold cross-validation.

The penalty level for each Lasso fit is chosen by minimizing the K-fold
cross-validated value of the *same* loss used for fitting, over the grid
{lambda_max / 2**j : j = 0..n_grid-1}.  Ties are broken toward the larger
penalty (sparser model).  Folds are stratified so that every training
complement contains the observation cells the loss needs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import AllFitsDiverged, FoldConstructionFailed
from .solver import LossObjective, PenalizedFit, SolverConfig, fit_penalized, lambda_max

Vector = np.ndarray

# A loss builder maps a row-index subset (None = all rows) to a LossObjective
# over that subset.  The same builder evaluates held-out loss on test rows.
LossBuilder = Callable[[Optional[np.ndarray]], LossObjective]

TIE_TOL = 1e-12


@dataclass(frozen=True)
class CvConfig:
    n_folds: int = 5
    n_grid: int = 11
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_folds < 2:
            raise ValueError("n_folds must be at least 2")
        if self.n_grid < 1:
            raise ValueError("n_grid must be at least 1")


@dataclass(frozen=True)
class CvResult:
    lambda_selected: float
    lambda_grid: Tuple[float, ...]
    cv_curve: Tuple[float, ...]
    fold_curves: np.ndarray = field(repr=False)
    fit: PenalizedFit = field(repr=False)

    @property
    def selected_index(self) -> int:
        return self.lambda_grid.index(self.lambda_selected)


def make_folds(
    strata: Vector,
    n_folds: int,
    seed: int,
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Stratified K-fold partition of {0..n-1}.

    ``strata`` is an integer label per observation (e.g. 2*z + d); within each
    label the shuffled indices are dealt round-robin across folds, so the fold
    cell counts differ by at most one.  Returns (train_idx, test_idx) pairs
    covering {0..n-1} disjointly.
    """
    strata = np.asarray(strata)
    n = strata.shape[0]
    if n_folds < 2 or n_folds > n:
        raise FoldConstructionFailed(
            f"cannot build {n_folds} folds from {n} observations"
        )
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.intp)
    offset = 0
    for label in np.unique(strata):
        members = np.flatnonzero(strata == label)
        rng.shuffle(members)
        assignment[members] = (offset + np.arange(members.size)) % n_folds
        offset += members.size
    folds = []
    all_idx = np.arange(n)
    for k in range(n_folds):
        test = all_idx[assignment == k]
        if test.size == 0:
            raise FoldConstructionFailed(f"fold {k} is empty")
        folds.append((all_idx[assignment != k], test))
    return folds


def default_grid(lam_star: float, n_grid: int = 11) -> Tuple[float, ...]:
    return tuple(lam_star / 2.0**j for j in range(n_grid))


def _fit_path(
    loss: LossObjective,
    grid: Sequence[float],
    config: SolverConfig,
    stop_index: Optional[int] = None,
) -> List[Optional[PenalizedFit]]:
    """Warm-started fits along a descending grid.

    Once a fit diverges, all smaller penalties are skipped (the objective is
    unbounded below there too) and recorded as None.
    """
    fits: List[Optional[PenalizedFit]] = [None] * len(grid)
    warm: Optional[Vector] = None
    last = len(grid) - 1 if stop_index is None else stop_index
    for j, lam in enumerate(grid[: last + 1]):
        fit = fit_penalized(loss, lam, config, warm_start=warm)
        if fit.diverged:
            break
        fits[j] = fit
        warm = fit.coef
    return fits


def select_lambda(
    loss_builder: LossBuilder,
    folds: Sequence[Tuple[np.ndarray, np.ndarray]],
    grid: Optional[Sequence[float]] = None,
    config: SolverConfig = SolverConfig(),
    n_grid: int = 11,
) -> CvResult:
    """Pick the penalty minimizing the K-fold cross-validated loss.

    ``loss_builder(indices)`` must return the loss restricted to the given
    rows (all rows when indices is None), with the averaging denominator
    equal to the subset size, so held-out values are comparable across folds.
    """
    full_loss = loss_builder(None)
    if grid is None:
        lam_star = lambda_max(full_loss, config)
        if lam_star <= 0.0:
            warnings.warn(
                "lambda_max is zero (slopes vanish at the start point); "
                "skipping cross-validation and fitting unpenalized",
                stacklevel=2,
            )
            fit = fit_penalized(full_loss, 0.0, config)
            return CvResult(0.0, (0.0,), (np.nan,), np.full((len(folds), 1), np.nan), fit)
        grid = default_grid(lam_star, n_grid)
    grid = tuple(float(g) for g in grid)
    if any(g2 >= g1 for g1, g2 in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly decreasing")

    # Fold fits only feed the CV curve, so they run at a relaxed tolerance;
    # at the smallest grid penalties near-degenerate fits would otherwise
    # burn most of the runtime polishing digits the curve cannot use.  The
    # final full-sample fit below keeps the strict tolerances.
    fold_config = replace(
        config,
        tol_obj=max(config.tol_obj, 1e-6),
        tol_kkt=max(config.tol_kkt, 1e-4),
        max_outer_iters=min(config.max_outer_iters, 100),
        max_inner_iters=min(config.max_inner_iters, 100),
        kkt_required=False,
    )
    fold_curves = np.full((len(folds), len(grid)), np.inf)
    for k, (train, test) in enumerate(folds):
        train_loss = loss_builder(np.asarray(train))
        test_loss = loss_builder(np.asarray(test))
        for j, fit in enumerate(_fit_path(train_loss, grid, fold_config)):
            if fit is None:
                continue
            val = test_loss.value(fit.coef)
            fold_curves[k, j] = val if np.isfinite(val) else np.inf

    cv_curve = fold_curves.mean(axis=0)
    best_j = -1
    best_val = np.inf
    for j, val in enumerate(cv_curve):
        if np.isfinite(val) and val < best_val - TIE_TOL:
            best_j = j
            best_val = val
    if best_j < 0:
        raise AllFitsDiverged("no penalty in the grid produced finite CV loss")

    final_fits = _fit_path(full_loss, grid, config, stop_index=best_j)
    # On rare occasions the full-sample fit diverges at a penalty that was
    # fine on every fold; fall back to the closest larger penalty that fits.
    j = best_j
    while j >= 0 and final_fits[j] is None:
        j -= 1
    if j < 0:
        raise AllFitsDiverged("full-sample path diverged at every grid point")
    return CvResult(
        lambda_selected=grid[j],
        lambda_grid=grid,
        cv_curve=tuple(float(v) for v in cv_curve),
        fold_curves=fold_curves,
        fit=final_fits[j],
    )
