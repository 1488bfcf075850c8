"""Shared domain types: datasets, basis specifications, design matrices, fitted models.

Conventions used throughout:
  - binary variables are stored as float64 values in {0.0, 1.0};
  - every design matrix carries an explicit intercept as column 0;
  - the intercept is never standardized and never penalized;
  - coefficients are reported on the original covariate scale, with
    standardization internal to the solver.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from .errors import (
    ConstantColumn,
    DegenerateKnot,
    DimensionMismatch,
    InvalidDims,
    MissingColumn,
    SubvectorViolation,
)

Vector = NDArray[np.float64]
Matrix = NDArray[np.float64]

STANDARDIZE_TOL = 1e-10


@dataclass(frozen=True)
class Dataset:
    """Observed sample (Y, D, Z, X).

    ``y`` may be meaningful only for a subset of observations (e.g. recorded
    as Y(1)*D in the simulations); ``y_observed`` carries that mask.
    """

    y: Vector
    d: Vector
    z: Vector
    x: Matrix
    y_observed: Optional[NDArray[np.bool_]] = None
    missing_mask: Optional[NDArray[np.bool_]] = None
    column_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        n = self.y.shape[0]
        if n < 1:
            raise InvalidDims("dataset must contain at least one observation")
        if self.d.shape != (n,) or self.z.shape != (n,):
            raise DimensionMismatch("y, d, z must share length n")
        if self.x.ndim != 2 or self.x.shape[0] != n:
            raise DimensionMismatch("x must be an n-by-k matrix")
        for name, vec in (("d", self.d), ("z", self.z)):
            vals = np.unique(vec)
            if not np.all(np.isin(vals, (0.0, 1.0))):
                raise InvalidDims(f"{name} must be binary 0/1")
        if not np.all(np.isfinite(self.x)):
            raise InvalidDims("x contains non-finite values after ingestion")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class Term:
    """One basis-function descriptor.

    kind:
      intercept    -- the constant 1 (always term 0)
      raw          -- dataset column ``col``
      interaction  -- product of columns ``col`` and ``col2``
      hinge        -- (x_col - knot)_+
      fitted       -- a fitted treatment-regression value ("m0" or "m1")
      fitted_hinge -- (m_fit - knot)_+ with the knot taken as the ``quantile``
                      of the fitted values (resolved at design construction)
    """

    kind: str
    col: int = -1
    col2: int = -1
    knot: float = math.nan
    source: str = ""
    quantile: float = math.nan

    def label(self) -> str:
        if self.kind == "intercept":
            return "1"
        if self.kind == "raw":
            return f"x{self.col}"
        if self.kind == "interaction":
            return f"x{self.col}*x{self.col2}"
        if self.kind == "hinge":
            return f"(x{self.col}-{self.knot:g})+"
        if self.kind == "fitted":
            return self.source
        if self.kind == "fitted_hinge":
            if math.isnan(self.knot):
                return f"({self.source}-q{self.quantile:g})+"
            return f"({self.source}-{self.knot:g})+"
        raise ValueError(f"unknown term kind {self.kind!r}")


def intercept_term() -> Term:
    return Term(kind="intercept")


def raw_terms(cols: Sequence[int]) -> list[Term]:
    return [Term(kind="raw", col=int(c)) for c in cols]


def fitted_spline_terms(source: str, n_knots: int = 3) -> list[Term]:
    """A fitted-value column plus hinges at its i/(n_knots+1) quantiles.

    Knot locations are resolved when the design is built, once the fitted
    values exist.
    """
    terms = [Term(kind="fitted", source=source)]
    for k in range(1, n_knots + 1):
        terms.append(
            Term(kind="fitted_hinge", source=source, quantile=k / (n_knots + 1))
        )
    return terms


@dataclass(frozen=True)
class BasisSpec:
    """Regressor constructions f(x), g(x), h(x) with f contained in g and h."""

    f_terms: Tuple[Term, ...]
    g_terms: Tuple[Term, ...]
    h_terms: Tuple[Term, ...]
    validated: bool = False


@dataclass(frozen=True)
class DesignView:
    """A design matrix with intercept column first, plus standardization state."""

    matrix: Matrix
    col_means: Vector
    col_sds: Vector
    standardized: bool
    terms: Tuple[Term, ...] = ()

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        """Number of non-intercept columns."""
        return self.matrix.shape[1] - 1


def _check_terms(terms: Sequence[Term], k: int, where: str) -> None:
    if len(terms) == 0 or terms[0].kind != "intercept":
        raise SubvectorViolation(f"{where}: first term must be the intercept")
    for t in terms[1:]:
        if t.kind == "intercept":
            raise SubvectorViolation(f"{where}: duplicate intercept term")
        for c in (t.col, t.col2):
            if t.kind in ("raw", "hinge") and t.col >= k:
                raise MissingColumn(f"{where}: column {t.col} not in dataset")
        if t.kind == "interaction" and (t.col >= k or t.col2 >= k):
            raise MissingColumn(f"{where}: interaction references a missing column")


def validate_spec(spec: BasisSpec, dataset: Dataset) -> BasisSpec:
    """Check column references, the f-within-g/h containment rule, and
    constant columns; returns the spec marked validated (idempotent)."""
    k = dataset.k
    _check_terms(spec.f_terms, k, "f")
    _check_terms(spec.g_terms, k, "g")
    _check_terms(spec.h_terms, k, "h")
    g_set = set(spec.g_terms)
    h_set = set(spec.h_terms)
    for t in spec.f_terms:
        if t not in g_set:
            raise SubvectorViolation(f"f term {t.label()} missing from g")
        if t not in h_set:
            raise SubvectorViolation(f"f term {t.label()} missing from h")
    for name, terms in (("f", spec.f_terms), ("g", spec.g_terms), ("h", spec.h_terms)):
        resolvable = [t for t in terms[1:] if t.kind in ("raw", "interaction", "hinge")]
        if resolvable:
            cols = _evaluate_terms(dataset, resolvable, fitted=None)
            sds = cols.std(axis=0)
            for t, sd in zip(resolvable, sds):
                if sd <= 0.0:
                    raise ConstantColumn(f"{name} term {t.label()} has zero variance")
    if spec.validated:
        return spec
    return replace(spec, validated=True)


def _evaluate_terms(
    dataset: Dataset,
    terms: Sequence[Term],
    fitted: Optional[Dict[str, Vector]],
) -> Matrix:
    n = dataset.n
    out = np.empty((n, len(terms)))
    for j, t in enumerate(terms):
        if t.kind == "raw":
            out[:, j] = dataset.x[:, t.col]
        elif t.kind == "interaction":
            out[:, j] = dataset.x[:, t.col] * dataset.x[:, t.col2]
        elif t.kind == "hinge":
            out[:, j] = np.maximum(dataset.x[:, t.col] - t.knot, 0.0)
        elif t.kind in ("fitted", "fitted_hinge"):
            if fitted is None or t.source not in fitted:
                raise MissingColumn(f"fitted values {t.source!r} not supplied")
            v = fitted[t.source]
            if t.kind == "fitted":
                out[:, j] = v
            else:
                knot = t.knot
                if math.isnan(knot):
                    knot = float(np.quantile(v, t.quantile))
                out[:, j] = np.maximum(v - knot, 0.0)
        else:
            raise ValueError(f"cannot evaluate term kind {t.kind!r}")
    return out


def build_design(
    dataset: Dataset,
    terms: Sequence[Term],
    fitted: Optional[Dict[str, Vector]] = None,
) -> DesignView:
    """Evaluate basis terms into a raw (unstandardized) design with intercept."""
    n = dataset.n
    body = _evaluate_terms(dataset, terms[1:], fitted)
    sds = body.std(axis=0) if body.size else np.empty(0)
    if np.any(sds <= 0.0):
        flat = np.nonzero(sds <= 0.0)[0]
        # Terms derived from fitted values can legitimately collapse (e.g. an
        # intercept-only treatment fit makes every hinge of m-hat constant);
        # drop those with a warning.  A constant supplied column is an error.
        hard = [terms[1:][j].label() for j in flat
                if terms[1:][j].kind not in ("fitted", "fitted_hinge")]
        if hard:
            raise ConstantColumn(f"constant non-intercept columns: {hard}")
        warnings.warn(
            f"dropping degenerate fitted-value terms: "
            f"{[terms[1:][j].label() for j in flat]}",
            DegenerateKnot,
            stacklevel=2,
        )
        keep = np.nonzero(sds > 0.0)[0]
        body = body[:, keep]
        terms = [terms[0]] + [terms[1:][j] for j in keep]
    mat = np.hstack([np.ones((n, 1)), body])
    means = body.mean(axis=0) if body.size else np.empty(0)
    sds = body.std(axis=0) if body.size else np.empty(0)
    # resolve fitted-quantile knots so the view is self-describing
    resolved = [terms[0]]
    for t in terms[1:]:
        if t.kind == "fitted_hinge" and math.isnan(t.knot):
            knot = float(np.quantile(fitted[t.source], t.quantile))
            resolved.append(replace(t, knot=knot))
        else:
            resolved.append(t)
    return DesignView(
        matrix=mat,
        col_means=means,
        col_sds=sds,
        standardized=False,
        terms=tuple(resolved),
    )


def standardize(view: DesignView) -> DesignView:
    """Center and scale non-intercept columns to mean 0, variance 1."""
    if view.standardized:
        return view
    mat = view.matrix.copy()
    if view.m:
        mat[:, 1:] = (mat[:, 1:] - view.col_means) / view.col_sds
    return DesignView(
        matrix=mat,
        col_means=view.col_means,
        col_sds=view.col_sds,
        standardized=True,
        terms=view.terms,
    )


def destandardize(view: DesignView) -> DesignView:
    if not view.standardized:
        return view
    mat = view.matrix.copy()
    if view.m:
        mat[:, 1:] = mat[:, 1:] * view.col_sds + view.col_means
    return DesignView(
        matrix=mat,
        col_means=view.col_means,
        col_sds=view.col_sds,
        standardized=False,
        terms=view.terms,
    )


def coef_to_original_scale(view: DesignView, coef: Vector) -> Vector:
    """Map coefficients fitted on the standardized design back to the raw scale."""
    if not view.standardized:
        return coef.copy()
    out = coef.copy()
    if view.m:
        out[1:] = coef[1:] / view.col_sds
        out[0] = coef[0] - float(np.dot(coef[1:], view.col_means / view.col_sds))
    return out


def coef_to_standardized_scale(view: DesignView, coef: Vector) -> Vector:
    """Inverse of :func:`coef_to_original_scale`."""
    out = coef.copy()
    if view.m:
        out[1:] = coef[1:] * view.col_sds
        out[0] = coef[0] + float(np.dot(coef[1:], view.col_means))
    return out


@dataclass(frozen=True)
class NuisanceEstimates:
    """Fitted nuisance models and per-observation fitted functions.

    Coefficients are on the original covariate scale. ``gamma`` maps the
    instrument arm z to the propensity-model coefficients (both arms map to
    the same vector under RML/RML2); ``alpha_d`` maps z to the treatment-model
    coefficients; ``alpha_y`` maps (d, z) to the outcome-model coefficients.
    """

    method: str
    gamma: Dict[int, Vector]
    alpha_d: Dict[int, Vector]
    alpha_y: Dict[Tuple[int, int], Vector]
    fitted_pi: Dict[int, Vector]
    fitted_m: Dict[int, Vector]
    fitted_my: Dict[Tuple[int, int], Vector]
    lambdas: Dict[str, float]
    y_link: str = "identity"
    design_f: Optional[DesignView] = None
    design_g: Optional[DesignView] = None
    design_h: Optional[DesignView] = None
    design_f_std: Optional[DesignView] = None
    design_g_std: Optional[DesignView] = None
    design_h_std: Optional[DesignView] = None
    extras: Dict[str, object] = field(default_factory=dict)
