"""Dataset ingestion from CSV and basis-expansion recipes.

Ingestion parses a headered CSV, validates the treatment and instrument
columns as binary, mean-imputes missing covariate cells (with companion
missing-indicator columns on request), and defers standardization to design
construction.  Basis expansion produces the f/g/h term lists for M1/M2 plus
optional hinge (linear spline) and pairwise-interaction columns.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateKnot,
    DuplicateColumn,
    MissingColumn,
    NonBinaryInstrument,
    NonBinaryTreatment,
    ParseError,
)
from .model import (
    BasisSpec,
    Dataset,
    DesignView,
    Term,
    build_design,
    fitted_spline_terms,
    intercept_term,
    raw_terms,
    validate_spec,
)

Vector = np.ndarray

DEFAULT_NA_TOKENS = ("", "NA")


@dataclass(frozen=True)
class Schema:
    y_col: str
    d_col: str
    z_col: str
    x_cols: Tuple[str, ...]
    na_tokens: Tuple[str, ...] = DEFAULT_NA_TOKENS
    add_missing_indicators: bool = True


@dataclass(frozen=True)
class BasisRecipe:
    """How to build the f/g/h bases from a dataset's covariate columns.

    Hinge terms are placed at the i/(k+1) sample quantiles (linear
    interpolation) of each listed column; interactions are pairwise
    products.  Extra terms enter f, g, and h alike, preserving containment;
    M2 additionally appends fitted-treatment-mean splines to h.
    """

    mode: str = "M1"
    knots: int = 3
    hinge_cols: Tuple[int, ...] = ()
    interactions: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in ("M1", "M2"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.knots < 1:
            raise ValueError("knots must be positive")


def _parse_cell(token: str, row: int, col: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"row {row}, column {col!r}: cannot parse {token!r}") from None


def load_dataset(path: str, schema: Schema) -> Dataset:
    """Read a headered CSV into a Dataset with mean-imputed covariates."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty") from None
        rows = list(reader)
    if not rows:
        raise ParseError("no data rows")
    seen: Dict[str, int] = {}
    for i, name in enumerate(header):
        if name in seen:
            raise DuplicateColumn(f"column {name!r} appears more than once")
        seen[name] = i
    wanted = (schema.y_col, schema.d_col, schema.z_col) + tuple(schema.x_cols)
    for name in wanted:
        if name not in seen:
            raise MissingColumn(f"column {name!r} not found in header")
    if len(set(schema.x_cols)) != len(schema.x_cols):
        raise DuplicateColumn("x_cols contains repeated names")

    n = len(rows)
    na = set(schema.na_tokens)

    def parse_col(name: str, allow_na: bool) -> Tuple[Vector, np.ndarray]:
        j = seen[name]
        vals = np.empty(n)
        miss = np.zeros(n, dtype=bool)
        for i, row in enumerate(rows):
            if j >= len(row):
                raise ParseError(f"row {i + 2}: too few fields")
            token = row[j].strip()
            if token in na:
                if not allow_na:
                    raise ParseError(f"row {i + 2}, column {name!r}: missing value")
                miss[i] = True
                vals[i] = np.nan
            else:
                vals[i] = _parse_cell(token, i + 2, name)
        return vals, miss

    y, _ = parse_col(schema.y_col, allow_na=False)
    d, _ = parse_col(schema.d_col, allow_na=False)
    z, _ = parse_col(schema.z_col, allow_na=False)
    if not np.all(np.isin(np.unique(d), (0.0, 1.0))):
        raise NonBinaryTreatment(f"column {schema.d_col!r} is not binary 0/1")
    if not np.all(np.isin(np.unique(z), (0.0, 1.0))):
        raise NonBinaryInstrument(f"column {schema.z_col!r} is not binary 0/1")

    cols: List[Vector] = []
    names: List[str] = []
    indicators: List[Tuple[str, np.ndarray]] = []
    missing = np.zeros((n, len(schema.x_cols)), dtype=bool)
    for k, name in enumerate(schema.x_cols):
        vals, miss = parse_col(name, allow_na=True)
        if np.all(miss):
            raise ParseError(f"column {name!r} is entirely missing")
        if np.any(miss):
            vals = np.where(miss, np.nanmean(vals), vals)
            if schema.add_missing_indicators:
                indicators.append((f"{name}_missing", miss.astype(float)))
        missing[:, k] = miss
        cols.append(vals)
        names.append(name)
    for name, ind in indicators:
        cols.append(ind)
        names.append(name)
    x = np.column_stack(cols)
    return Dataset(
        y=y,
        d=d,
        z=z,
        x=x,
        missing_mask=missing if missing.any() else None,
        column_names=tuple(names),
    )


def write_dataset(path: str, dataset: Dataset) -> None:
    """Write a Dataset back to CSV with round-trip-exact formatting."""
    names = dataset.column_names or tuple(f"x{j+1}" for j in range(dataset.k))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "d", "z", *names])
        for i in range(dataset.n):
            writer.writerow(
                [repr(float(dataset.y[i])), repr(float(dataset.d[i])),
                 repr(float(dataset.z[i]))]
                + [repr(float(v)) for v in dataset.x[i]]
            )


def _hinge_terms(dataset: Dataset, col: int, knots: int) -> List[Term]:
    vals = dataset.x[:, col]
    terms = []
    for k in range(1, knots + 1):
        knot = float(np.quantile(vals, k / (knots + 1)))
        if knot >= vals.max():
            warnings.warn(
                f"hinge knot at quantile {k}/{knots + 1} of column {col} "
                "produces an all-zero column; dropped",
                DegenerateKnot,
                stacklevel=3,
            )
            continue
        terms.append(Term(kind="hinge", col=col, knot=knot))
    return terms


def expand_basis(
    dataset: Dataset,
    recipe: BasisRecipe,
    fitted_m: Optional[Dict[str, Vector]] = None,
) -> Tuple[BasisSpec, Dict[str, DesignView]]:
    """Build the f/g/h bases (and raw designs where already constructible).

    M2's extra h terms reference the fitted treatment means; the h design is
    returned only when ``fitted_m`` (keys "m_d0", "m_d1") is supplied,
    otherwise its knots are resolved later during nuisance fitting.
    """
    base: List[Term] = [intercept_term()] + raw_terms(range(dataset.k))
    for col in recipe.hinge_cols:
        base.extend(_hinge_terms(dataset, col, recipe.knots))
    for i, j in recipe.interactions:
        base.append(Term(kind="interaction", col=int(i), col2=int(j)))
    h: List[Term] = list(base)
    if recipe.mode == "M2":
        h += fitted_spline_terms("m_d0") + fitted_spline_terms("m_d1")
    spec = validate_spec(
        BasisSpec(f_terms=tuple(base), g_terms=tuple(base), h_terms=tuple(h)),
        dataset,
    )
    designs = {
        "f": build_design(dataset, list(spec.f_terms)),
        "g": build_design(dataset, list(spec.g_terms)),
    }
    if recipe.mode == "M1":
        designs["h"] = build_design(dataset, list(spec.h_terms))
    elif fitted_m is not None:
        designs["h"] = build_design(dataset, list(spec.h_terms), fitted=fitted_m)
    return spec, designs
