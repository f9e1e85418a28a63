"""Survival dataset ingestion and design-matrix construction.

CSV files need a header row, comma delimiter, UTF-8, a positive follow-up
time column and a status column coded 0=censored / 1=event.  All remaining
declared columns are kept as covariates (numeric or factor-level strings).
Factors are dummy-coded against a declared reference level.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateDesignError, ParseError, SchemaError, ValidationError
from .functional import EmpiricalDistribution


class Status(Enum):
    CENSORED = 0
    EVENT = 1


@dataclass(frozen=True)
class SurvivalRecord:
    time: float
    status: Status
    covariates: dict

    def __post_init__(self):
        if not self.time > 0:
            raise ValidationError(f"follow-up time must be positive, got {self.time}")


@dataclass(frozen=True)
class Dataset:
    records: tuple

    def __post_init__(self):
        if len(self.records) < 2:
            raise ValidationError("a dataset needs at least 2 records")
        keys = set(self.records[0].covariates)
        for i, r in enumerate(self.records):
            if set(r.covariates) != keys:
                raise ValidationError(f"record {i} has differing covariate keys")

    @property
    def n(self):
        return len(self.records)

    @property
    def times(self):
        return np.array([r.time for r in self.records])

    @property
    def events(self):
        return np.array([r.status is Status.EVENT for r in self.records])

    def distribution(self):
        """Uniform empirical distribution over the (time, status) marks."""
        return EmpiricalDistribution(self.times, self.events)

    def permuted(self, order):
        return Dataset(tuple(self.records[i] for i in order))


@dataclass(frozen=True)
class ColumnSchema:
    """Declares which CSV columns hold time/status and how covariates parse."""

    time: str = "time"
    status: str = "status"
    numeric: tuple = ()
    factors: tuple = ()


def load_csv(path, schema=None):
    """Read a survival dataset; unknown columns are preserved as covariates."""
    schema = schema or ColumnSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (schema.time, schema.status):
            if col not in header:
                raise SchemaError(f"declared column {col!r} missing from {path}")
        records = []
        for i, row in enumerate(reader):
            try:
                time = float(row[schema.time])
            except ValueError as exc:
                raise ParseError(
                    f"row {i}: cannot parse time {row[schema.time]!r}"
                ) from exc
            if not time > 0:
                raise ValidationError(f"row {i}: non-positive time {time}")
            raw_status = row[schema.status].strip()
            if raw_status not in ("0", "1"):
                raise ParseError(f"row {i}: status must be 0 or 1, got {raw_status!r}")
            covs = {}
            for col in header:
                if col in (schema.time, schema.status):
                    continue
                cell = row[col]
                if cell is None or cell == "":
                    raise ValidationError(f"row {i}, column {col!r}: missing value")
                if col in schema.factors:
                    covs[col] = cell
                else:
                    try:
                        covs[col] = float(cell)
                    except ValueError:
                        covs[col] = cell  # keep as factor level string
            records.append(
                SurvivalRecord(time, Status(int(raw_status)), covs)
            )
    return Dataset(tuple(records))


# ---------------------------------------------------------------------------
# Design specification and encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NumericTerm:
    name: str


@dataclass(frozen=True)
class FactorTerm:
    name: str
    reference: str
    levels: tuple = ()  # non-reference levels in column order; () = lexicographic


@dataclass(frozen=True)
class InteractionTerm:
    names: tuple  # names of numeric parent columns


@dataclass(frozen=True)
class DesignSpec:
    terms: tuple
    intercept: bool = True


@dataclass(frozen=True)
class DesignMatrix:
    rows: np.ndarray
    columns: tuple

    @property
    def q(self):
        return self.rows.shape[1]

    @property
    def n(self):
        return self.rows.shape[0]


def _level_str(v):
    """Render a factor level; integral floats print without the '.0'."""
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def _column(dataset, name):
    try:
        return [r.covariates[name] for r in dataset.records]
    except KeyError as exc:
        raise SchemaError(f"column {name!r} not present in dataset") from exc


def encode_design(dataset, spec):
    """Build the n x q numeric design matrix for ``spec``.

    Factors are dummy-coded omitting the reference level; an interaction
    column is the rowwise product of its (numeric) parent columns.
    """
    cols = []
    names = []
    numeric_cache = {}
    if spec.intercept:
        cols.append(np.ones(dataset.n))
        names.append("(Intercept)")
    for term in spec.terms:
        if isinstance(term, NumericTerm):
            values = _column(dataset, term.name)
            try:
                arr = np.array([float(v) for v in values])
            except (TypeError, ValueError) as exc:
                raise ParseError(f"column {term.name!r} is not numeric") from exc
            numeric_cache[term.name] = arr
            cols.append(arr)
            names.append(term.name)
        elif isinstance(term, FactorTerm):
            values = [_level_str(v) for v in _column(dataset, term.name)]
            observed = sorted(set(values))
            if term.reference not in observed:
                raise SchemaError(
                    f"reference level {term.reference!r} not observed "
                    f"in column {term.name!r}"
                )
            if len(observed) < 2:
                raise DegenerateDesignError(
                    f"factor {term.name!r} has a single observed level"
                )
            if term.levels:
                missing = set(term.levels) - set(observed)
                if missing:
                    raise SchemaError(
                        f"declared levels {sorted(missing)} not observed "
                        f"in column {term.name!r}"
                    )
                levels = list(term.levels)
            else:
                levels = [lv for lv in observed if lv != term.reference]
            for lv in levels:
                cols.append(np.array([1.0 if v == lv else 0.0 for v in values]))
                names.append(f"{term.name}{lv}")
        elif isinstance(term, InteractionTerm):
            prod = np.ones(dataset.n)
            for name in term.names:
                if name not in numeric_cache:
                    raise SchemaError(
                        f"interaction parent {name!r} must be a previously "
                        "declared numeric column"
                    )
                prod = prod * numeric_cache[name]
            cols.append(prod)
            names.append(":".join(term.names))
        else:
            raise SchemaError(f"unknown design term {term!r}")
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate column names after encoding: {names}")
    rows = np.column_stack(cols) if cols else np.empty((dataset.n, 0))
    return DesignMatrix(rows, tuple(names))


VETERAN_FORMULA = (
    "trt(ref=1)+celltype(ref=squamous,levels=smallcell|adeno|large)+age"
)


def parse_design(formula, dataset):
    """Build a DesignSpec from a compact formula string.

    Terms are joined by ``+``: a bare name is numeric if every observed value
    parses as a float and a factor otherwise; ``name(ref=x)`` forces a factor
    with reference level x; ``levels=a|b|c`` fixes the non-reference column
    order; ``a:b`` is an interaction of numeric columns.
    """
    terms = []
    for raw in formula.split("+"):
        raw = raw.strip()
        if not raw:
            raise SchemaError(f"empty term in design formula {formula!r}")
        if ":" in raw and "(" not in raw:
            terms.append(InteractionTerm(tuple(p.strip() for p in raw.split(":"))))
            continue
        if "(" in raw:
            if not raw.endswith(")"):
                raise SchemaError(f"malformed term {raw!r}")
            name, args = raw[:-1].split("(", 1)
            opts = {}
            for part in args.split(","):
                if "=" not in part:
                    raise SchemaError(f"malformed option {part!r} in {raw!r}")
                key, val = part.split("=", 1)
                opts[key.strip()] = val.strip()
            unknown = set(opts) - {"ref", "levels"}
            if unknown:
                raise SchemaError(f"unknown options {sorted(unknown)} in {raw!r}")
            if "ref" not in opts:
                raise SchemaError(f"factor term {raw!r} needs ref=<level>")
            levels = tuple(opts["levels"].split("|")) if "levels" in opts else ()
            terms.append(FactorTerm(name.strip(), opts["ref"], levels))
            continue
        values = _column(dataset, raw)
        try:
            for v in values:
                float(v)
            terms.append(NumericTerm(raw))
        except (TypeError, ValueError):
            observed = sorted({_level_str(v) for v in values})
            terms.append(FactorTerm(raw, observed[0]))
    return DesignSpec(tuple(terms))


def veteran_schema():
    """Column schema for the bundled veteran lung-cancer CSV."""
    return ColumnSchema(numeric=("age",), factors=("trt", "celltype"))


def veteran_design_spec():
    """Design used in the bundled veteran analysis (Table-layout column order)."""
    return DesignSpec(
        terms=(
            FactorTerm("trt", reference="1"),
            FactorTerm(
                "celltype", reference="squamous",
                levels=("smallcell", "adeno", "large"),
            ),
            NumericTerm("age"),
        ),
        intercept=True,
    )
