"""Tabular ingestion and synthetic generators.

CSV files are read with the standard :mod:`csv` module (comma separated,
header row, UTF-8, RFC-style quoting). Cells that look like integers or
decimals become numbers; everything else stays a string.

The synthetic generators reproduce the worked examples used throughout
the test-suite. Each is defined by independent Bernoulli latents and a
map from latents to observed columns, so the exact pmf follows by
enumerating the latent outcomes.
"""
from __future__ import annotations

import csv
import itertools
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dist import JointDistribution, _sorted_symbols

_INT = re.compile(r"[+-]?\d+")
_FLOAT = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")


class DataError(ValueError):
    """Problem with input data, located by line and column where possible."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class AuditSchema:
    """Column roles for an audit.

    ``bins`` maps a numeric column to a bin count; ``alphabets`` optionally
    declares the admissible symbols of a column.
    """

    protected: str
    decision: str
    features: tuple[str, ...]
    bins: Mapping[str, int] = field(default_factory=dict)
    binning: str = "quantile"
    alphabets: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise ValueError("an audit needs at least one feature")
        cols = [self.protected, self.decision, *self.features]
        if len(set(cols)) != len(cols):
            raise ValueError(f"protected, decision and features must be disjoint: {cols}")
        if self.binning not in ("quantile", "equal_width"):
            raise ValueError(f"unknown binning {self.binning!r}")
        for col, k in self.bins.items():
            if int(k) < 1:
                raise ValueError(f"bins for {col!r} must be positive")

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.protected, *self.features, self.decision)


def parse_cell(text: str):
    """Convert a CSV cell to int, float or str."""
    s = text.strip()
    if _INT.fullmatch(s):
        return int(s)
    if _FLOAT.fullmatch(s):
        return float(s)
    return s


def quantile_bins(values: Sequence[float], bins: int) -> list[int]:
    """Rank-based equal-frequency binning.

    With distinct values bin counts differ by at most one; tied values
    share the bin of their lowest rank.
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    first_rank = np.searchsorted(np.sort(v), v, side="left")
    return [int(r * bins // n) for r in first_rank]


def equal_width_bins(values: Sequence[float], bins: int) -> list[int]:
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return [0] * len(v)
    idx = np.floor((v - lo) / (hi - lo) * bins).astype(int)
    return [int(i) for i in np.clip(idx, 0, bins - 1)]


def load_csv(path, schema: AuditSchema) -> tuple[list[dict], dict[str, tuple]]:
    """Read the schema columns of a CSV file.

    Returns the rows (dicts restricted to schema columns, binned where
    requested) and the resolved alphabet of every column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}; header is {header}", line=1)
        pos = {c: header.index(c) for c in schema.columns}
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"expected {len(header)} fields, got {len(rec)}", line=line)
            row = {}
            for col, i in pos.items():
                cell = rec[i]
                if not cell.strip():
                    raise DataError("empty cell", line=line, column=col)
                value = parse_cell(cell)
                if col in schema.bins and isinstance(value, str):
                    raise DataError(f"cannot parse {cell!r} as a number", line=line, column=col)
                row[col] = value
            rows.append(row)
    if not rows:
        raise DataError(f"{path} has a header but no data rows")
    return discretize(rows, schema)


def discretize(rows: list[dict], schema: AuditSchema) -> tuple[list[dict], dict[str, tuple]]:
    """Apply the schema's binning directives and resolve alphabets."""
    rows = [dict(r) for r in rows]
    alphabets = {}
    binner = quantile_bins if schema.binning == "quantile" else equal_width_bins
    for col in schema.columns:
        if col in schema.bins:
            k = int(schema.bins[col])
            for r, b in zip(rows, binner([r[col] for r in rows], k)):
                r[col] = b
            alphabets[col] = tuple(range(k))
        elif col in schema.alphabets:
            alpha = tuple(schema.alphabets[col])
            allowed = set(alpha)
            for i, r in enumerate(rows):
                if r[col] not in allowed:
                    raise DataError(f"value {r[col]!r} not in declared alphabet {list(alpha)}",
                                    line=i + 2, column=col)
            alphabets[col] = alpha
        else:
            alphabets[col] = tuple(_sorted_symbols({r[col] for r in rows}))
    return rows, alphabets


def write_csv(path, rows: Sequence[Mapping], columns: Sequence[str]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] for c in columns])


def write_pmf_csv(path, dist: JointDistribution) -> None:
    """Write every positive-mass cell as ``symbols..., probability``."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*dist.names, "probability"])
        for symbols, p in dist.outcomes():
            w.writerow([*symbols, repr(p)])


def load_pmf_csv(path, prob_column: str = "probability") -> JointDistribution:
    """Inverse of :func:`write_pmf_csv`."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if prob_column not in header:
            raise DataError(f"no {prob_column!r} column", line=1)
        k = header.index(prob_column)
        names = [h for i, h in enumerate(header) if i != k]
        outcomes: dict[tuple, float] = {}
        for line, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                p = float(rec[k])
            except ValueError:
                raise DataError(f"bad probability {rec[k]!r}", line=line, column=prob_column) from None
            key = tuple(parse_cell(c) for i, c in enumerate(rec) if i != k)
            outcomes[key] = outcomes.get(key, 0.0) + p
    return JointDistribution.from_outcomes(names, outcomes)


# --------------------------------------------------------------------------
# synthetic generators


@dataclass(frozen=True)
class SyntheticSpec:
    name: str
    samples: int | str = "analytic"
    seed: int = 0

    def __post_init__(self):
        if self.name not in GENERATORS:
            raise ValueError(f"unknown generator {self.name!r}; choose from {sorted(GENERATORS)}")
        if self.samples != "analytic" and (not isinstance(self.samples, int) or self.samples < 1):
            raise ValueError("samples must be a positive integer or 'analytic'")


@dataclass(frozen=True)
class _Generator:
    latents: tuple[tuple[str, float], ...]   # (name, P[=1])
    columns: tuple[str, ...]
    observe: Callable[[dict], dict]
    schema: AuditSchema
    ground_truth: dict
    default_samples: int | str = "analytic"


@dataclass
class SyntheticData:
    """Output of :func:`generate`: exact pmf or sampled rows, plus metadata."""

    spec: SyntheticSpec
    schema: AuditSchema
    columns: tuple[str, ...]
    ground_truth: dict
    dist: JointDistribution | None = None
    rows: list[dict] | None = None


def _bits(*xs):
    return ":".join(str(x) for x in xs)


_CANONICAL_SCHEMA = AuditSchema("Z", "Y", ("X1", "X2"))

GENERATORS: dict[str, _Generator] = {
    "canonical1": _Generator(
        latents=(("Z", 0.5), ("U", 0.5)),
        columns=("Z", "X1", "X2", "Y"),
        observe=lambda l: {"Z": l["Z"], "X1": l["Z"] + l["U"], "X2": l["Z"] + l["U"],
                           "Y": l["Z"] + l["U"]},
        schema=_CANONICAL_SCHEMA,
        ground_truth={"disparity": 0.5, "potential": {"X1": 0.25, "X2": 0.25},
                      "interventional": {"X1": 0.5, "X2": 0.0}, "oracle": "builtin:first"},
    ),
    "canonical2": _Generator(
        latents=(("Z", 0.5), ("U", 0.5)),
        columns=("Z", "X1", "X2", "Y"),
        observe=lambda l: {"Z": l["Z"], "X1": l["Z"] + l["U"], "X2": l["U"], "Y": l["Z"]},
        schema=_CANONICAL_SCHEMA,
        ground_truth={"disparity": 1.0, "potential": {"X1": 0.75, "X2": 0.25},
                      "interventional": {"X1": 0.75, "X2": 0.25}, "oracle": "builtin:diff"},
    ),
    "canonical3": _Generator(
        latents=(("Z", 0.5), ("U", 0.5)),
        columns=("Z", "X1", "X2", "Y"),
        observe=lambda l: {"Z": l["Z"], "X1": l["Z"], "X2": l["U"], "Y": l["Z"] ^ l["U"]},
        schema=_CANONICAL_SCHEMA,
        ground_truth={"disparity": 0.0, "potential": {"X1": 0.0, "X2": 0.0},
                      "interventional": {"X1": 0.5, "X2": -0.5}, "oracle": "builtin:xor"},
    ),
    "case_study": _Generator(
        latents=(("Z", 0.5), ("U1", 0.9), ("U2", 0.5), ("N", 0.1)),
        columns=("Z", "X1", "X2", "X3", "Y"),
        observe=lambda l: {"Z": l["Z"], "X1": l["U1"], "X2": l["Z"] + l["U2"], "X3": l["U2"],
                           "Y": l["Z"] + l["U1"] + 2 * l["U2"] + l["N"]},
        schema=AuditSchema("Z", "Y", ("X1", "X2", "X3")),
        ground_truth={"largest": "X2", "positive": ["X3"]},
        default_samples=10_000,
    ),
    "pid_example": _Generator(
        latents=(("Z1", 0.5), ("Z2", 0.5), ("Z3", 0.5), ("N", 0.5)),
        columns=("Z", "A", "B"),
        observe=lambda l: {"Z": _bits(l["Z1"], l["Z2"], l["Z3"]),
                           "A": _bits(l["Z1"], l["Z2"], l["Z3"] ^ l["N"]),
                           "B": _bits(l["Z2"], l["N"])},
        # B doubles as the single "feature" so the schema stays well-formed
        schema=AuditSchema("Z", "A", ("B",)),
        ground_truth={"total": 3.0, "uni_a_given_b": 1.0, "uni_b_given_a": 0.0,
                      "red": 1.0, "syn": 1.0},
    ),
}


def analytic_distribution(name: str) -> JointDistribution:
    """Exact joint pmf of the observed columns by latent enumeration."""
    gen = GENERATORS[name]
    outcomes: dict[tuple, float] = {}
    for bits in itertools.product((0, 1), repeat=len(gen.latents)):
        prob = math.prod(p if b else 1 - p for b, (_, p) in zip(bits, gen.latents))
        if prob == 0:
            continue
        obs = gen.observe({n: b for b, (n, _) in zip(bits, gen.latents)})
        key = tuple(obs[c] for c in gen.columns)
        outcomes[key] = outcomes.get(key, 0.0) + prob
    return JointDistribution.from_outcomes(gen.columns, outcomes)


def sample_rows(name: str, samples: int, seed: int) -> list[dict]:
    gen = GENERATORS[name]
    rng = np.random.default_rng(seed)
    probs = np.array([p for _, p in gen.latents])
    draws = (rng.random((samples, len(probs))) < probs).astype(int)
    names = [n for n, _ in gen.latents]
    return [gen.observe(dict(zip(names, map(int, row)))) for row in draws]


def generate(spec: SyntheticSpec) -> SyntheticData:
    """Produce the exact pmf (``samples="analytic"``) or i.i.d. rows."""
    gen = GENERATORS[spec.name]
    data = SyntheticData(spec, gen.schema, gen.columns, dict(gen.ground_truth))
    if spec.samples == "analytic":
        data.dist = analytic_distribution(spec.name)
    else:
        data.rows = sample_rows(spec.name, spec.samples, spec.seed)
    return data


def default_samples(name: str) -> int | str:
    return GENERATORS[name].default_samples
