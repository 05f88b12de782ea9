"""Discrete joint distributions and Shannon information measures.

All quantities are in bits. A :class:`JointDistribution` is a dense
probability table with one named axis per variable; every function here
is pure and returns new objects.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

#: probabilities below this are treated as exact zeros in information sums
ZERO_MASS = 1e-15
#: information values above -INFO_TOL are clamped to zero
INFO_TOL = 1e-9
_NORM_TOL = 1e-12


class DistributionError(ValueError):
    """Raised for malformed distributions or unknown variables."""


class DomainError(DistributionError):
    """A data value lies outside the declared alphabet of its column."""

    def __init__(self, row: int, column: str, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"row {row}: value {value!r} is not in the alphabet of column {column!r}"
        )


@dataclass(frozen=True)
class Variable:
    """A named discrete random variable with an ordered alphabet."""

    name: str
    alphabet: tuple

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        if len(self.alphabet) < 1:
            raise DistributionError(f"variable {self.name!r} has an empty alphabet")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise DistributionError(f"variable {self.name!r} has duplicate symbols")

    @property
    def cardinality(self) -> int:
        return len(self.alphabet)


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Probability mass table over an ordered tuple of variables.

    Parameters
    ----------
    variables : sequence of Variable
        One variable per axis of ``pmf``.
    pmf : array_like
        Non-negative table of shape ``(card_1, ..., card_k)`` summing to 1.
    sample_count : int, optional
        Number of samples the table was estimated from.
    """

    variables: tuple[Variable, ...]
    pmf: np.ndarray
    sample_count: int | None = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        pmf = np.array(self.pmf, dtype=float)
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise DistributionError(f"duplicate variable names: {names}")
        shape = tuple(v.cardinality for v in variables)
        if pmf.shape != shape:
            raise DistributionError(f"pmf shape {pmf.shape} does not match cardinalities {shape}")
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise DistributionError("pmf has negative or non-finite entries")
        total = pmf.sum()
        if abs(total - 1.0) > _NORM_TOL:
            raise DistributionError(f"pmf sums to {total!r}, not 1")
        pmf.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @classmethod
    def from_weights(cls, variables, weights, sample_count=None) -> "JointDistribution":
        """Build a distribution by normalizing a non-negative weight table."""
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if total <= 0:
            raise DistributionError("weights sum to zero")
        return cls(tuple(variables), weights / total, sample_count)

    @classmethod
    def from_outcomes(cls, names: Sequence[str], outcomes: Mapping[tuple, float],
                      alphabets: Mapping[str, Sequence] | None = None) -> "JointDistribution":
        """Build a distribution from a ``{outcome tuple: probability}`` mapping.

        Alphabets default to the sorted set of observed symbols.
        """
        alphabets = dict(alphabets or {})
        variables = []
        for i, name in enumerate(names):
            if name in alphabets:
                alpha = tuple(alphabets[name])
            else:
                alpha = tuple(_sorted_symbols({o[i] for o in outcomes}))
            variables.append(Variable(name, alpha))
        table = np.zeros(tuple(v.cardinality for v in variables))
        lookup = [{s: j for j, s in enumerate(v.alphabet)} for v in variables]
        for outcome, p in outcomes.items():
            idx = []
            for i, s in enumerate(outcome):
                if s not in lookup[i]:
                    raise DomainError(-1, names[i], s)
                idx.append(lookup[i][s])
            table[tuple(idx)] += p
        return cls.from_weights(variables, table)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.pmf.shape

    def axis(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise DistributionError(f"unknown variable {name!r}; have {list(self.names)}") from None

    def variable(self, name: str) -> Variable:
        return self.variables[self.axis(name)]

    def outcomes(self, min_mass: float = 0.0):
        """Yield ``(symbols, probability)`` for every cell with mass > ``min_mass``."""
        for idx in zip(*np.nonzero(self.pmf > min_mass)):
            yield tuple(v.alphabet[i] for v, i in zip(self.variables, idx)), float(self.pmf[idx])

    def __eq__(self, other):
        if not isinstance(other, JointDistribution):
            return NotImplemented
        return (self.variables == other.variables and self.sample_count == other.sample_count
                and np.array_equal(self.pmf, other.pmf))

    __hash__ = None

    def __repr__(self):
        dims = ", ".join(f"{v.name}:{v.cardinality}" for v in self.variables)
        return f"JointDistribution({dims})"


def _sorted_symbols(symbols: Iterable) -> list:
    symbols = list(symbols)
    try:
        return sorted(symbols)
    except TypeError:
        return sorted(symbols, key=lambda s: (type(s).__name__, str(s)))


def _as_names(vars_) -> list[str]:
    if isinstance(vars_, str):
        return [vars_]
    return list(vars_)


def estimate_joint(rows: Sequence[Mapping], names: Sequence[str],
                   alphabets: Mapping[str, Sequence] | None = None,
                   smoothing: float = 0.0) -> JointDistribution:
    """Plug-in (empirical) joint distribution of ``names`` over ``rows``.

    Parameters
    ----------
    rows : sequence of mappings
        Each row maps a column name to a symbol.
    names : sequence of str
        Columns to include, in axis order.
    alphabets : mapping, optional
        Declared alphabets; symbols outside them raise :class:`DomainError`.
        Undeclared columns use their sorted observed symbols.
    smoothing : float
        Pseudo-count added to every cell before normalizing.
    """
    if len(rows) == 0:
        raise DistributionError("cannot estimate a distribution from an empty dataset")
    if smoothing < 0:
        raise DistributionError("smoothing must be non-negative")
    alphabets = dict(alphabets or {})
    variables = []
    for name in names:
        if name in alphabets:
            alpha = tuple(alphabets[name])
        else:
            try:
                alpha = tuple(_sorted_symbols({r[name] for r in rows}))
            except KeyError:
                raise DistributionError(f"column {name!r} missing from data") from None
        variables.append(Variable(name, alpha))
    lookup = [{s: j for j, s in enumerate(v.alphabet)} for v in variables]
    codes = np.empty((len(rows), len(names)), dtype=np.int64)
    for r, row in enumerate(rows):
        for c, name in enumerate(names):
            try:
                value = row[name]
            except KeyError:
                raise DistributionError(f"row {r}: missing column {name!r}") from None
            try:
                codes[r, c] = lookup[c][value]
            except (KeyError, TypeError):
                raise DomainError(r, name, value) from None
    shape = tuple(v.cardinality for v in variables)
    flat = np.ravel_multi_index(codes.T, shape) if names else np.zeros(len(rows), dtype=np.int64)
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape).astype(float)
    return JointDistribution.from_weights(variables, counts + smoothing, sample_count=len(rows))


def marginalize(dist: JointDistribution, keep) -> JointDistribution:
    """Sum out every variable not in ``keep``; axis order follows ``keep``."""
    keep = _as_names(keep)
    axes = [dist.axis(n) for n in keep]
    if len(set(axes)) != len(axes):
        raise DistributionError(f"repeated variables in {keep}")
    drop = tuple(i for i in range(len(dist.variables)) if i not in axes)
    table = dist.pmf.sum(axis=drop) if drop else dist.pmf
    # remaining axes are in original order; permute to the requested order
    remaining = [i for i in range(len(dist.variables)) if i in axes]
    table = np.transpose(table, [remaining.index(i) for i in axes])
    return JointDistribution.from_weights([dist.variables[i] for i in axes], table, dist.sample_count)


def group(dist: JointDistribution, members, name: str | None = None) -> JointDistribution:
    """Fuse ``members`` into one composite variable.

    The composite alphabet is the Cartesian product of member alphabets
    (tuples, last member varying fastest) and takes the axis position of
    the first member. Probabilities are unchanged.
    """
    members = _as_names(members)
    if not members:
        raise DistributionError("cannot group an empty set of variables")
    axes = [dist.axis(n) for n in members]
    if len(set(axes)) != len(axes):
        raise DistributionError(f"repeated variables in {members}")
    if name is None:
        name = members[0] if len(members) == 1 else "(" + ",".join(members) + ")"
    others = [i for i in range(len(dist.variables)) if i not in axes]
    pos = sum(1 for i in others if i < axes[0])
    order = others[:pos] + axes + others[pos:]
    table = np.transpose(dist.pmf, order)
    member_vars = [dist.variables[i] for i in axes]
    card = int(np.prod([v.cardinality for v in member_vars]))
    shape = [dist.variables[i].cardinality for i in others]
    shape.insert(pos, card)
    if len(member_vars) == 1:
        composite = Variable(name, member_vars[0].alphabet)
    else:
        composite = Variable(name, tuple(itertools.product(*(v.alphabet for v in member_vars))))
    variables = [dist.variables[i] for i in others]
    if name in {v.name for v in variables}:
        raise DistributionError(f"composite name {name!r} clashes with an existing variable")
    variables.insert(pos, composite)
    return JointDistribution(tuple(variables), table.reshape(shape), dist.sample_count)


def add_constant(dist: JointDistribution, name: str, symbol=0) -> JointDistribution:
    """Append a cardinality-1 (constant) variable."""
    return JointDistribution(dist.variables + (Variable(name, (symbol,)),),
                             dist.pmf[..., np.newaxis], dist.sample_count)


def _entropy_of(table: np.ndarray) -> float:
    p = table[table > ZERO_MASS]
    return float(-(p * np.log2(p)).sum())


def entropy(dist: JointDistribution, vars_=None) -> float:
    """Joint Shannon entropy of ``vars_`` (all variables when None)."""
    if vars_ is None:
        return _entropy_of(dist.pmf)
    names = _as_names(vars_)
    if not names:
        return 0.0
    return _entropy_of(marginalize(dist, names).pmf)


def _clamp(value: float) -> float:
    if value < -INFO_TOL:
        raise ArithmeticError(f"information value {value} is negative beyond round-off")
    return max(value, 0.0)


def mutual_info(dist: JointDistribution, a, b) -> float:
    """I(A;B) in bits. ``a`` and ``b`` may be names or lists of names."""
    a, b = _as_names(a), _as_names(b)
    return _clamp(entropy(dist, a) + entropy(dist, b) - entropy(dist, a + b))


def conditional_mutual_info(dist: JointDistribution, a, b, given) -> float:
    """I(A;B | C) in bits."""
    a, b, c = _as_names(a), _as_names(b), _as_names(given)
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise DistributionError("conditional_mutual_info requires distinct variables")
    return _clamp(entropy(dist, a + c) + entropy(dist, b + c)
                  - entropy(dist, a + b + c) - entropy(dist, c))


def total_variation(p: JointDistribution, q: JointDistribution) -> float:
    """Total-variation distance between two tables over the same variables."""
    if p.names != q.names:
        raise DistributionError("distributions have different variables")
    pa, qa = p.pmf, q.pmf
    if p.variables != q.variables:
        # align on the union of alphabets
        tot = 0.0
        pm = dict(p.outcomes())
        qm = dict(q.outcomes())
        for k in set(pm) | set(qm):
            tot += abs(pm.get(k, 0.0) - qm.get(k, 0.0))
        return 0.5 * tot
    return 0.5 * float(np.abs(pa - qa).sum())
