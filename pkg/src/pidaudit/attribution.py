"""Shapley attribution of the disparity I(Z;Y) to individual features.

Two games over feature subsets S are supported:

* distributional ("potential contribution"): ``v(S) = Red(Z:(Y, X_S))``,
  computed from the joint distribution alone;
* interventional ("contribution"): ``v(S) = I(Z; Y(X_S))`` where
  ``Y(X_S)`` re-evaluates a model with features outside S held at
  baseline constants.

Subsets are bitmasks over the schema's feature order (bit i = feature i).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import AuditSchema
from .dist import JointDistribution, marginalize, mutual_info
from .oracle import ModelOracle, OracleError
from .pid import SolverConfig, decompose, unique_info

MAX_FEATURES = 16
MAX_JOINT_CELLS = 500_000
#: PotentContri values in [-NEG_TOL, 0) are reported as zero
NEG_TOL = 1e-5


class AuditError(ValueError):
    pass


@dataclass
class SubsetTable:
    """Values of a coalition game indexed by feature-subset bitmask."""

    features: tuple[str, ...]
    kind: str                       # "redundant" or "interventional_mi"
    entries: dict[int, float] = field(default_factory=dict)
    truncated: set[int] = field(default_factory=set)
    epsilon: float = 0.0

    @property
    def n(self) -> int:
        return len(self.features)

    def names(self, mask: int) -> tuple[str, ...]:
        return tuple(f for i, f in enumerate(self.features) if mask >> i & 1)

    def mask(self, names) -> int:
        m = 0
        for name in names:
            m |= 1 << self.features.index(name)
        return m

    def __getitem__(self, key) -> float:
        if not isinstance(key, int):
            key = self.mask(key)
        return self.entries[key]

    def is_complete(self) -> bool:
        return len(self.entries) == 1 << self.n


@dataclass
class AttributionReport:
    mode: str
    per_feature: dict[str, float]
    total_disparity: float
    explained: float
    unexplained: float | None
    subset_table: SubsetTable
    truncation_log: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    solves: int = 0
    nonconverged: list[tuple[str, ...]] = field(default_factory=list)


def subset_order(n: int) -> list[int]:
    """All subsets of ``n`` features: by size, then lexicographically by members."""
    def members(m):
        return [i for i in range(n) if m >> i & 1]
    return sorted(range(1 << n), key=lambda m: (bin(m).count("1"), members(m)))


def shapley(values, n: int | None = None) -> list[float]:
    """Shapley values of a game given by subset values.

    Parameters
    ----------
    values : SubsetTable or mapping of bitmask -> value
        Must define every subset of the ``n`` players; ``v(0)`` must be 0.
    n : int
        Number of players (taken from the table when omitted).
    """
    if isinstance(values, SubsetTable):
        n = values.n if n is None else n
        names = values.names
        values = values.entries
    else:
        if n is None:
            raise ValueError("n is required for a plain mapping")
        names = lambda m: tuple(i + 1 for i in range(n) if m >> i & 1)  # noqa: E731
    for m in range(1 << n):
        if m not in values:
            raise KeyError(f"subset {names(m)} (mask {m}) has no value")
    if abs(values[0]) > 0:
        raise ValueError("the empty coalition must have value 0")
    fact = [math.factorial(k) for k in range(n + 1)]
    weight = [fact[k] * fact[n - k - 1] / fact[n] for k in range(n)]
    phi = [0.0] * n
    for m in range(1 << n):
        k = bin(m).count("1")
        for i in range(n):
            if not m >> i & 1:
                phi[i] += weight[k] * (values[m | 1 << i] - values[m])
    return phi


def truncate_subsets(table: SubsetTable, total_disparity: float, epsilon: float) -> SubsetTable:
    """Fill supersets of near-saturated subsets without solving.

    Redundant information is non-decreasing along inclusion and bounded by
    ``I(Z;Y)``. Whenever a computed subset lies within ``epsilon`` of that
    ceiling, every strict superset without a value is assigned the ceiling
    and marked as truncated. ``epsilon = 0`` disables truncation.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if table.kind != "redundant":
        raise ValueError("truncation applies to redundant-information tables only")
    out = replace(table, entries=dict(table.entries), truncated=set(table.truncated), epsilon=epsilon)
    if epsilon == 0:
        return out
    full = (1 << table.n) - 1
    for m in subset_order(table.n):
        if m == 0 or m not in table.entries or m in table.truncated:
            continue
        if abs(table.entries[m] - total_disparity) <= epsilon:
            rest = full & ~m
            sub = rest
            while sub:
                sup = m | sub
                if sup not in out.entries:
                    out.entries[sup] = total_disparity
                    out.truncated.add(sup)
                sub = (sub - 1) & rest
    return out


@dataclass(frozen=True)
class AttributionConfig:
    epsilon: float = 0.0
    solver: SolverConfig = SolverConfig()
    jobs: int = 1
    max_features: int = MAX_FEATURES
    max_joint_cells: int = MAX_JOINT_CELLS
    baselines: dict | None = None
    check_determinism: bool = False
    determinism_fraction: float = 0.05
    seed: int = 0


def _check_size(dist: JointDistribution, schema: AuditSchema, cfg: AttributionConfig):
    n = len(schema.features)
    if n > cfg.max_features:
        raise AuditError(f"{n} features exceed the limit of {cfg.max_features}; "
                         "group related features into composite columns")
    cells = 1
    for name in (schema.protected, schema.decision, *schema.features):
        cells *= dist.variable(name).cardinality
    if cells > cfg.max_joint_cells:
        raise AuditError(f"joint alphabet has {cells} cells (limit {cfg.max_joint_cells}); "
                         "bin numeric columns (--bins) or group features")


def _red_job(args):
    dist, z, y, members, solver = args
    res = decompose(dist, z, y, list(members), solver)
    return res.red, res.converged, res.solver_iterations


def potential_contributions(dist: JointDistribution, schema: AuditSchema,
                            cfg: AttributionConfig | None = None) -> AttributionReport:
    """Distributional attribution: Shapley values of ``Red(Z:(Y, X_S))``.

    Subsets are solved level by level (increasing size); with
    ``cfg.epsilon > 0`` each level's results may prune the solves of
    larger subsets via :func:`truncate_subsets`. Within a level solves
    are independent and run on ``cfg.jobs`` processes.
    """
    cfg = cfg or AttributionConfig()
    _check_size(dist, schema, cfg)
    z, y, feats = schema.protected, schema.decision, schema.features
    n = len(feats)
    dist = marginalize(dist, [z, *feats, y])
    izy = mutual_info(dist, z, y)
    table = SubsetTable(feats, "redundant", {0: 0.0}, epsilon=cfg.epsilon)
    report_log, nonconv = [], []
    solves = 0
    order = subset_order(n)
    pool = ProcessPoolExecutor(cfg.jobs) if cfg.jobs > 1 else None
    try:
        for level in range(1, n + 1):
            todo = [m for m in order if bin(m).count("1") == level and m not in table.entries]
            jobs = [(dist, z, y, table.names(m), cfg.solver) for m in todo]
            results = pool.map(_red_job, jobs) if pool else map(_red_job, jobs)
            for m, (red, converged, _) in zip(todo, results):
                solves += 1
                table.entries[m] = red
                if not converged:
                    nonconv.append(table.names(m))
            before = set(table.truncated)
            table = truncate_subsets(table, izy, cfg.epsilon)
            for m in todo:
                if cfg.epsilon == 0 or abs(table.entries[m] - izy) > cfg.epsilon:
                    continue
                pruned = [s for s in table.truncated - before if s & m == m]
                if pruned:
                    report_log.append({"subset": list(table.names(m)), "value": table.entries[m],
                                       "pruned": [list(table.names(s)) for s in sorted(pruned)]})
                    before |= set(pruned)
    finally:
        if pool:
            pool.shutdown()
    phi = shapley(table)
    warnings = []
    per_feature = {}
    for f, v in zip(feats, phi):
        if -NEG_TOL <= v < 0:
            v = 0.0
        elif v < -NEG_TOL:
            warnings.append(f"PotentContri({f}) = {v:.3g} bits is negative beyond tolerance")
        per_feature[f] = v
    if nonconv:
        warnings.append(f"solver did not converge on subsets {[list(s) for s in nonconv]}")
    red_all = table.entries[(1 << n) - 1]
    return AttributionReport(
        mode="distributional",
        per_feature=per_feature,
        total_disparity=izy,
        explained=float(sum(per_feature.values())),
        unexplained=max(izy - red_all, 0.0),
        subset_table=table,
        truncation_log=report_log,
        warnings=warnings,
        solves=solves,
        nonconverged=nonconv,
    )


def diagnose_unexplained(dist: JointDistribution, schema: AuditSchema,
                         cfg: AttributionConfig | None = None) -> float:
    """Uni(Z:Y | X): disparity in the decision not attributable to any feature."""
    cfg = cfg or AttributionConfig()
    return unique_info(dist, schema.protected, schema.decision, list(schema.features), cfg.solver).value


def _is_numeric(alphabet) -> bool:
    return all(isinstance(s, (int, float, np.integer, np.floating)) and not isinstance(s, bool)
               for s in alphabet)


def baseline_values(dist: JointDistribution, features, overrides=None) -> dict:
    """Imputation constants: mean for numeric features, mode otherwise."""
    overrides = dict(overrides or {})
    out = {}
    for f in features:
        if f in overrides:
            out[f] = overrides[f]
            continue
        var = dist.variable(f)
        pm = marginalize(dist, [f]).pmf
        if _is_numeric(var.alphabet):
            out[f] = float(np.dot(pm, np.asarray(var.alphabet, dtype=float)))
        else:
            out[f] = var.alphabet[int(np.argmax(pm))]
    return out


def interventional_contributions(dist: JointDistribution, oracle: ModelOracle, schema: AuditSchema,
                                 cfg: AttributionConfig | None = None) -> AttributionReport:
    """Interventional attribution: Shapley values of ``I(Z; Y(X_S))``.

    ``dist`` must contain the protected attribute and every feature (a
    decision column, if present, is ignored). Each support cell of
    ``(Z, X)`` stands for the data rows sharing those values; for every
    subset the oracle is evaluated with out-of-subset features replaced
    by their baselines, and ``I(Z; Y(X_S))`` is taken from the induced
    weighted ``(Z, Y(X_S))`` pairs.
    """
    cfg = cfg or AttributionConfig()
    z, feats = schema.protected, schema.features
    n = len(feats)
    if n > cfg.max_features:
        raise AuditError(f"{n} features exceed the limit of {cfg.max_features}")
    if tuple(oracle.feature_order) != tuple(feats):
        raise AuditError(f"oracle feature order {oracle.feature_order} differs from schema {feats}")
    zx = marginalize(dist, [z, *feats])
    base = baseline_values(zx, feats, cfg.baselines)
    cells = list(zx.outcomes())
    table = SubsetTable(feats, "interventional_mi", {0: 0.0})
    warnings = []
    rng = np.random.default_rng(cfg.seed)
    deterministic = True
    for m in subset_order(n)[1:]:
        keep = [bool(m >> i & 1) for i in range(n)]
        rows = [tuple(x if k else base[f] for x, k, f in zip(sym[1:], keep, feats)) for sym, _ in cells]
        unique = list(dict.fromkeys(rows))
        try:
            decisions = oracle.evaluate_batch(unique)
        except OracleError as e:
            raise OracleError(f"subset {list(table.names(m))}, rows 0-{len(unique) - 1}: {e}") from e
        lookup = dict(zip(unique, decisions))
        if cfg.check_determinism:
            k = max(1, math.ceil(cfg.determinism_fraction * len(unique)))
            pick = rng.choice(len(unique), size=min(k, len(unique)), replace=False)
            again = oracle.evaluate_batch([unique[i] for i in pick])
            if any(lookup[unique[i]] != d for i, d in zip(pick, again)):
                deterministic = False
        pairs: dict[tuple, float] = {}
        for (sym, p), row in zip(cells, rows):
            key = (sym[0], lookup[row])
            pairs[key] = pairs.get(key, 0.0) + p
        joint = JointDistribution.from_outcomes([z, "__decision__"], pairs)
        table.entries[m] = mutual_info(joint, z, "__decision__")
    if cfg.check_determinism:
        oracle.determinism_checked = deterministic
        if not deterministic:
            warnings.append("model returned different decisions for repeated inputs; "
                            "contributions use the first observed outputs")
    phi = shapley(table)
    full = (1 << n) - 1
    return AttributionReport(
        mode="interventional",
        per_feature=dict(zip(feats, phi)),
        total_disparity=table.entries[full],
        explained=float(sum(phi)),
        unexplained=None,
        subset_table=table,
        warnings=warnings,
        solves=0,
    )
