"""Bivariate partial information decomposition.

Unique information is the minimum of ``I_Q(Z;A|B)`` over all joint
distributions ``Q`` sharing the ``(Z,A)`` and ``(Z,B)`` marginals of the
data. The feasible set splits into one transportation polytope per symbol
of ``Z``; the objective equals ``H(Z|B) - H_Q(Z|A,B)`` and is convex in
``Q``. Redundant and synergistic information follow from the unique term
and ordinary mutual informations.

Two solvers are provided:

``barrier``
    Log-barrier Newton method in the null-space (free) coordinates of the
    marginal constraints. Reports a duality-gap bound.
``alternating``
    Alternating I-projections (iterative proportional fitting against the
    ``Q(a,b)/|Z|`` reference). Slower; used as a cross-check.

:func:`brute_force_unique_info` is an independent grid-search oracle for
small alphabets.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dist import (
    ZERO_MASS,
    DistributionError,
    JointDistribution,
    Variable,
    add_constant,
    conditional_mutual_info,
    group,
    marginalize,
    mutual_info,
)

LN2 = math.log(2.0)
#: PID components in [-CLAMP_TOL, 0) are reported as zero
CLAMP_TOL = 1e-6


class SolverQualityError(ArithmeticError):
    """A PID component came out negative beyond round-off."""


@dataclass(frozen=True)
class SolverConfig:
    method: str = "barrier"
    tol: float = 1e-9            # target objective gap, bits
    max_iterations: int = 100_000
    start: str = "product"       # "product" or "random"
    seed: int = 0
    rel_tol: float = 1e-9        # alternating: relative decrease per sweep


@dataclass(frozen=True)
class PolytopePoint:
    """A joint distribution over (Z, A, B) in the marginal polytope."""

    q: JointDistribution
    feasibility_residual: float


@dataclass(frozen=True)
class UniqueInfo:
    value: float
    point: PolytopePoint
    iterations: int
    objective_gap: float
    converged: bool

    def __iter__(self):
        # allows ``value, point = unique_info(...)``
        return iter((self.value, self.point))


@dataclass(frozen=True)
class PidResult:
    uni_a_given_b: float
    uni_b_given_a: float
    red: float
    syn: float
    total: float
    solver_iterations: int = 0
    objective_gap_estimate: float = 0.0
    converged: bool = True

    def residuals(self, i_za: float, i_za_given_b: float) -> dict:
        """Absolute residuals of the three defining identities."""
        return {
            "total": abs(self.uni_a_given_b + self.uni_b_given_a + self.red + self.syn - self.total),
            "mi_a": abs(self.uni_a_given_b + self.red - i_za),
            "cmi_a_given_b": abs(self.uni_a_given_b + self.syn - i_za_given_b),
        }

    def to_dict(self) -> dict:
        return asdict(self)


def _as_list(v):
    return [v] if isinstance(v, str) else list(v)


def _triple(dist: JointDistribution, z, a, b) -> JointDistribution:
    """Reduce ``dist`` to a 3-variable table (Z, A, B), grouping lists."""
    zs, as_, bs = _as_list(z), _as_list(a), _as_list(b)
    if len(zs) != 1:
        raise DistributionError("the target must be a single variable")
    if not as_:
        raise DistributionError("source A must name at least one variable")
    if set(zs) & set(as_) or set(zs) & set(bs) or set(as_) & set(bs):
        raise DistributionError("target and sources must be disjoint")
    if not bs:
        d = add_constant(marginalize(dist, zs + as_), "__const__")
        bs = ["__const__"]
    else:
        d = marginalize(dist, zs + as_ + bs)
    # temporary names cannot clash with user columns such as "A" or "B"
    d = group(d, as_, name="\0A")
    d = group(d, bs, name="\0B")
    relabeled = tuple(Variable(n, v.alphabet) for n, v in zip("ZAB", d.variables))
    return JointDistribution(relabeled, d.pmf, d.sample_count)


class _Polytope:
    """Support, constraints and free coordinates of the marginal polytope."""

    def __init__(self, p: np.ndarray):
        self.shape = p.shape
        self.pza = p.sum(axis=2)
        self.pzb = p.sum(axis=1)
        mask = (self.pza[:, :, None] > ZERO_MASS) & (self.pzb[:, None, :] > ZERO_MASS)
        self.mask = mask
        zi, ai, bi = np.nonzero(mask)
        self.zi, self.ai, self.bi = zi, ai, bi
        self.m = len(zi)
        nz, na, nb = p.shape
        self.ab = ai * nb + bi
        self.n_ab = na * nb
        za_keys = zi * na + ai
        zb_keys = zi * nb + bi
        za_rows = np.unique(za_keys)
        zb_rows = np.unique(zb_keys)
        M = np.zeros((len(za_rows) + len(zb_rows), self.m))
        M[np.searchsorted(za_rows, za_keys), np.arange(self.m)] = 1.0
        M[len(za_rows) + np.searchsorted(zb_rows, zb_keys), np.arange(self.m)] = 1.0
        self.M = M
        self.c = np.concatenate([self.pza.ravel()[za_rows], self.pzb.ravel()[zb_rows]])
        self.za_keys, self.zb_keys = za_keys, zb_keys
        self.za_target = self.pza.ravel()[za_keys]
        self.zb_target = self.pzb.ravel()[zb_keys]
        self.nza, self.nzb = nz * na, nz * nb
        if self.m:
            _, sv, vt = np.linalg.svd(M, full_matrices=True)
            rank = int((sv > 1e-10 * sv[0]).sum())
            self.N = vt[rank:].T
        else:
            self.N = np.zeros((0, 0))
        # p(z,b) p(a|z): strictly positive on the support
        pz = self.pza.sum(axis=1)
        self.x0 = self.pzb[zi, bi] * self.pza[zi, ai] / pz[zi]

    @property
    def dim(self) -> int:
        return self.N.shape[1]

    def qab(self, x):
        return np.bincount(self.ab, weights=x, minlength=self.n_ab)

    def objective(self, x):
        """-H_Q(Z|A,B) in nats."""
        s = self.qab(x)
        return float(_xlogx(x).sum() - _xlogx(s).sum())

    def gradient(self, x):
        s = self.qab(x)
        return np.log(x) - np.log(s[self.ab])

    def residual(self, x) -> float:
        if not self.m:
            return 0.0
        r1 = np.bincount(self.za_keys, weights=x, minlength=self.nza).ravel()
        r2 = np.bincount(self.zb_keys, weights=x, minlength=self.nzb).ravel()
        return float(max(np.abs(r1 - self.pza.ravel()).max(), np.abs(r2 - self.pzb.ravel()).max()))

    def ipf(self, r, max_sweeps=20_000, tol=1e-14):
        """Scale ``r`` (positive on the support) to the target marginals."""
        x = r.copy()
        for _ in range(max_sweeps):
            row = np.bincount(self.za_keys, weights=x, minlength=self.nza)[self.za_keys]
            x = x * self.za_target / row
            col = np.bincount(self.zb_keys, weights=x, minlength=self.nzb)[self.zb_keys]
            x = x * self.zb_target / col
            row = np.bincount(self.za_keys, weights=x, minlength=self.nza)[self.za_keys]
            if np.abs(row - self.za_target).max() < tol:
                break
        return x

    def table(self, x) -> np.ndarray:
        q = np.zeros(self.shape)
        q[self.mask] = x
        return q


def _xlogx(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] * np.log(v[pos])
    return out


def _start(poly: _Polytope, cfg: SolverConfig) -> np.ndarray:
    if cfg.start == "product":
        return poly.x0
    if cfg.start == "random":
        rng = np.random.default_rng(cfg.seed)
        xr = poly.ipf(rng.uniform(0.05, 1.0, poly.m))
        return 0.5 * poly.x0 + 0.5 * xr
    raise ValueError(f"unknown start {cfg.start!r}")


def _solve_barrier(poly: _Polytope, x: np.ndarray, cfg: SolverConfig):
    N = poly.N
    EN = np.zeros((poly.n_ab, N.shape[1]))
    np.add.at(EN, poly.ab, N)
    m = poly.m
    tol_nats = cfg.tol * LN2
    t = 1.0
    mu = 12.0
    iters = 0
    centered = True

    def phi(xv, t):
        return t * poly.objective(xv) - np.log(xv).sum()

    while True:
        centered = False
        for _ in range(200):
            if iters >= cfg.max_iterations:
                break
            iters += 1
            s = poly.qab(x)
            g = t * (np.log(x) - np.log(s[poly.ab])) - 1.0 / x
            gy = N.T @ g
            w = t / x + 1.0 / x ** 2
            Hy = (N.T * w) @ N - t * (EN.T * (1.0 / np.maximum(s, 1e-300))) @ EN
            try:
                L = np.linalg.cholesky(Hy)
                dy = -np.linalg.solve(L.T, np.linalg.solve(L, gy))
            except np.linalg.LinAlgError:
                dy = -np.linalg.lstsq(Hy, gy, rcond=None)[0]
            dx = N @ dy
            dec = float(-gy @ dy)
            if dec <= 2e-12:
                centered = True
                break
            neg = dx < 0
            amax = float(np.min(-x[neg] / dx[neg])) if np.any(neg) else np.inf
            alpha = min(1.0, 0.99 * amax)
            f0 = phi(x, t)
            slope = float(g @ dx)
            accepted = False
            for _ in range(60):
                xn = x + alpha * dx
                if np.all(xn > 0) and phi(xn, t) <= f0 + 0.25 * alpha * slope + 1e-13 * abs(f0):
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                # cancellation limit reached at this t
                centered = True
                break
            x = xn
        if iters >= cfg.max_iterations:
            break
        if m / t < tol_nats:
            break
        t *= mu
    gap = m / t / LN2
    return x, iters, gap, centered and gap <= cfg.tol * 1.0000001


def _solve_alternating(poly: _Polytope, x: np.ndarray, cfg: SolverConfig):
    nz = poly.shape[0]
    f = poly.objective(x)
    iters = 0
    converged = False
    while iters < cfg.max_iterations:
        iters += 1
        ref = poly.qab(x)[poly.ab] / nz
        x = poly.ipf(ref, max_sweeps=2000)
        fn = poly.objective(x)
        if f - fn <= cfg.rel_tol * max(abs(f), 1e-12):
            converged = True
            f = fn
            break
        f = fn
    # the per-sweep decrease bounds nothing rigorous; report it as the gap proxy
    gap = abs(f - fn) / LN2 if iters else 0.0
    return x, iters, gap, converged


def _unique_on_triple(p3: JointDistribution, cfg: SolverConfig) -> UniqueInfo:
    poly = _Polytope(p3.pmf)
    if poly.m == 0:
        raise DistributionError("distribution has no mass")
    x0 = poly.x0
    if poly.residual(x0) > 1e-9:
        raise AssertionError("product start is not in the marginal polytope")
    if poly.dim == 0:
        x, iters, gap, conv = x0, 0, 0.0, True
    elif cfg.method == "barrier":
        x, iters, gap, conv = _solve_barrier(poly, _start(poly, cfg), cfg)
    elif cfg.method == "alternating":
        x, iters, gap, conv = _solve_alternating(poly, _start(poly, cfg), cfg)
    else:
        raise ValueError(f"unknown solver method {cfg.method!r}")
    q = JointDistribution.from_weights(p3.variables, poly.table(x))
    value = conditional_mutual_info(q, "Z", "A", "B")
    # the data and the product start are feasible; never report worse than them
    q0 = JointDistribution.from_weights(p3.variables, poly.table(x0))
    for cand in (q0, p3):
        v = conditional_mutual_info(cand, "Z", "A", "B")
        if v < value:
            value, q = v, cand
    return UniqueInfo(value, PolytopePoint(q, poly.residual(q.pmf[poly.mask])), iters, gap, conv)


def unique_info(dist: JointDistribution, z, a, b, cfg: SolverConfig | None = None) -> UniqueInfo:
    """Unique information Uni(Z:A|B) in bits.

    ``a`` and ``b`` may be variable names or lists of names (grouped into
    one composite variable). An empty ``b`` is treated as a constant.

    Returns
    -------
    UniqueInfo
        ``value`` and the minimizing ``point``, plus iteration count,
        objective-gap bound and a convergence flag. Unpacks as
        ``(value, point)``.
    """
    return _unique_on_triple(_triple(dist, z, a, b), cfg or SolverConfig())


def _clamp(name: str, v: float) -> float:
    if v < -CLAMP_TOL:
        raise SolverQualityError(f"{name} = {v:.3g} bits is negative beyond tolerance")
    return max(v, 0.0)


def decompose(dist: JointDistribution, z, a, b, cfg: SolverConfig | None = None) -> PidResult:
    """Four-way decomposition of I(Z;(A,B)) into unique, redundant and synergistic parts."""
    p3 = _triple(dist, z, a, b)
    ui = _unique_on_triple(p3, cfg or SolverConfig())
    i_za = mutual_info(p3, "Z", "A")
    i_zb = mutual_info(p3, "Z", "B")
    i_za_b = conditional_mutual_info(p3, "Z", "A", "B")
    total = mutual_info(p3, "Z", ["A", "B"])
    uni_a = _clamp("Uni(Z:A|B)", ui.value)
    red = _clamp("Red", i_za - uni_a)
    syn = _clamp("Syn", i_za_b - uni_a)
    uni_b = _clamp("Uni(Z:B|A)", i_zb - red)
    return PidResult(uni_a, uni_b, red, syn, total, ui.iterations, ui.objective_gap, ui.converged)


def redundant_info(dist: JointDistribution, z, a, b, cfg: SolverConfig | None = None) -> float:
    """Red(Z:(A,B)) = I(Z;A) - Uni(Z:A|B), in bits."""
    return decompose(dist, z, a, b, cfg).red


# --------------------------------------------------------------------------
# brute-force oracle


def _free_layout(p: np.ndarray):
    """Per-z blocks of the transportation polytope restricted to the support."""
    blocks = []
    for zi in range(p.shape[0]):
        rows = p[zi].sum(axis=1)
        cols = p[zi].sum(axis=0)
        ra = np.nonzero(rows > ZERO_MASS)[0]
        cb = np.nonzero(cols > ZERO_MASS)[0]
        if len(ra) == 0:
            continue
        # eliminate the heaviest row and column: keeps the feasible region fat
        ra = ra[np.argsort(rows[ra], kind="stable")]
        cb = cb[np.argsort(cols[cb], kind="stable")]
        blocks.append((zi, ra, cb, rows[ra], cols[cb]))
    return blocks


def _assemble(blocks, shape, params):
    """Fill Q tables (one per row of ``params``) from free coordinates.

    Returns the tables and a feasibility mask.
    """
    G = params.shape[0]
    q = np.zeros((G,) + shape)
    ok = np.ones(G, dtype=bool)
    k = 0
    for zi, ra, cb, rows, cols in blocks:
        r, c = len(ra), len(cb)
        blk = np.zeros((G, r, c))
        nfree = (r - 1) * (c - 1)
        if nfree:
            blk[:, : r - 1, : c - 1] = params[:, k: k + nfree].reshape(G, r - 1, c - 1)
        k += nfree
        blk[:, : r - 1, c - 1] = rows[: r - 1] - blk[:, : r - 1, : c - 1].sum(axis=2)
        blk[:, r - 1, :] = cols - blk[:, : r - 1, :].sum(axis=1)
        scale = max(rows.max(), cols.max())
        ok &= (blk >= -1e-13 * scale).all(axis=(1, 2))
        blk = np.maximum(blk, 0.0)
        q[:, zi][:, ra[:, None], cb[None, :]] = blk
    return q, ok


def _cmi_batch(q):
    """I(Z;A|B) in bits for a batch of (G, Z, A, B) tables."""
    def h(t, axes):
        m = t.sum(axis=axes) if axes else t
        m = m.reshape(m.shape[0], -1)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(m > 0, m * np.log2(np.where(m > 0, m, 1.0)), 0.0)
        return -v.sum(axis=1)
    return h(q, (2,)) + h(q, (1,)) - h(q, None) - h(q, (1, 2))


def _pattern_search(evaluate, center, best_val, basis, half, half_max, resolution, k, max_rounds):
    """Grid pattern search in the frame ``basis`` around ``center``."""
    d = len(center)
    steps = np.linspace(-1.0, 1.0, k)
    offsets = np.stack(np.meshgrid(*([steps] * d), indexing="ij"), axis=-1).reshape(-1, d)
    offsets = offsets @ basis.T
    rim_mask = np.abs(np.stack(np.meshgrid(*([steps] * d), indexing="ij"), axis=-1)
                      .reshape(-1, d)).max(axis=1) > 1 - 1e-12
    best = center
    for _ in range(max_rounds):
        vals = evaluate(center + half * offsets)
        i = int(np.argmin(vals))
        improved = vals[i] < best_val - 1e-15
        if improved:
            best_val, best = float(vals[i]), center + half * offsets[i]
            if rim_mask[i]:
                half = min(half * 2.0, half_max)
        else:
            if half < resolution:
                break
            half *= 0.5
        center = best
    return best, best_val


def brute_force_unique_info(dist: JointDistribution, z, a, b, grid_resolution: float = 1e-7,
                            max_cells: int = 24, max_free: int = 12,
                            max_rounds: int = 5000, refinements: int = 6) -> float:
    """Unique information by exhaustive, zooming grid search over the polytope.

    Each per-z block is parametrized by the entries left after eliminating
    its heaviest row and column. Starting from the product point, a full
    grid of ``k**d`` points around the incumbent is evaluated; the box is
    recentred on any improvement, grown when the improvement lies on its
    rim and halved when nothing improves, until its half width falls
    below ``grid_resolution``. The search is then repeated in a few
    seeded random orthonormal frames as a local refinement. Only for
    tiny alphabets.
    """
    p3 = _triple(dist, z, a, b)
    if p3.pmf.size > max_cells:
        raise ValueError(f"joint alphabet {p3.pmf.size} exceeds brute-force limit {max_cells}")
    p = p3.pmf
    blocks = _free_layout(p)
    lo, hi = [], []
    for _, ra, cb, rows, cols in blocks:
        for i in range(len(ra) - 1):
            for j in range(len(cb) - 1):
                lo.append(0.0)
                hi.append(min(rows[i], cols[j]))
    lo, hi = np.array(lo), np.array(hi)
    d = len(lo)
    if d > max_free:
        raise ValueError(f"{d} free coordinates exceed brute-force limit {max_free}")
    if d == 0:
        q, _ = _assemble(blocks, p.shape, np.zeros((1, 0)))
        return float(max(_cmi_batch(q)[0], 0.0))
    k = int(max(3, min(11, math.floor(8000 ** (1.0 / d)))))
    if k % 2 == 0:
        k -= 1
    # closed-form feasible seed p(z,b) p(a|z), in free coordinates
    seed = []
    for zi, ra, cb, rows, cols in blocks:
        blk = np.outer(rows, cols) / rows.sum()
        seed.extend(blk[:-1, :-1].ravel())
    best = np.array(seed)
    q, _ = _assemble(blocks, p.shape, best[None, :])
    best_val = float(_cmi_batch(q)[0])

    def evaluate(points):
        inbox = np.all((points >= lo - 1e-15) & (points <= hi + 1e-15), axis=1)
        q, ok = _assemble(blocks, p.shape, np.clip(points, lo, hi))
        ok &= inbox
        vals = np.full(len(points), np.inf)
        if ok.any():
            vals[ok] = _cmi_batch(q[ok])
        return vals

    width = float((hi - lo).max())
    best, best_val = _pattern_search(evaluate, best, best_val, np.eye(d), width / 2, width / 2,
                                     grid_resolution, k, max_rounds)
    # local refinement in rotated frames supplies move directions the
    # axis-aligned grid lacks
    rng = np.random.default_rng(0)
    for _ in range(refinements):
        basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
        best, best_val = _pattern_search(evaluate, best, best_val, basis, width * 1e-3, width / 2,
                                         grid_resolution, min(k, 5), max_rounds)
    return max(best_val, 0.0)
