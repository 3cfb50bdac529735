"""Griffiths-Simon Ising approximation of phi^4 and its random currents.

Each vertex ``x`` of the base graph is replaced by a block of ``N`` Ising
spins ``(x, 0..N-1)`` (flattened index ``x*N + j``).  Spins in one block
interact with coupling ``d_N`` (internal edges), spins of blocks ``x != y``
with ``beta c_N^2 J_xy`` (external edges), and every spin of block ``x``
with the ghost with ``beta c_N h_x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from . import _worm
from .currents import Current, Moment
from .currents import weight as phi4_weight
from .errors import CapacityError, ContractError, DomainError, ErgodicityError, ParameterError, TruncationError
from .model_core import GSParams, InteractionGraph, SingleSiteParams, gs_couplings, moment_table

__all__ = [
    "CouplingGraph",
    "BlockGraph",
    "IsingCurrent",
    "SourceInjection",
    "ParityPatterns",
    "RenormalisedWeight",
    "SwitchingResult",
    "ising_correlation_exact",
    "ising_correlation_blocksum",
    "block_moment",
    "parity_pattern_exact",
    "initial_current",
    "sample_current_worm",
    "worm_ratio",
    "sample_source_partitions",
    "project",
    "classify_W",
    "renormalised_weight",
    "count_external_lifts",
    "lift_count_leading_order",
    "ising_switching_check",
    "ConstantF",
    "ConnectsF",
    "DisconnectsF",
    "EdgeOpenF",
    "DampedF",
]

MAX_EXACT_SPINS = 22
MAX_EXACT_EDGES = 22


# --------------------------------------------------------------------------
# graphs
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CouplingGraph:
    """Ising graph: ``nv`` vertices, edges ``(eu[e], ev[e])`` with couplings ``K[e] >= 0``.

    ``ghost`` (if not None) is a vertex whose parity is never constrained and
    whose spin is frozen to +1 in spin sums.
    """

    nv: int
    eu: np.ndarray
    ev: np.ndarray
    K: np.ndarray
    ghost: int | None = None

    def __post_init__(self):
        for name in ("eu", "ev"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        object.__setattr__(self, "K", np.asarray(self.K, dtype=float))
        if not (len(self.eu) == len(self.ev) == len(self.K)):
            raise ContractError("edge arrays differ in length")
        if np.any(self.K < 0):
            raise ParameterError("currents need non-negative couplings")

    @classmethod
    def from_edges(cls, nv: int, edges: Iterable[Sequence], ghost: int | None = None) -> "CouplingGraph":
        edges = list(edges)
        return cls(nv, [e[0] for e in edges], [e[1] for e in edges], [e[2] for e in edges], ghost)

    @property
    def n_edges(self) -> int:
        return len(self.K)

    def csr(self):
        return _worm.build_csr(self.nv, self.eu, self.ev)

    def degrees(self, values: np.ndarray) -> np.ndarray:
        d = np.zeros(self.nv, dtype=np.int64)
        np.add.at(d, self.eu, values)
        np.add.at(d, self.ev, values)
        return d

    def sources_of(self, values: np.ndarray) -> frozenset[int]:
        d = self.degrees(values)
        return frozenset(int(v) for v in np.nonzero(d % 2)[0] if v != self.ghost)


@dataclass(frozen=True, eq=False)
class BlockGraph:
    """The block-spin graph built from a base graph."""

    base: InteractionGraph
    N: int
    params: SingleSiteParams
    beta: float = 1.0
    h: np.ndarray | float = 0.0
    calibrated: bool = True
    gs: GSParams = field(init=False)
    edge_class: np.ndarray = field(init=False, repr=False)
    coupling: CouplingGraph = field(init=False, repr=False)

    def __post_init__(self):
        n, N = self.base.n, int(self.N)
        if N < 1:
            raise ParameterError("N must be >= 1")
        h = np.broadcast_to(np.asarray(self.h, dtype=float), (n,)).copy()
        object.__setattr__(self, "h", h)
        gs = gs_couplings(self.params, N, self.calibrated)
        object.__setattr__(self, "gs", gs)
        eu, ev, K, cls = [], [], [], []
        for x in range(n):
            for j in range(N):
                for k in range(j + 1, N):
                    eu.append(x * N + j)
                    ev.append(x * N + k)
                    K.append(gs.d_N)
                    cls.append(0)
        kext = self.beta * gs.c_N**2
        for x, y, J in self.base.edges():
            for j in range(N):
                for k in range(N):
                    eu.append(x * N + j)
                    ev.append(y * N + k)
                    K.append(kext * J)
                    cls.append(1)
        ghost = None
        if np.any(self.beta * h > 0):
            ghost = n * N
            for x in range(n):
                if self.beta * h[x] > 0:
                    for j in range(N):
                        eu.append(x * N + j)
                        ev.append(ghost)
                        K.append(self.beta * gs.c_N * h[x])
                        cls.append(2)
        object.__setattr__(self, "edge_class", np.asarray(cls, dtype=np.int8))
        nv = n * N + (1 if ghost is not None else 0)
        Karr = np.asarray(K, dtype=float)
        object.__setattr__(
            self, "coupling", CouplingGraph.__new__(CouplingGraph)
        )
        # d_N may be negative for large a/small N; spin sums still work, currents do not
        cg = self.coupling
        object.__setattr__(cg, "nv", nv)
        object.__setattr__(cg, "eu", np.asarray(eu, dtype=np.int64))
        object.__setattr__(cg, "ev", np.asarray(ev, dtype=np.int64))
        object.__setattr__(cg, "K", Karr)
        object.__setattr__(cg, "ghost", ghost)

    @property
    def n_blocks(self) -> int:
        return self.base.n

    @property
    def n_spins(self) -> int:
        return self.base.n * self.N

    @property
    def ghost(self) -> int | None:
        return self.coupling.ghost

    def spin(self, x: int, j: int) -> int:
        return x * self.N + j

    def block_of(self, s: int) -> int:
        return s // self.N if s < self.n_spins else -1

    def n_internal(self) -> int:
        return int(np.sum(self.edge_class == 0))

    def require_ferromagnetic(self) -> None:
        if np.any(self.coupling.K < 0):
            raise ParameterError("negative internal coupling d_N; current representation unavailable")


@dataclass(frozen=True, eq=False)
class IsingCurrent:
    graph: CouplingGraph
    values: np.ndarray

    @property
    def degrees(self) -> np.ndarray:
        return self.graph.degrees(self.values)

    @property
    def sources(self) -> frozenset[int]:
        return self.graph.sources_of(self.values)


@dataclass(frozen=True)
class SourceInjection:
    """Natural injection: ``A~ = {(x, j): j < A_x}``, ``B~ = {(x, j): A_x <= j < A_x + B_x}``."""

    A: tuple[int, ...]
    B: tuple[int, ...]
    N: int

    def __post_init__(self):
        A = tuple(int(a) for a in getattr(self.A, "counts", self.A))
        B = tuple(int(b) for b in getattr(self.B, "counts", self.B)) if self.B is not None else (0,) * len(A)
        if any(a + b > self.N for a, b in zip(A, B)):
            raise ParameterError("block too small for the requested sources")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def A_tilde(self) -> list[int]:
        return [x * self.N + j for x, a in enumerate(self.A) for j in range(a)]

    @property
    def B_tilde(self) -> list[int]:
        return [x * self.N + j for x, (a, b) in enumerate(zip(self.A, self.B)) for j in range(a, a + b)]


# --------------------------------------------------------------------------
# exact spin sums
# --------------------------------------------------------------------------


def _spin_sum(cg: CouplingGraph, n_spins: int, S: Sequence[int]) -> float:
    if n_spins > MAX_EXACT_SPINS:
        raise CapacityError(f"exhaustive spin sum limited to {MAX_EXACT_SPINS} spins, got {n_spins}")
    Kmat = np.zeros((n_spins, n_spins))
    hv = np.zeros(n_spins)
    for u, v, k in zip(cg.eu, cg.ev, cg.K):
        if v == cg.ghost:
            hv[u] += k
        elif u == cg.ghost:
            hv[v] += k
        else:
            Kmat[u, v] += k
            Kmat[v, u] += k
    emax = 0.5 * np.abs(Kmat).sum() + np.abs(hv).sum()
    S = sorted(set(int(s) for s in S))
    total = 1 << n_spins
    chunk = min(total, 1 << 16)
    bits = np.arange(n_spins, dtype=np.int64)
    nums, dens = [], []
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        sig = 1.0 - 2.0 * ((idx[:, None] >> bits[None, :]) & 1)
        E = 0.5 * np.einsum("ci,ij,cj->c", sig, Kmat, sig) + sig @ hv
        w = np.exp(E - emax)
        dens.append(float(w.sum()))
        if S:
            nums.append(float((w * np.prod(sig[:, S], axis=1)).sum()))
        else:
            nums.append(dens[-1])
    return math.fsum(nums) / math.fsum(dens)


def ising_correlation_exact(bg: BlockGraph | CouplingGraph, S: Iterable[int]) -> float:
    """``mu[sigma_S]`` by exhaustive summation over all spin configurations."""
    if isinstance(bg, BlockGraph):
        return _spin_sum(bg.coupling, bg.n_spins, list(S))
    n_spins = bg.nv - (1 if bg.ghost is not None else 0)
    if bg.ghost is not None and bg.ghost != n_spins:
        raise ContractError("ghost must be the last vertex")
    return _spin_sum(bg, n_spins, list(S))


@lru_cache(maxsize=4096)
def _krawtchouk_log(N: int, s: int) -> tuple[np.ndarray, np.ndarray]:
    """log|c_k| and sign of ``c_k = sum_a (-1)^a C(s,a) C(N-s,k-a)``, k = 0..N."""
    logs = np.full(N + 1, -np.inf)
    signs = np.zeros(N + 1)
    for k in range(N + 1):
        c = sum((-1) ** a * comb(s, a) * comb(N - s, k - a) for a in range(max(0, k - (N - s)), min(s, k) + 1))
        if c:
            logs[k] = math.log(abs(c))
            signs[k] = 1.0 if c > 0 else -1.0
    return logs, signs


def ising_correlation_blocksum(bg: BlockGraph, S: Iterable[int]) -> float:
    """``mu[sigma_S]`` exactly for any ``N`` using block exchangeability.

    The weight depends on a configuration only through the block
    magnetisations, and the signed number of configurations with ``k``
    minus spins in a block holding ``s`` spins of ``S`` is a Krawtchouk
    polynomial, evaluated here in exact integer arithmetic.
    """
    n, N = bg.n_blocks, bg.N
    if n > 3 or (N + 1) ** n > 5e7:
        raise CapacityError("block sums support at most 3 blocks and (N+1)^blocks <= 5e7")
    counts = [0] * n
    for s in S:
        b = bg.block_of(int(s))
        if b < 0:
            raise ContractError("S must contain spins only")
        counts[b] += 1
    gs = bg.gs
    M = N - 2 * np.arange(N + 1, dtype=float)
    loc_num, loc_den = [], []
    for x in range(n):
        base = gs.d_N * (M * M - N) / 2.0 + bg.beta * gs.c_N * bg.h[x] * M
        ln, sn = _krawtchouk_log(N, counts[x])
        ld, _ = _krawtchouk_log(N, 0)
        loc_num.append((ln + base, sn))
        loc_den.append(ld + base)

    def grid(arrs):
        out = np.zeros((N + 1,) * n)
        for x, a in enumerate(arrs):
            shape = [1] * n
            shape[x] = N + 1
            out = out + a.reshape(shape)
        return out

    pair = np.zeros((N + 1,) * n)
    for x, y, J in bg.base.edges():
        shape_x = [1] * n
        shape_x[x] = N + 1
        shape_y = [1] * n
        shape_y[y] = N + 1
        pair = pair + bg.beta * gs.c_N**2 * J * M.reshape(shape_x) * M.reshape(shape_y)
    log_den = grid(loc_den) + pair
    log_num = grid([a for a, _ in loc_num]) + pair
    sign = np.ones((N + 1,) * n)
    for x, (_, s) in enumerate(loc_num):
        shape = [1] * n
        shape[x] = N + 1
        sign = sign * s.reshape(shape)
    shift = np.max(log_den)
    den = np.sum(np.exp(log_den - shift))
    finite = np.isfinite(log_num)
    num = np.sum(sign[finite] * np.exp(log_num[finite] - shift))
    return float(num / den)


def block_moment(
    params: SingleSiteParams,
    N: int,
    p: int,
    mode: str = "exact",
    calibrated: bool = True,
    steps: int = 4_000_000,
    seed: int | None = None,
):
    """``(c_N N)^p mu^0[sigma_(x,1) ... sigma_(x,p)]`` for a single block.

    ``mode="exact"`` uses the block sum (any N); ``mode="worm"`` returns a
    ``(value, stderr)`` pair from telescoping worm ratios.
    """
    if p > N:
        raise ParameterError(f"need N >= p, got N={N}, p={p}")
    if p < 0:
        raise DomainError("p must be non-negative")
    bg = BlockGraph(InteractionGraph(np.zeros((1, 1))), N, params, 1.0, 0.0, calibrated)
    scale = (bg.gs.c_N * N) ** p
    if p % 2:
        return 0.0 if mode == "exact" else (0.0, 0.0)
    if mode == "exact":
        return scale * ising_correlation_blocksum(bg, range(p))
    if mode != "worm":
        raise DomainError(f"unknown mode {mode!r}")
    if seed is None:
        raise ContractError("worm mode needs a seed")
    bg.require_ferromagnetic()
    val, rel2 = 1.0, 0.0
    for r in range(0, p, 2):
        est, err = worm_ratio(bg.coupling, list(range(r)), steps, seed + r, exclude=list(range(r)))
        val *= est
        rel2 += (err / est) ** 2 if est else math.inf
    return scale * val, scale * val * math.sqrt(rel2)


# --------------------------------------------------------------------------
# parity patterns and exact current sampling
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParityPatterns:
    graph: CouplingGraph
    sources: frozenset[int]
    patterns: np.ndarray  # int64 bitmasks with ∂η = sources
    log_weights: np.ndarray

    @property
    def Z(self) -> float:
        if len(self.log_weights) == 0:
            return 0.0
        m = self.log_weights.max()
        return float(np.exp(m) * np.exp(self.log_weights - m).sum())

    @property
    def probabilities(self) -> np.ndarray:
        m = self.log_weights.max()
        w = np.exp(self.log_weights - m)
        return w / w.sum()

    def sample(self, n_samples: int, seed: int) -> np.ndarray:
        """Exact i.i.d. currents (rows) with ``∂n = sources``."""
        rng = np.random.default_rng(seed)
        if len(self.patterns) == 0:
            raise ErgodicityError("no current has the requested sources")
        pat = rng.choice(self.patterns, size=n_samples, p=self.probabilities)
        E = self.graph.n_edges
        out = np.zeros((n_samples, E), dtype=np.int64)
        for e in range(E):
            bit = (pat >> e) & 1
            for par in (0, 1):
                idx = np.nonzero(bit == par)[0]
                if len(idx):
                    out[idx, e] = _parity_poisson(self.graph.K[e], par, len(idx), rng)
        return out


def _parity_poisson(K: float, parity: int, size: int, rng) -> np.ndarray:
    # inverse CDF of n ~ K^n/n! restricted to n ≡ parity
    if K == 0:
        if parity:
            raise ErgodicityError("odd value on a zero-coupling edge")
        return np.zeros(size, dtype=np.int64)
    top = int(K + 12 * math.sqrt(K + 1) + 40)
    ns = np.arange(parity, top + 1, 2)
    logs = ns * math.log(K) - gammaln(ns + 1)
    p = np.exp(logs - logs.max())
    cdf = np.cumsum(p / p.sum())
    return ns[np.searchsorted(cdf, rng.random(size), side="right").clip(max=len(ns) - 1)]


def parity_pattern_exact(cg: CouplingGraph, sources: Iterable[int]) -> ParityPatterns:
    """All parity patterns ``η`` with ``∂η = sources`` and weights ``prod cosh/sinh K_e``."""
    E = cg.n_edges
    if E > MAX_EXACT_EDGES:
        raise CapacityError(f"parity enumeration limited to {MAX_EXACT_EDGES} edges, got {E}")
    src = frozenset(int(s) for s in sources)
    idx = np.arange(1 << E, dtype=np.int64)
    ok = np.ones(len(idx), dtype=bool)
    for v in range(cg.nv):
        if v == cg.ghost:
            continue
        mask = 0
        for e in range(E):
            if cg.eu[e] == v or cg.ev[e] == v:
                mask |= 1 << e
        par = np.bitwise_count(idx & mask) & 1
        ok &= par == (1 if v in src else 0)
    pats = idx[ok]
    logw = np.zeros(len(pats))
    with np.errstate(divide="ignore"):
        for e in range(E):
            K = cg.K[e]
            bit = (pats >> e) & 1
            logw += np.where(bit == 1, np.log(np.sinh(K)) if K > 0 else -np.inf, math.log(math.cosh(K)))
    keep = np.isfinite(logw)
    return ParityPatterns(cg, src, pats[keep], logw[keep])


# --------------------------------------------------------------------------
# worm sampler
# --------------------------------------------------------------------------


def initial_current(cg: CouplingGraph, sources: Iterable[int]) -> np.ndarray:
    """Some current with ``∂n = sources`` (paths pairing the sources)."""
    from collections import deque

    src = sorted(set(int(s) for s in sources))
    n = np.zeros(cg.n_edges, dtype=np.int64)
    offs, nbr, eid = cg.csr()
    pos = [e for e in range(cg.n_edges) if cg.K[e] > 0]
    usable = np.zeros(cg.n_edges, dtype=bool)
    usable[pos] = True

    def path(a, targets):
        prev = {a: (-1, -1)}
        q = deque([a])
        while q:
            v = q.popleft()
            if v in targets:
                end, out = v, []
                while v != a:
                    pv, e = prev[v]
                    out.append(e)
                    v = pv
                return end, out
            for k in range(offs[v], offs[v + 1]):
                w, e = int(nbr[k]), int(eid[k])
                if usable[e] and w not in prev:
                    prev[w] = (v, e)
                    q.append(w)
        return None, None

    remaining = list(src)
    while remaining:
        a = remaining.pop(0)
        targets = set(remaining)
        if cg.ghost is not None:
            targets.add(cg.ghost)
        end, p = path(a, targets)
        if p is None:
            raise ErgodicityError(f"source {a} cannot be paired through positive couplings")
        for e in p:
            n[e] += 1
        if end != cg.ghost:
            remaining.remove(end)
    if cg.sources_of(n) != frozenset(src):
        raise ErgodicityError("could not build an initial current with the requested sources")
    return n


def sample_current_worm(
    cg: CouplingGraph | BlockGraph,
    sources: Iterable[int],
    n_samples: int,
    seed: int,
    thin: int = 50,
    burn: int = 10_000,
) -> np.ndarray:
    """Worm-sampled currents (rows over edges) with ``∂n = sources``."""
    if isinstance(cg, BlockGraph):
        cg.require_ferromagnetic()
        cg = cg.coupling
    if seed is None:
        raise ContractError("a seed is required")
    n0 = initial_current(cg, sources)
    offs, nbr, eid = cg.csr()
    return _worm.worm_sample_edges(offs, nbr, eid, cg.K, n0, cg.nv, int(n_samples), int(thin), int(burn), int(seed) % 2**32)


def worm_ratio(
    cg: CouplingGraph, base_sources: Sequence[int], steps: int, seed: int, exclude: Sequence[int] = (), pairs=None
) -> tuple[float, float]:
    """Estimate ``Z(S ∪ {i,j}) / Z(S)`` averaged over unordered pairs.

    ``pairs=None`` averages over all pairs of non-ghost vertices outside
    ``exclude`` (appropriate when they are exchangeable); otherwise the
    average is over the given pairs.  Error bars use 32 batches.
    """
    n0 = initial_current(cg, base_sources)
    offs, nbr, eid = cg.csr()
    closed, opened = _worm.worm_two_point(offs, nbr, eid, cg.K, n0, cg.nv, int(steps), 32, int(seed) % 2**32)
    mask = np.zeros((cg.nv, cg.nv), dtype=bool)
    if pairs is None:
        ok = np.ones(cg.nv, dtype=bool)
        ok[list(exclude)] = False
        if cg.ghost is not None:
            ok[cg.ghost] = False
        mask = ok[:, None] & ok[None, :]
        np.fill_diagonal(mask, False)
    else:
        for i, j in pairs:
            mask[i, j] = mask[j, i] = True
    n_ordered = mask.sum()
    per_batch_open = (opened * mask[None]).sum(axis=(1, 2)).astype(float)
    ratio_b = per_batch_open / n_ordered / (closed / cg.nv)
    tot = per_batch_open.sum() / n_ordered / (closed.sum() / cg.nv)
    # jackknife over batches
    B = len(closed)
    jk = np.array(
        [
            (per_batch_open.sum() - per_batch_open[b]) / n_ordered / ((closed.sum() - closed[b]) / cg.nv)
            for b in range(B)
        ]
    )
    err = math.sqrt((B - 1) / B * np.sum((jk - jk.mean()) ** 2))
    del ratio_b
    return float(tot), float(err)


def sample_source_partitions(
    cg: CouplingGraph,
    sources1: Sequence[int],
    sources2: Sequence[int] | None,
    points: Sequence[int],
    n_samples: int,
    seed: int,
    thin: int = 50,
    burn: int = 20_000,
    edge_mask: np.ndarray | None = None,
    track: int = -1,
    K2: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster labels of ``points`` under ``n1 + n2`` for independent worm currents.

    ``sources2=None`` drops the second current (single-current clusters).
    ``K2`` overrides the couplings of the second current (zeros confine it
    to a subgraph).  Returns restricted-growth labels per sample and the
    size of the cluster of ``track`` (if given).
    """
    if seed is None:
        raise ContractError("a seed is required")
    n1 = initial_current(cg, sources1)
    use2 = sources2 is not None
    K2 = cg.K if K2 is None else np.asarray(K2, dtype=float)
    cg2 = CouplingGraph(cg.nv, cg.eu, cg.ev, K2, cg.ghost)
    n2 = initial_current(cg2, sources2) if use2 else np.zeros(cg.n_edges, dtype=np.int64)
    offs, nbr, eid = cg.csr()
    mask = np.ones(cg.n_edges, dtype=np.bool_) if edge_mask is None else np.asarray(edge_mask, dtype=np.bool_)
    return _worm.worm_partitions(
        offs, nbr, eid, cg.K, K2, cg.eu, cg.ev, mask, n1, n2, use2,
        np.asarray(points, dtype=np.int64), cg.nv, int(n_samples), int(thin), int(burn), int(seed) % 2**32, int(track),
    )


# --------------------------------------------------------------------------
# projection, W classes, renormalised weights
# --------------------------------------------------------------------------


def project(tilde_n: IsingCurrent | np.ndarray, bg: BlockGraph | None = None) -> Current:
    """Sum the external and ghost values of a block current onto the base graph."""
    if isinstance(tilde_n, IsingCurrent):
        values = tilde_n.values
    else:
        values = np.asarray(tilde_n)
    if bg is None:
        raise ContractError("project needs the block graph")
    n, N = bg.n_blocks, bg.N
    cg = bg.coupling
    acc: dict[tuple[int, int], int] = {}
    for e in np.nonzero((bg.edge_class > 0) & (values > 0))[0]:
        u, v = int(cg.eu[e]), int(cg.ev[e])
        bu = u // N
        bv = n if v == cg.ghost else v // N
        key = (min(bu, bv), max(bu, bv))
        acc[key] = acc.get(key, 0) + int(values[e])
    return Current(n, tuple(acc.items()))


def pushforward_sources(tilde_n: IsingCurrent, bg: BlockGraph) -> tuple[int, ...]:
    out = [0] * bg.n_blocks
    for s in tilde_n.sources:
        out[bg.block_of(s)] += 1
    return tuple(out)


def classify_W(tilde_n: IsingCurrent | np.ndarray, bg: BlockGraph, sources: Iterable[int]) -> tuple[bool, bool]:
    """``(in_W1, in_W2)``: no external value at source spins; external degree <= 1 everywhere."""
    values = tilde_n.values if isinstance(tilde_n, IsingCurrent) else np.asarray(tilde_n)
    cg = bg.coupling
    ext = (bg.edge_class > 0) & (values > 0)
    deg = np.zeros(cg.nv, dtype=np.int64)
    np.add.at(deg, cg.eu[ext], values[ext])
    np.add.at(deg, cg.ev[ext], values[ext])
    spins = deg[: bg.n_spins]
    src = [s for s in sources if s < bg.n_spins]
    w1 = bool(np.all(spins[src] == 0)) if src else True
    w2 = bool(np.all(spins <= 1))
    return w1, w2


@lru_cache(maxsize=4096)
def _odd_bins_counts(N: int, A: int, delta: int) -> dict[tuple[int, int], int]:
    """Sequences of ``delta`` balls in ``N`` bins by (#odd bins among the first A, among the rest)."""
    out = {}
    for k in range(delta % 2, min(delta, N) + 1, 2):
        # sequences in which a fixed set of k bins is odd and all others even
        total = 0
        for m in range(N + 1):
            c = sum((-1) ** i * comb(k, i) * comb(N - k, m - i) for i in range(max(0, m - (N - k)), min(k, m) + 1))
            if c:
                total += c * (N - 2 * m) ** delta
        q = total // (1 << N)
        for k1 in range(max(0, k - (N - A)), min(k, A) + 1):
            out[(k1, k - k1)] = comb(A, k1) * comb(N - A, k - k1) * q
    return out


@lru_cache(maxsize=4096)
def _block_mu(g: float, a: float, N: int, p: int, calibrated: bool) -> float:
    if p % 2:
        return 0.0
    bg = BlockGraph(InteractionGraph(np.zeros((1, 1))), N, SingleSiteParams(g, a), 1.0, 0.0, calibrated)
    return ising_correlation_blocksum(bg, range(p))


@dataclass(frozen=True)
class RenormalisedWeight:
    value: float
    w_part: float
    remainder: float
    limit: float
    stderr: float = 0.0


def renormalised_weight(
    n: Current,
    A: Moment,
    N: int,
    beta: float,
    graph: InteractionGraph,
    params: SingleSiteParams,
    h=0.0,
    mode: str = "exact",
    calibrated: bool = True,
    n_samples: int = 20000,
    seed: int | None = None,
) -> RenormalisedWeight:
    """Scaled total weight of block currents that project to ``n`` with sources ``A~``.

    Summing the internal currents block by block leaves, for each block, an
    average of ``mu_{K_N}[sigma_U]`` over uniformly placed external
    half-edges, where ``U`` is ``A~_x`` plus the spins of odd external
    degree.  ``exact`` evaluates that average from occupancy counts;
    ``mc`` samples placements.  ``w_part`` is the contribution of lifts in
    ``W1 ∩ W2``; ``remainder`` the rest.
    """
    nb = graph.n
    gs = gs_couplings(params, N, calibrated)
    if gs.d_N < 0:
        raise ParameterError("negative internal coupling")
    h = np.broadcast_to(np.asarray(h, dtype=float), (nb,))
    if any(a > N for a in A.counts):
        raise ParameterError("block smaller than the moment")
    lim = phi4_weight(n, A, graph, beta, h, moment_table(params)) if n.sources == A.sources else 0.0
    log_pref = (sum(A.counts)) * math.log(gs.c_N * N)
    for (x, y), v in n.items:
        if y == nb:
            K, slots = beta * gs.c_N * h[x], N
        else:
            K, slots = beta * gs.c_N**2 * graph.J[x, y], N * N
        if K <= 0:
            return RenormalisedWeight(0.0, 0.0, 0.0, lim)
        log_pref += v * math.log(K * slots) - gammaln(v + 1)
    pref = math.exp(log_pref)
    deg = n.degrees
    if mode == "exact":
        tot, wp = 1.0, 1.0
        for x in range(nb):
            Ax, d = A.counts[x], deg[x]
            if (Ax + d) % 2:
                return RenormalisedWeight(0.0, 0.0, 0.0, lim)
            counts = _odd_bins_counts(N, Ax, d)
            Ex = math.fsum(
                float(Fraction(c, N**d)) * _block_mu(params.g, params.a, N, Ax - k1 + k2, calibrated)
                for (k1, k2), c in counts.items()
            )
            falling = math.prod(range(N - Ax - d + 1, N - Ax + 1)) if d <= N - Ax else 0
            Wx = float(Fraction(falling, N**d)) * _block_mu(params.g, params.a, N, Ax + d, calibrated)
            tot *= Ex
            wp *= Wx
        return RenormalisedWeight(pref * tot, pref * wp, pref * (tot - wp), lim)
    if mode != "mc":
        raise DomainError(f"unknown mode {mode!r}")
    if seed is None:
        raise ContractError("mc mode needs a seed")
    rng = np.random.default_rng(seed)
    means, rel2 = [], 0.0
    for x in range(nb):
        Ax, d = A.counts[x], deg[x]
        if (Ax + d) % 2:
            return RenormalisedWeight(0.0, 0.0, 0.0, lim)
        bins = rng.integers(0, N, size=(n_samples, d))
        occ = np.zeros((n_samples, N), dtype=np.int64)
        for c in range(d):
            np.add.at(occ, (np.arange(n_samples), bins[:, c]), 1)
        odd = occ % 2 == 1
        inA = np.zeros(N, dtype=bool)
        inA[:Ax] = True
        p = Ax - odd[:, inA].sum(1) + odd[:, ~inA].sum(1)
        mu_tab = np.array([_block_mu(params.g, params.a, N, int(q), calibrated) for q in range(Ax + d + 1)])
        vals = mu_tab[p]
        m = vals.mean()
        means.append(m)
        if m:
            rel2 += (vals.std(ddof=1) / math.sqrt(n_samples) / m) ** 2
    val = pref * math.prod(means)
    return RenormalisedWeight(val, math.nan, math.nan, lim, abs(val) * math.sqrt(rel2))


def count_external_lifts(n: Current, A: Sequence[int], N: int) -> int:
    """Number of external lifts of ``n`` with every spin of external degree <= 1 and none in ``A~``."""
    counts = getattr(A, "counts", A)
    num = 1
    for x, d in enumerate(n.degrees):
        avail = N - counts[x]
        if d > avail:
            return 0
        num *= math.prod(range(avail - d + 1, avail + 1))
    den = math.prod(math.factorial(v) for _, v in n.items)
    return num // den


def lift_count_leading_order(n: Current, N: int) -> Fraction:
    """``prod N^{2 n_xy}/n_xy! * prod N^{n_xg}/n_xg!`` as an exact rational."""
    out = Fraction(1)
    for (x, y), v in n.items:
        out *= Fraction(N ** ((1 if y == n.n else 2) * v), math.factorial(v))
    return out


# --------------------------------------------------------------------------
# classical switching identity on micro-graphs
# --------------------------------------------------------------------------


class SwitchingFunctional:
    """``F(m) = indicator(open edges of m) * prod_e edge_factor(m_e)``, with ``0 <= F <= 1``."""

    def indicator(self, open_mask: int, comp: Sequence[int]) -> float:
        return 1.0

    def edge_factor(self, e: int, m: np.ndarray) -> np.ndarray:
        return np.ones_like(m, dtype=float)


@dataclass(frozen=True)
class ConstantF(SwitchingFunctional):
    c: float = 1.0

    def indicator(self, open_mask, comp):
        return self.c


@dataclass(frozen=True)
class ConnectsF(SwitchingFunctional):
    u: int
    w: int

    def indicator(self, open_mask, comp):
        return 1.0 if comp[self.u] == comp[self.w] else 0.0


@dataclass(frozen=True)
class DisconnectsF(SwitchingFunctional):
    u: int
    w: int

    def indicator(self, open_mask, comp):
        return 0.0 if comp[self.u] == comp[self.w] else 1.0


@dataclass(frozen=True)
class EdgeOpenF(SwitchingFunctional):
    e: int

    def indicator(self, open_mask, comp):
        return float((open_mask >> self.e) & 1)


@dataclass(frozen=True)
class DampedF(SwitchingFunctional):
    lam: float
    inner: SwitchingFunctional = ConstantF()

    def indicator(self, open_mask, comp):
        return self.inner.indicator(open_mask, comp)

    def edge_factor(self, e, m):
        return np.exp(-self.lam * np.asarray(m, dtype=float)) * self.inner.edge_factor(e, m)


@dataclass(frozen=True)
class SwitchingResult:
    lhs: float
    rhs: float
    tail: float

    @property
    def difference(self) -> float:
        return abs(self.lhs - self.rhs)


def _components(nv: int, eu, ev, open_mask: int) -> tuple[int, ...]:
    parent = list(range(nv))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    e = 0
    m = open_mask
    while m:
        if m & 1:
            a, b = find(int(eu[e])), find(int(ev[e]))
            if a != b:
                parent[a] = b
        m >>= 1
        e += 1
    return tuple(find(v) for v in range(nv))


def ising_switching_check(
    cg: CouplingGraph, S: Iterable[int], T: Iterable[int], F: SwitchingFunctional = ConstantF(), cap: int = 30,
    tol: float = 1e-9,
) -> SwitchingResult:
    """Both sides of the classical switching identity by truncated enumeration.

    ``lhs = sum_{∂n1=S, ∂n2=T} w(n1) w(n2) F(n1+n2)`` and
    ``rhs = sum_{∂n1=SΔT, ∂n2=∅} w(n1) w(n2) F(n1+n2) 1[every cluster of
    n1+n2 holds an even number of T]``.  Values per edge are capped at
    ``cap``; ``tail`` bounds the neglected weight of either side.
    """
    E = cg.n_edges
    if E > 10:
        raise CapacityError("switching enumeration supports at most 10 edges")
    S, T = frozenset(S), frozenset(T)
    if (len(S) + len(T)) % 2 and cg.ghost is None:
        return SwitchingResult(0.0, 0.0, 0.0)
    m = np.arange(cap + 1)
    tables = []
    trunc_mass = []
    for e in range(E):
        K = cg.K[e]
        ser = np.exp(m * math.log(K) - gammaln(m + 1)) if K > 0 else (m == 0).astype(float)
        tot = np.add.outer(m, m)
        phi = F.edge_factor(e, tot)
        w = np.outer(ser, ser) * phi
        par = np.add.outer(m % 2 * 2, m % 2)  # 2*p1 + p2
        tab = {"closed": float(w[0, 0])}
        for p in range(4):
            sel = par == p
            if p == 0:
                sel = sel & (tot > 0)
            tab[p] = math.fsum(w[sel])
        tables.append(tab)
        trunc_mass.append(float(ser.sum()) ** 2)
    tail = math.exp(float(2 * cg.K.sum())) - math.prod(trunc_mass)
    if tail > tol:
        raise TruncationError(f"switching tail {tail:.3g} above tol {tol:.3g}; raise cap")

    def patterns(src):
        return [int(p) for p in parity_pattern_exact(CouplingGraph(cg.nv, cg.eu, cg.ev, np.ones(E), cg.ghost), src).patterns]

    comp_cache: dict[int, tuple[int, ...]] = {}

    def comp_of(mask):
        if mask not in comp_cache:
            comp_cache[mask] = _components(cg.nv, cg.eu, cg.ev, mask)
        return comp_cache[mask]

    # the ghost absorbs odd parity
    T_eff = T ^ {cg.ghost} if (cg.ghost is not None and len(T - {cg.ghost}) % 2) else T

    def even_T(comp):
        cnt: dict[int, int] = {}
        for t in T_eff:
            cnt[comp[t]] = cnt.get(comp[t], 0) + 1
        return all(c % 2 == 0 for c in cnt.values())

    def side(src1, src2, with_event):
        terms = []
        for p1 in patterns(src1):
            for p2 in patterns(src2):
                forced = p1 | p2
                free = [e for e in range(E) if not (forced >> e) & 1]
                base = 1.0
                for e in range(E):
                    if (forced >> e) & 1:
                        base *= tables[e][2 * ((p1 >> e) & 1) + ((p2 >> e) & 1)]
                if base == 0.0:
                    continue
                for sub in range(1 << len(free)):
                    mask = forced
                    wgt = base
                    for k, e in enumerate(free):
                        if (sub >> k) & 1:
                            mask |= 1 << e
                            wgt *= tables[e][0]
                        else:
                            wgt *= tables[e]["closed"]
                    if wgt == 0.0:
                        continue
                    comp = comp_of(mask)
                    val = F.indicator(mask, comp)
                    if with_event and not even_T(comp):
                        val = 0.0
                    if val:
                        terms.append(wgt * val)
        return math.fsum(terms)

    lhs = side(S, T, False)
    rhs = side(S ^ T, frozenset(), True)
    return SwitchingResult(lhs, rhs, tail)
