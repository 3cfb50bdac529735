"""Currents on a finite graph with a ghost vertex, their weights and the
current expansion of ``<phi_A>``.

Vertex ``n`` (one past the last real vertex) plays the ghost.  A current is
stored as a sorted tuple of ``((i, j), value)`` pairs with ``i < j``; ghost
pairs have ``j == n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import CapacityError, ContractError, DomainError, TruncationError
from .model_core import InteractionGraph, MomentTable, SingleSiteParams, moment_ratio_upper, moment_table

__all__ = [
    "Moment",
    "Current",
    "TruncationPolicy",
    "CurrentStream",
    "ExpansionResult",
    "current_edges",
    "log_weight",
    "weight",
    "enumerate_currents",
    "current_expansion",
    "tail_bound",
    "sources_feasible",
    "adaptive_expansion",
]

MAX_DP_STATES = 20_000_000


# --------------------------------------------------------------------------
# moments and currents
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Moment:
    """Multiplicities ``A_x`` on the real vertices plus a ghost bit."""

    counts: tuple[int, ...]
    ghost: int = 0

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise DomainError("moment entries must be non-negative")
        if self.ghost not in (0, 1):
            raise DomainError("ghost component must be 0 or 1")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zero(cls, n: int) -> "Moment":
        return cls((0,) * n)

    @classmethod
    def of(cls, n: int, *vertices: int, ghost: int = 0) -> "Moment":
        c = [0] * n
        for v in vertices:
            c[v] += 1
        return cls(tuple(c), ghost)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return sum(self.counts)

    @property
    def sources(self) -> frozenset[int]:
        return frozenset(i for i, c in enumerate(self.counts) if c % 2)

    def is_admissible(self) -> bool:
        return (self.size + self.ghost) % 2 == 0

    def __add__(self, other: "Moment") -> "Moment":
        if self.n != other.n:
            raise DomainError("moments live on different vertex sets")
        return Moment(tuple(a + b for a, b in zip(self.counts, other.counts)), (self.ghost + other.ghost) % 2)

    def restricted_to(self, region: Iterable[int]) -> bool:
        region = set(region)
        return all(c == 0 for i, c in enumerate(self.counts) if i not in region)


@dataclass(frozen=True)
class Current:
    """Nonnegative integer values on unordered pairs of ``{0..n-1} ∪ {ghost=n}``."""

    n: int
    items: tuple[tuple[tuple[int, int], int], ...] = ()
    degrees: tuple[int, ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        clean = {}
        for (i, j), v in (self.items.items() if isinstance(self.items, Mapping) else self.items):
            i, j, v = int(i), int(j), int(v)
            if i == j or not (0 <= i <= self.n and 0 <= j <= self.n):
                raise ContractError(f"invalid pair ({i}, {j})")
            if v < 0:
                raise ContractError("current values must be non-negative")
            if v:
                key = (min(i, j), max(i, j))
                clean[key] = clean.get(key, 0) + v
        object.__setattr__(self, "items", tuple(sorted(clean.items())))
        deg = [0] * (self.n + 1)
        for (i, j), v in self.items:
            deg[i] += v
            deg[j] += v
        object.__setattr__(self, "degrees", tuple(deg[: self.n]))
        object.__setattr__(self, "_ghost_degree", deg[self.n])

    @classmethod
    def from_dict(cls, n: int, d: Mapping) -> "Current":
        return cls(n, tuple(d.items()))

    def __getitem__(self, pair) -> int:
        i, j = pair
        key = (min(i, j), max(i, j))
        for k, v in self.items:
            if k == key:
                return v
        return 0

    def as_dict(self) -> dict:
        return dict(self.items)

    @property
    def ghost(self) -> int:
        return self.n

    @property
    def ghost_degree(self) -> int:
        return self._ghost_degree

    @property
    def total(self) -> int:
        return sum(v for _, v in self.items)

    @property
    def sources(self) -> frozenset[int]:
        return frozenset(x for x, d in enumerate(self.degrees) if d % 2)

    def __add__(self, other: "Current") -> "Current":
        d = self.as_dict()
        for k, v in other.items:
            d[k] = d.get(k, 0) + v
        return Current(self.n, tuple(d.items()))


@dataclass(frozen=True)
class TruncationPolicy:
    K_edge: int = 30
    tol: float = 1e-8

    def __post_init__(self):
        if self.K_edge < 0:
            raise DomainError("K_edge must be non-negative")


def current_edges(graph: InteractionGraph, beta: float, h=0.0) -> list[tuple[int, int, float]]:
    """Pairs with positive coupling: ``(i, j, beta J_ij)`` and ``(i, ghost, beta h_i)``."""
    n = graph.n
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    out = [(i, j, beta * w) for i, j, w in graph.edges() if beta * w > 0]
    out += [(i, n, beta * float(h[i])) for i in range(n) if beta * h[i] > 0]
    return out


def _coupling_lookup(graph, beta, h):
    return {(i, j): K for i, j, K in current_edges(graph, beta, h)}


def log_weight(
    cur: Current, A: Moment, graph: InteractionGraph, beta: float, h, moments: MomentTable
) -> float:
    """Logarithm of the current weight (``-inf`` when some used pair has zero coupling)."""
    if cur.sources != A.sources:
        raise ContractError(f"current sources {sorted(cur.sources)} differ from moment sources {sorted(A.sources)}")
    K = _coupling_lookup(graph, beta, h)
    terms = []
    for pair, v in cur.items:
        c = K.get(pair, 0.0)
        if c <= 0.0:
            return -math.inf
        terms.append(v * math.log(c) - gammaln(v + 1))
    need = max((d + a for d, a in zip(cur.degrees, A.counts)), default=0)
    moments = moments.extended(need)
    for d, a in zip(cur.degrees, A.counts):
        assert (d + a) % 2 == 0, "odd single-site order"
        terms.append(moments.log_moment(d + a))
    return math.fsum(terms)


def weight(cur: Current, A: Moment, graph: InteractionGraph, beta: float, h, moments: MomentTable) -> float:
    return math.exp(log_weight(cur, A, graph, beta, h, moments))


# --------------------------------------------------------------------------
# enumeration
# --------------------------------------------------------------------------


def sources_feasible(graph: InteractionGraph, sources: Iterable[int], h=0.0, beta: float = 1.0) -> bool:
    """Every positive-coupling component without a ghost link holds an even number of sources."""
    n = graph.n
    edges = current_edges(graph, beta, h)
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j, _ in edges:
        parent[find(i)] = find(j)
    count: dict[int, int] = {}
    for s in sources:
        r = find(s)
        count[r] = count.get(r, 0) + 1
    ghost_root = find(n)
    return all(c % 2 == 0 for r, c in count.items() if r != ghost_root)


class CurrentStream:
    """Iterable of currents with the requested sources; ``feasible`` flags parity."""

    def __init__(self, n: int, edges: list[tuple[int, int]], sources: frozenset[int], K: int, feasible: bool):
        self.n = n
        self.edges = edges
        self.sources = sources
        self.K = K
        self.feasible = feasible

    def __iter__(self) -> Iterator[Current]:
        if not self.feasible:
            return
        n, edges = self.n, self.edges
        # index of the last edge touching each real vertex (for early parity checks)
        last = {}
        for k, (i, j) in enumerate(edges):
            last[i] = k
            if j < n:
                last[j] = k
        closing = [[] for _ in edges]
        for v, k in last.items():
            closing[k].append(v)
        untouched = [v for v in range(n) if v not in last]
        if any(v in self.sources for v in untouched):
            return
        target = [1 if v in self.sources else 0 for v in range(n)]
        parity = [0] * (n + 1)
        values = [0] * len(edges)

        def rec(k):
            if k == len(edges):
                yield Current(n, tuple((edges[e], values[e]) for e in range(len(edges)) if values[e]))
                return
            i, j = edges[k]
            for v in range(self.K + 1):
                values[k] = v
                parity[i] ^= v & 1
                parity[j] ^= v & 1
                if all(parity[x] == target[x] for x in closing[k]):
                    yield from rec(k + 1)
                parity[i] ^= v & 1
                parity[j] ^= v & 1
            values[k] = 0

        yield from rec(0)


def enumerate_currents(
    graph: InteractionGraph, source_moment: Moment, policy: TruncationPolicy, h=0.0, beta: float = 1.0
) -> CurrentStream:
    """All currents with ``∂n = ∂A`` and values at most ``K_edge`` on positive pairs.

    Order is lexicographic in the fixed edge order of :func:`current_edges`.
    """
    edges = [(i, j) for i, j, _ in current_edges(graph, beta if beta > 0 else 1.0, h)]
    src = source_moment.sources
    return CurrentStream(graph.n, edges, src, policy.K_edge, sources_feasible(graph, src, h, beta))


# --------------------------------------------------------------------------
# current expansion
# --------------------------------------------------------------------------


def _edge_series(K: float, cap: int) -> np.ndarray:
    m = np.arange(cap + 1)
    if K <= 0:
        out = np.zeros(cap + 1)
        out[0] = 1.0
        return out
    return np.exp(m * math.log(K) - gammaln(m + 1))


def _degree_dp(n: int, edges, caps: Sequence[int], K_edge: int) -> np.ndarray:
    """Total edge weight of the box, resolved by the degree vector."""
    shape = tuple(c + 1 for c in caps)
    if int(np.prod(shape)) > MAX_DP_STATES:
        raise CapacityError(f"degree table of shape {shape} is too large")
    dp = np.zeros(shape)
    dp[(0,) * n] = 1.0
    for i, j, K in edges:
        c = _edge_series(K, K_edge)
        new = np.zeros(shape)
        for m in range(K_edge + 1):
            if c[m] == 0.0:
                continue
            src = [slice(None)] * n
            dst = [slice(None)] * n
            src[i] = slice(0, shape[i] - m)
            dst[i] = slice(m, shape[i])
            if j < n:
                src[j] = slice(0, shape[j] - m)
                dst[j] = slice(m, shape[j])
            new[tuple(dst)] += c[m] * dp[tuple(src)]
        dp = new
    return dp


def _contract_sites(dp: np.ndarray, A: Sequence[int], moments: MomentTable) -> float:
    out = dp
    for x in range(dp.ndim - 1, -1, -1):
        d = np.arange(dp.shape[x])
        orders = d + A[x]
        vec = np.zeros(len(d))
        ok = orders % 2 == 0
        vec[ok] = np.exp([moments.log_moment(int(o)) for o in orders[ok]])
        out = out @ vec if out.ndim else out
    return float(out)


def _site_ratio(params: SingleSiteParams, moments: MomentTable, order: int) -> float:
    """Bound on ``u[2k+2]/u[2k]`` for all ``2k <= order`` (analytic, checked against the table)."""
    k = max(order // 2, 0)
    bound = moment_ratio_upper(params, k)
    top = min(k, len(moments.log_u) - 2)
    if top >= 0:
        bound = max(bound, max(math.exp(moments.log_u[i + 1] - moments.log_u[i]) for i in range(top + 1)))
    return bound


def tail_bound(
    policy: TruncationPolicy,
    graph: InteractionGraph,
    beta: float,
    h,
    moments: MomentTable,
    A: Moment | None = None,
) -> float:
    """Relative bound on the weight of currents excluded by the per-edge cap.

    Raising a pair value by two multiplies the weight by ``K^2/((m+1)(m+2))``
    times the single-site ratios ``u[2k+2]/u[2k]`` at both ends, each bounded
    by ``R_x``, the largest ratio over the working range (twice the box's
    maximal site order).  Every excluded current maps to a box current by
    lowering each over-cap pair to its parity; summing the geometric series
    per pair gives ``tau_e`` and the total relative excess is
    ``prod_e (1 + tau_e) - 1``.
    """
    n = graph.n
    K_edge = policy.K_edge
    edges = current_edges(graph, beta, h)
    A_counts = A.counts if A is not None else (0,) * n
    deg = [0] * n
    for i, j, _ in edges:
        deg[i] += 1
        if j < n:
            deg[j] += 1
    R = []
    for x in range(n):
        work = 2 * (deg[x] * K_edge + A_counts[x]) + 2
        R.append(_site_ratio(moments.params, moments, work))
    log_total = 0.0
    for i, j, K in edges:
        if K <= 0:
            continue
        step = K * math.sqrt(R[i] * (R[j] if j < n else 1.0))
        tau = 0.0
        for p in (0, 1):
            m0 = K_edge + 1 if (K_edge + 1 - p) % 2 == 0 else K_edge + 2
            terms = []
            m = m0
            while True:
                t = (m - p) * math.log(step) + gammaln(p + 1) - gammaln(m + 1)
                terms.append(t)
                if len(terms) > 3 and t < terms[0] - 60 and t < terms[-2]:
                    break
                m += 2
            tau = max(tau, math.fsum(math.exp(t) for t in terms))
        log_total += math.log1p(tau)
    return math.expm1(log_total)


@dataclass(frozen=True)
class ExpansionResult:
    value: float
    tail_bound: float
    numerator: float
    denominator: float
    K_edge: int
    feasible: bool = True

    def __iter__(self):
        yield self.value
        yield self.tail_bound


def current_expansion(
    graph: InteractionGraph,
    params: SingleSiteParams,
    beta: float,
    h,
    A: Moment,
    policy: TruncationPolicy = TruncationPolicy(),
    moments: MomentTable | None = None,
    check_tail: bool = True,
) -> ExpansionResult:
    """``<phi_A>`` as a ratio of truncated current sums, with a certified tail.

    The box (every pair value at most ``K_edge``) is summed exactly by
    convolving edge series into a table indexed by the site degrees, which
    is then contracted against the single-site moments.  This is the same
    sum as iterating :func:`enumerate_currents`, only grouped by degree.
    """
    n = graph.n
    if A.n != n:
        raise ContractError("moment and graph sizes differ")
    if not A.is_admissible():
        raise ContractError("moment is not admissible (odd total with ghost bit 0)")
    edges = current_edges(graph, beta, h)
    deg = [0] * n
    for i, j, _ in edges:
        deg[i] += 1
        if j < n:
            deg[j] += 1
    caps = [deg[x] * policy.K_edge for x in range(n)]
    need = max((c + a for c, a in zip(caps, A.counts)), default=0)
    if moments is None:
        moments = moment_table(params, need + 2)
    else:
        moments = moments.extended(need + 2)
    tb = tail_bound(policy, graph, beta, h, moments, A)
    if check_tail and tb > policy.tol:
        raise TruncationError(f"tail bound {tb:.3g} exceeds tol {policy.tol:.3g}; increase K_edge beyond {policy.K_edge}")
    feasible = sources_feasible(graph, A.sources, h, beta)
    if n == 0:
        return ExpansionResult(1.0, 0.0, 1.0, 1.0, policy.K_edge)
    dp = _degree_dp(n, edges, caps, policy.K_edge)
    num = _contract_sites(dp, A.counts, moments) if feasible else 0.0
    den = _contract_sites(dp, (0,) * n, moments)
    return ExpansionResult(num / den, tb, num, den, policy.K_edge, feasible)


def adaptive_expansion(
    graph: InteractionGraph,
    params: SingleSiteParams,
    beta: float,
    h,
    A: Moment,
    tol: float = 1e-9,
    K_start: int = 20,
    K_step: int = 10,
    K_max: int = 120,
) -> ExpansionResult:
    """Raise ``K_edge`` until the certified tail falls below ``tol``."""
    K = K_start
    while True:
        try:
            return current_expansion(graph, params, beta, h, A, TruncationPolicy(K, tol))
        except TruncationError:
            if K >= K_max:
                raise
            K += K_step
