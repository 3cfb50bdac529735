"""Tangled currents: blocks, even partitions, the multigraph of a tangled
current, the pairing event, and tangling measures on a single block.

Partitions of ``{0..m-1}`` are canonical tuples of sorted tuples, ordered by
their smallest element.  Coarsening: ``P`` is coarser than ``Q`` when every
class of ``P`` is a union of classes of ``Q``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import mpmath
import numpy as np

from .currents import Current, Moment
from .errors import CapacityError, ContractError, DomainError, ParameterError
from .gs_ising import BlockGraph, sample_source_partitions
from .model_core import InteractionGraph, SingleSiteParams

__all__ = [
    "canonical",
    "enumerate_even_partitions",
    "is_admissible",
    "is_coarser",
    "up_sets",
    "Block",
    "make_block",
    "TangledCurrent",
    "Multigraph",
    "build_multigraph",
    "pairing_event_FB",
    "induced_source_partition",
    "PartitionDistribution",
    "BlockClusterEngine",
    "estimate_tangling_measure",
    "single_current_measure",
    "union_measure",
    "cluster_size",
]

MAX_PARTITION_SIZE = 12
EXACT_MAX_N = 256

Partition = tuple[tuple[int, ...], ...]


# --------------------------------------------------------------------------
# partitions
# --------------------------------------------------------------------------


def canonical(classes: Iterable[Iterable[int]]) -> Partition:
    cl = [tuple(sorted(c)) for c in classes]
    cl = [c for c in cl if c]
    return tuple(sorted(cl))


def _from_labels(labels: Sequence[int]) -> Partition:
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return canonical(groups.values())


def is_admissible(P: Partition, split: int | None) -> bool:
    """Every class even; with ``split``, even on both sides of ``split``."""
    for c in P:
        if len(c) % 2:
            return False
        if split is not None and sum(1 for i in c if i < split) % 2:
            return False
    return True


@lru_cache(maxsize=64)
def enumerate_even_partitions(size: int, split: tuple[int, int] | None = None) -> tuple[Partition, ...]:
    """All even partitions of ``size`` points in canonical generation order.

    ``split=(s, t)`` keeps the admissible ones: classes meet the first ``s``
    points and the last ``t`` points in even numbers.
    """
    if size < 0 or size % 2:
        raise DomainError("partition size must be even and non-negative")
    if size > MAX_PARTITION_SIZE:
        raise CapacityError(f"size {size} above the guard {MAX_PARTITION_SIZE}")
    if split is not None:
        split = tuple(split)
        if sum(split) != size:
            raise ContractError("split sizes must add up to size")
    cut = split[0] if split else None
    out: list[Partition] = []
    classes: list[list[int]] = []

    def rec(i):
        if i == size:
            P = canonical(classes)
            if is_admissible(P, cut):
                out.append(P)
            return
        for c in classes:
            c.append(i)
            rec(i + 1)
            c.pop()
        classes.append([i])
        rec(i + 1)
        classes.pop()

    rec(0)
    return tuple(out)


def is_coarser(P: Partition, Q: Partition) -> bool:
    """True iff every class of ``P`` is a union of classes of ``Q``."""
    ground_p = sorted(i for c in P for i in c)
    ground_q = sorted(i for c in Q for i in c)
    if ground_p != ground_q:
        raise ContractError("partitions live on different ground sets")
    where = {i: k for k, c in enumerate(P) for i in c}
    return all(len({where[i] for i in c}) == 1 for c in Q)


def up_sets(elements: Sequence[Partition]) -> list[frozenset[Partition]]:
    """All subsets of ``elements`` closed under coarsening (including ∅ and the full set)."""
    els = list(elements)
    if len(els) > 16:
        raise CapacityError("up-set enumeration limited to 16 partitions")
    above = [{j for j, Q in enumerate(els) if is_coarser(Q, P)} for P in els]
    out = []
    for mask in range(1 << len(els)):
        members = {i for i in range(len(els)) if (mask >> i) & 1}
        if all(above[i] <= members for i in members):
            out.append(frozenset(els[i] for i in members))
    return out


# --------------------------------------------------------------------------
# blocks, tangled currents, multigraph
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """Labelled points at ``owner``.

    Points are tuples: ``(c, y, k)`` for the k-th unit of current ``c`` on the
    pair ``{owner, y}`` and ``(label, k)`` for the k-th source of the group
    ``label``.  ``split`` counts the points belonging to current 1 (listed
    first); admissibility is checked against it when there is a second current.
    """

    owner: int
    points: tuple[tuple, ...]
    split: int | None = None

    @property
    def size(self) -> int:
        return len(self.points)

    def index(self, point: tuple) -> int:
        return self.points.index(point)


def _current_points(z: int, cur: Current, c: int) -> list[tuple]:
    pts = []
    for (i, j), v in cur.items:
        if z in (i, j):
            y = j if i == z else i
            pts.extend((c, y, k) for k in range(1, v + 1))
    return pts


def make_block(
    z: int,
    n1: Current,
    sources1: Mapping[str, Moment] | None = None,
    n2: Current | None = None,
    sources2: Mapping[str, Moment] | None = None,
) -> Block:
    pts = _current_points(z, n1, 1)
    for label, M in sorted((sources1 or {}).items()):
        pts.extend((label, k) for k in range(1, M.counts[z] + 1))
    split = None
    if n2 is not None:
        split = len(pts)
        pts.extend(_current_points(z, n2, 2))
        for label, M in sorted((sources2 or {}).items()):
            pts.extend((label, k) for k in range(1, M.counts[z] + 1))
    if len(pts) % 2:
        raise ContractError(f"block at {z} has odd size; sources do not match the current")
    return Block(z, tuple(pts), split)


@dataclass(frozen=True, eq=False)
class TangledCurrent:
    """A current (or pair), source groups, and one admissible partition per block."""

    n1: Current
    sources1: Mapping[str, Moment]
    tangling: Mapping[int, Partition]
    n2: Current | None = None
    sources2: Mapping[str, Moment] = field(default_factory=dict)
    blocks: dict[int, Block] = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n1.n
        if self.n2 is not None and self.n2.n != n:
            raise ContractError("currents live on different graphs")
        blocks = {}
        for z in range(n):
            b = make_block(z, self.n1, self.sources1, self.n2, self.sources2)
            P = canonical(self.tangling.get(z, ()))
            ground = sorted(i for c in P for i in c)
            if ground != list(range(b.size)):
                raise ContractError(f"partition at {z} does not cover its block of size {b.size}")
            if not is_admissible(P, b.split):
                raise ContractError(f"partition at {z} is not admissible")
            blocks[z] = b
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "tangling", {z: canonical(self.tangling.get(z, ())) for z in range(n)})

    @property
    def n(self) -> int:
        return self.n1.n


@dataclass
class Multigraph:
    """Vertices: ``(z, class)`` pairs plus ``"ghost"``; one edge per current unit."""

    vertices: list
    edges: list[tuple[int, int]]
    parent: list[int]
    owner_of: dict  # point (z, point tuple) -> vertex id

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    @property
    def n_components(self) -> int:
        return len({self.find(i) for i in range(len(self.vertices))})

    def components(self) -> list[list]:
        groups: dict[int, list] = {}
        for i, v in enumerate(self.vertices):
            groups.setdefault(self.find(i), []).append(v)
        return sorted(groups.values(), key=lambda g: str(g[0]))

    def point_vertex(self, z: int, point: tuple) -> int:
        return self.owner_of[(z, point)]

    def points_connected(self, z1: int, p1: tuple, z2: int, p2: tuple) -> bool:
        return self.find(self.point_vertex(z1, p1)) == self.find(self.point_vertex(z2, p2))

    def blocks_connected(self, x: int, y: int) -> bool:
        """``x <-> y``: some class at ``x`` shares a component with some class at ``y``."""
        rx = {self.find(i) for i, v in enumerate(self.vertices) if v != "ghost" and v[0] == x}
        ry = {self.find(i) for i, v in enumerate(self.vertices) if v != "ghost" and v[0] == y}
        return bool(rx & ry)


def build_multigraph(tc: TangledCurrent, region: Iterable[int] | None = None, include_ghost: bool = True) -> Multigraph:
    """The multigraph of ``tc``; with ``region``, only units with both ends in it (ghost optional)."""
    n = tc.n
    region_set = set(range(n)) if region is None else set(region)
    vertices: list = []
    owner_of: dict = {}
    for z in range(n):
        b = tc.blocks[z]
        for k, cl in enumerate(tc.tangling[z]):
            vid = len(vertices)
            vertices.append((z, k))
            for i in cl:
                owner_of[(z, b.points[i])] = vid
    ghost_id = len(vertices)
    vertices.append("ghost")
    parent = list(range(len(vertices)))
    mg = Multigraph(vertices, [], parent, owner_of)

    def inside(v):
        return (include_ghost if v == n else v in region_set)

    for c, cur in ((1, tc.n1), (2, tc.n2)):
        if cur is None:
            continue
        for (i, j), v in cur.items:
            if not (inside(i) and inside(j)):
                continue
            for k in range(1, v + 1):
                a = owner_of[(i, (c, j, k))]
                b = ghost_id if j == n else owner_of[(j, (c, i, k))]
                mg.edges.append((a, b))
                ra, rb = mg.find(a), mg.find(b)
                if ra != rb:
                    parent[ra] = rb
    return mg


def pairing_event_FB(
    tc: TangledCurrent, B_label: str = "b", region: Iterable[int] | None = None, include_ghost: bool = True
) -> bool:
    """Every component of the restricted multigraph meets the ``B_label`` points evenly."""
    mg = build_multigraph(tc, region, include_ghost)
    counts: dict[int, int] = {}
    for z, b in tc.blocks.items():
        for p in b.points:
            if p[0] == B_label:
                r = mg.find(mg.point_vertex(z, p))
                counts[r] = counts.get(r, 0) + 1
    return all(c % 2 == 0 for c in counts.values())


def induced_source_partition(
    nv: int,
    edges: Sequence[tuple[int, int]],
    values: Sequence[int] | np.ndarray,
    sources: Sequence[int],
    values2: Sequence[int] | np.ndarray | None = None,
) -> Partition:
    """Partition of the positions in ``sources`` by clusters of ``values (+ values2)``."""
    parent = list(range(nv))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    vals = np.asarray(values)
    if values2 is not None:
        vals = vals + np.asarray(values2)
    for (u, v), m in zip(edges, vals):
        if m > 0:
            a, b = find(u), find(v)
            if a != b:
                parent[a] = b
    return _from_labels([find(s) for s in sources])


# --------------------------------------------------------------------------
# tangling measures on one block
# --------------------------------------------------------------------------


@dataclass
class PartitionDistribution:
    support: list[Partition]
    probabilities: list[float]
    stderr: list[float]
    provenance: dict
    total_weight: float | None = None

    def prob(self, P: Partition) -> float:
        P = canonical(P)
        return self.probabilities[self.support.index(P)] if P in self.support else 0.0

    def err(self, P: Partition) -> float:
        P = canonical(P)
        return self.stderr[self.support.index(P)] if P in self.support else 0.0

    def of_set(self, U: Iterable[Partition]) -> tuple[float, float]:
        """Probability of a set of partitions and a conservative error (errors added)."""
        U = set(U)
        p = sum(q for P, q in zip(self.support, self.probabilities) if P in U)
        e = sum(s for P, s in zip(self.support, self.stderr) if P in U)
        return p, e

    def to_json(self) -> str:
        return json.dumps(
            {
                "support": [[list(c) for c in P] for P in self.support],
                "probabilities": self.probabilities,
                "stderr": self.stderr,
                "provenance": self.provenance,
                "total_weight": self.total_weight,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PartitionDistribution":
        d = json.loads(text)
        return cls(
            [canonical(P) for P in d["support"]], d["probabilities"], d["stderr"], d["provenance"], d["total_weight"]
        )


class BlockClusterEngine:
    """Exact cluster statistics of one or two independent currents on ``K_N``.

    All vertices of ``K_N`` are exchangeable, so weights depend only on how
    many vertices a set has and how many sources of each current it holds.
    ``Y(m, u)`` is the current partition function of ``K_m`` with ``u``
    sources, ``D`` its product over the currents, and ``Phi`` the weight of
    configurations whose union connects all ``m`` vertices, obtained by
    peeling off the cluster of a distinguished vertex.
    """

    def __init__(self, K: float, N: int, S: int, T: int = 0, double: bool = True, dps: int = 60):
        if N > EXACT_MAX_N:
            raise CapacityError(f"exact block engine limited to N <= {EXACT_MAX_N}")
        if S + T > N:
            raise ParameterError("N < S + T")
        self.K, self.N, self.S, self.T, self.double = K, N, S, T if double else 0, double
        self.ctx = mpmath.MPContext()
        self.ctx.dps = dps
        self._Y = {}
        self._phi = {}
        self._build()

    def Y(self, m: int, u: int):
        key = (m, u)
        if key not in self._Y:
            ctx = self.ctx
            if u % 2:
                self._Y[key] = ctx.mpf(0)
            else:
                K = ctx.mpf(self.K)
                tot = ctx.mpf(0)
                for a in range(u + 1):
                    for b in range(m - u + 1):
                        M = m - 2 * a - 2 * b
                        tot += (-1) ** a * math.comb(u, a) * math.comb(m - u, b) * ctx.exp(K * (M * M - m) / 2)
                self._Y[key] = tot / ctx.mpf(2) ** m
        return self._Y[key]

    def D(self, m: int, s: int, t: int):
        return self.Y(m, s) * self.Y(m, t) if self.double else self.Y(m, s)

    def _count(self, m, s, t, c, sc, tc):
        free = m - s - t
        fc = c - sc - tc
        if fc < 0 or fc > free:
            return 0
        if s > 0:
            return math.comb(s - 1, sc - 1) * math.comb(t, tc) * math.comb(free, fc) if sc >= 1 else 0
        if t > 0:
            return math.comb(t - 1, tc - 1) * math.comb(free, fc) if tc >= 1 else 0
        return math.comb(m - 1, c - 1) if sc == tc == 0 else 0

    def _build(self):
        N, S, T = self.N, self.S, self.T
        for m in range(1, N + 1):
            for s in range(0, min(S, m) + 1, 2):
                for t in range(0, min(T, m - s) + 1, 2):
                    acc = self.D(m, s, t)
                    for c in range(1, m):
                        for sc in range(0, min(s, c) + 1, 2):
                            for tc in range(0, min(t, c - sc) + 1, 2):
                                cnt = self._count(m, s, t, c, sc, tc)
                                if cnt:
                                    acc -= cnt * self._phi[(c, sc, tc)] * self.D(m - c, s - sc, t - tc)
                    self._phi[(m, s, t)] = acc

    def phi(self, m: int, s: int, t: int):
        if m == 0:
            return self.ctx.mpf(0)
        return self._phi.get((m, s, t), self.ctx.mpf(0))

    def partition_weight(self, classes: Sequence[tuple[int, int]]):
        """``Z(π)`` for classes with ``(s_j, t_j)`` source counts; free vertices fill clusters."""
        ctx = self.ctx
        F = self.N - self.S - self.T
        fact = [ctx.factorial(r) for r in range(F + 1)]
        poly = [self.D(r, 0, 0) / fact[r] for r in range(F + 1)]
        for s, t in classes:
            fj = [self.phi(s + t + r, s, t) / fact[r] for r in range(F + 1)]
            poly = [ctx.fsum(poly[i] * fj[r - i] for i in range(r + 1)) for r in range(F + 1)]
        return poly[F] * fact[F]

    def distribution(self) -> tuple[list[Partition], list]:
        S, T = self.S, self.T
        parts = enumerate_even_partitions(S + T, (S, T) if self.double else None)
        weights = []
        for P in parts:
            cls = [(sum(1 for i in c if i < S), sum(1 for i in c if i >= S)) for c in P]
            weights.append(self.partition_weight(cls))
        return list(parts), weights

    def total(self):
        return self.D(self.N, self.S, self.T)

    def mean_cluster_size(self):
        """``E|C_v|`` for ``v`` the first source point (any vertex when there are none)."""
        N, S, T = self.N, self.S, self.T
        acc = self.ctx.mpf(0)
        for c in range(1, N + 1):
            for sc in range(0, min(S, c) + 1, 2):
                for tc in range(0, min(T, c - sc) + 1, 2):
                    cnt = self._count(N, S, T, c, sc, tc)
                    if cnt:
                        acc += cnt * c * self.phi(c, sc, tc) * self.D(N - c, S - sc, T - tc)
        return acc / self.total()


def _block_coupling(params: SingleSiteParams, N: int, calibrated: bool) -> BlockGraph:
    bg = BlockGraph(InteractionGraph(np.zeros((1, 1))), N, params, 1.0, 0.0, calibrated)
    bg.require_ferromagnetic()
    return bg


def _batch_errors(indicator_rows: np.ndarray, n_batches: int = 20) -> np.ndarray:
    n = indicator_rows.shape[0]
    size = max(1, n // n_batches)
    nb = n // size
    means = indicator_rows[: nb * size].reshape(nb, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.zeros(indicator_rows.shape[1])


def estimate_tangling_measure(
    params: SingleSiteParams,
    N: int,
    S: int,
    T: int = 0,
    mode: str = "exact",
    n_samples: int = 100_000,
    seed: int | None = None,
    calibrated: bool = True,
    thin: int = 50,
) -> PartitionDistribution:
    """Distribution of the partition of ``S~ ⊔ T~`` induced by two independent currents on ``K_N``.

    The first current has sources ``S~`` (spins ``0..S-1``), the second
    ``T~`` (spins ``S..S+T-1``); ``T = 0`` makes the second sourceless.
    """
    if S % 2 or T % 2 or S < 0 or T < 0:
        raise DomainError("S and T must be even and non-negative")
    if N < S + T:
        raise ParameterError(f"N={N} < S+T={S + T}")
    bg = _block_coupling(params, N, calibrated)
    scale = (bg.gs.c_N * N) ** (S + T)
    prov = {"N": N, "S": S, "T": T, "mode": mode, "g": params.g, "a": params.a, "calibrated": calibrated}
    if mode == "exact":
        eng = BlockClusterEngine(bg.gs.d_N, N, S, T, double=True)
        parts, w = eng.distribution()
        tot = eng.total()
        probs = [float(x / tot) for x in w]
        norm = eng.Y(N, 0) ** 2
        total_weight = float(scale * tot / norm)
        prov.update({"sampler": "block-cluster-exact", "n_samples": None, "seed": None})
        return PartitionDistribution(parts, probs, [0.0] * len(parts), prov, total_weight)
    if mode != "worm":
        raise DomainError(f"unknown mode {mode!r}")
    if seed is None:
        raise ContractError("worm mode needs a seed")
    parts = list(enumerate_even_partitions(S + T, (S, T)))
    labels, _ = sample_source_partitions(
        bg.coupling, list(range(S)), list(range(S, S + T)), list(range(S + T)), n_samples, seed, thin=thin
    )
    return _distribution_from_labels(labels, parts, prov | {"sampler": "worm", "n_samples": n_samples, "seed": seed})


def _distribution_from_labels(labels: np.ndarray, parts: list[Partition], prov: dict) -> PartitionDistribution:
    index = {P: i for i, P in enumerate(parts)}
    ind = np.zeros((labels.shape[0], len(parts)))
    cache: dict[bytes, int] = {}
    for r, row in enumerate(labels):
        key = row.tobytes()
        if key not in cache:
            P = _from_labels(row)
            if P not in index:
                raise ContractError(f"sampled partition {P} outside the admissible support")
            cache[key] = index[P]
        ind[r, cache[key]] = 1.0
    probs = ind.mean(axis=0)
    errs = _batch_errors(ind)
    return PartitionDistribution(parts, [float(p) for p in probs], [float(e) for e in errs], prov)


def single_current_measure(
    params: SingleSiteParams,
    N: int,
    S: int,
    mode: str = "exact",
    n_samples: int = 100_000,
    seed: int | None = None,
    calibrated: bool = True,
    thin: int = 50,
) -> PartitionDistribution:
    """Partition of ``S~`` induced by one current with sources ``S~`` on ``K_N``."""
    if S % 2 or S < 0:
        raise DomainError("S must be even")
    if N < S:
        raise ParameterError(f"N={N} < S={S}")
    bg = _block_coupling(params, N, calibrated)
    prov = {"N": N, "S": S, "T": 0, "mode": mode, "single": True, "g": params.g, "a": params.a}
    if mode == "exact":
        eng = BlockClusterEngine(bg.gs.d_N, N, S, 0, double=False)
        parts, w = eng.distribution()
        tot = eng.total()
        prov.update({"sampler": "block-cluster-exact", "n_samples": None, "seed": None})
        return PartitionDistribution(parts, [float(x / tot) for x in w], [0.0] * len(parts), prov)
    if seed is None:
        raise ContractError("worm mode needs a seed")
    parts = list(enumerate_even_partitions(S))
    labels, _ = sample_source_partitions(bg.coupling, list(range(S)), None, list(range(S)), n_samples, seed, thin=thin)
    return _distribution_from_labels(labels, parts, prov | {"sampler": "worm", "n_samples": n_samples, "seed": seed})


def union_measure(rho_S: PartitionDistribution, rho_T: PartitionDistribution, S: int) -> PartitionDistribution:
    """Law of ``P ⊔ Q`` (labels of ``Q`` shifted by ``S``) for independent ``P ~ rho_S``, ``Q ~ rho_T``."""
    support, probs, errs = [], [], []
    for P, p, ep in zip(rho_S.support, rho_S.probabilities, rho_S.stderr):
        for Q, q, eq in zip(rho_T.support, rho_T.probabilities, rho_T.stderr):
            R = canonical(list(P) + [tuple(i + S for i in c) for c in Q])
            support.append(R)
            probs.append(p * q)
            errs.append(math.hypot(ep * q, eq * p))
    return PartitionDistribution(support, probs, errs, {"union_of": [rho_S.provenance, rho_T.provenance]})


def cluster_size(
    params: SingleSiteParams,
    N: int,
    S: int = 2,
    mode: str = "exact",
    n_samples: int = 20_000,
    seed: int | None = None,
    calibrated: bool = True,
) -> tuple[float, float]:
    """``E|C_v|`` for the cluster of the first source under a current with sources ``S~`` plus a sourceless one."""
    bg = _block_coupling(params, N, calibrated)
    if mode == "exact":
        eng = BlockClusterEngine(bg.gs.d_N, N, S, 0, double=True)
        return float(eng.mean_cluster_size()), 0.0
    if seed is None:
        raise ContractError("worm mode needs a seed")
    track = 0
    _, sizes = sample_source_partitions(
        bg.coupling, list(range(S)), [], list(range(max(S, 1))), n_samples, seed, track=track
    )
    x = sizes.astype(float)
    err = _batch_errors(x[:, None])[0]
    return float(x.mean()), float(err)
