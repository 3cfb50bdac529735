"""Single-site measure, moment tables, block-spin constants and graphs.

The single-site law is ``rho_{g,a}(dt) ∝ exp(-g t^4 - a t^2) dt``.  All
moments are computed by adaptive quadrature in log space so that very high
orders (hundreds) stay finite.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import integrate

from .errors import (
    DistanceError,
    DomainError,
    ParameterError,
    RangeError,
)

__all__ = [
    "SingleSiteParams",
    "MomentTable",
    "GSParams",
    "InteractionGraph",
    "ValidationReport",
    "BoundaryProfile",
    "ModelSpec",
    "log_moment_integral",
    "single_site_moment",
    "raw_moment",
    "moment_table",
    "moment_recursion_residual",
    "moment_ratio_bound",
    "moment_ratio_upper",
    "gs_couplings",
    "validate_interaction",
    "graph_distances",
    "boundary_profile",
    "fold_boundary",
]

DEFAULT_QUAD_TOL = 1e-10
DEFAULT_IDENTITY_TOL = 1e-8


# --------------------------------------------------------------------------
# single-site measure
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SingleSiteParams:
    """Quartic and quadratic couplings of the single-site law."""

    g: float
    a: float = 0.0

    def __post_init__(self) -> None:
        g = float(self.g)
        a = float(self.a)
        if not math.isfinite(g) or g <= 0.0:
            raise ParameterError(f"g must be a positive finite real, got {self.g!r}")
        if not math.isfinite(a):
            raise ParameterError(f"a must be finite, got {self.a!r}")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "a", a)


def _log_integrand_peak(params: SingleSiteParams, k: int) -> float:
    # stationary point of k log t - g t^4 - a t^2 on t > 0
    g, a = params.g, params.a
    t2 = (-2.0 * a + math.sqrt(4.0 * a * a + 16.0 * g * k)) / (8.0 * g)
    return math.sqrt(max(t2, 0.0))


def _log_f(params: SingleSiteParams, k: int, t: float) -> float:
    if t == 0.0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(t) - params.g * t**4 - params.a * t * t


def log_moment_integral(params: SingleSiteParams, k: int, tol: float = DEFAULT_QUAD_TOL) -> float:
    """Return ``log ∫_R t^k exp(-g t^4 - a t^2) dt`` for even ``k >= 0``.

    The integrand is rescaled by its maximum before integration, and the
    domain is cut where the integrand has dropped by ``exp(-60)``; beyond
    that point the log-integrand is concave and decreasing, so the discarded
    tail is bounded by ``f(T)/|d log f/dt (T)|``, far below ``tol/10``.
    """
    if k < 0 or k % 2:
        raise DomainError(f"moment order must be a non-negative even integer, got {k}")
    if tol <= 0:
        raise ParameterError("tol must be positive")
    t_peak = _log_integrand_peak(params, k)
    shift = _log_f(params, k, t_peak)
    # walk outward until the integrand is negligible
    width = max(1.0, t_peak) * 0.25 + 0.25
    T = t_peak + width
    while _log_f(params, k, T) - shift > -60.0:
        T += width
        width *= 1.5
    slope = 4 * params.g * T**3 + 2 * params.a * T - k / T
    tail = math.exp(_log_f(params, k, T) - shift) / max(slope, 1e-300)

    def f(t: float) -> float:
        return math.exp(_log_f(params, k, t) - shift) if t > 0 else (1.0 if k == 0 else 0.0) * math.exp(-shift)

    epsrel = max(min(tol / 10.0, 1e-12), 1e-14)
    points = [t_peak] if 0.0 < t_peak < T else None
    val, _err = integrate.quad(f, 0.0, T, points=points, epsabs=0.0, epsrel=epsrel, limit=400)
    return math.log(2.0 * (val + tail)) + shift


def single_site_moment(params: SingleSiteParams, order: int, tol: float = DEFAULT_QUAD_TOL) -> float:
    """``u[order] = <phi^order>_0`` for even ``order``."""
    if order < 0 or order % 2:
        raise DomainError(f"order must be a non-negative even integer, got {order}")
    if order == 0:
        return 1.0
    return math.exp(log_moment_integral(params, order, tol) - log_moment_integral(params, 0, tol))


def raw_moment(params: SingleSiteParams, order: int, tol: float = DEFAULT_QUAD_TOL) -> float:
    """Like :func:`single_site_moment` but odd orders return 0 by symmetry."""
    if order < 0:
        raise DomainError("order must be non-negative")
    if order % 2:
        return 0.0
    return single_site_moment(params, order, tol)


@dataclass(frozen=True)
class MomentTable:
    """Even moments ``u[0], u[2], ..., u[max_order]`` stored as logarithms."""

    params: SingleSiteParams
    log_u: tuple[float, ...]
    tol: float = DEFAULT_QUAD_TOL

    @property
    def max_order(self) -> int:
        return 2 * (len(self.log_u) - 1)

    @classmethod
    def build(cls, params: SingleSiteParams, max_order: int = 64, tol: float = DEFAULT_QUAD_TOL) -> "MomentTable":
        if max_order < 0:
            raise DomainError("max_order must be non-negative")
        max_order += max_order % 2
        z = log_moment_integral(params, 0, tol)
        logs = [0.0] + [log_moment_integral(params, k, tol) - z for k in range(2, max_order + 1, 2)]
        return cls(params, tuple(logs), tol)

    def houses(self, order: int) -> bool:
        return 0 <= order <= self.max_order and order % 2 == 0

    def log_moment(self, order: int) -> float:
        if order % 2:
            raise DomainError(f"odd order {order}")
        if not self.houses(order):
            raise RangeError(f"order {order} not housed (max {self.max_order})")
        return self.log_u[order // 2]

    def u(self, order: int) -> float:
        return math.exp(self.log_moment(order))

    def as_array(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_u))

    def extended(self, max_order: int) -> "MomentTable":
        """Table housing at least ``max_order`` (self if already housed)."""
        if max_order <= self.max_order:
            return self
        return moment_table(self.params, max_order, self.tol)


@lru_cache(maxsize=64)
def _cached_table(g: float, a: float, max_order: int, tol: float) -> MomentTable:
    return MomentTable.build(SingleSiteParams(g, a), max_order, tol)


def moment_table(params: SingleSiteParams, max_order: int = 64, tol: float = DEFAULT_QUAD_TOL) -> MomentTable:
    """Cached table; orders are rounded up to a multiple of 64 for reuse."""
    rounded = max(64, 64 * math.ceil(max_order / 64))
    return _cached_table(params.g, params.a, rounded, tol)


def moment_recursion_residual(table: MomentTable, k: int) -> float:
    """``(2k+1) u[2k] - 2a u[2k+2] - 4g u[2k+4]`` (zero by integration by parts)."""
    if k < 0 or 2 * k + 4 > table.max_order:
        raise RangeError(f"orders {2*k}..{2*k+4} not housed")
    g, a = table.params.g, table.params.a
    u0, u1, u2 = (table.u(2 * k), table.u(2 * k + 2), table.u(2 * k + 4))
    return math.fsum([(2 * k + 1) * u0, -2 * a * u1, -4 * g * u2])


def moment_ratio_bound(params: SingleSiteParams) -> float:
    """A constant ``C`` with ``u[2k]/u[2k+2] <= C`` for every ``k``.

    Splitting the integrals at ``|t| = 1`` gives ``C = 3 M/m + 1`` where ``M``
    and ``m`` are the max and min of ``exp(-g s^4 - a s^2)`` on ``[-1, 1]``.
    """
    g, a = params.g, params.a
    cands = [0.0, 1.0]
    s2 = -a / (2 * g)
    if 0.0 < s2 < 1.0:
        cands.append(math.sqrt(s2))
    vals = [-g * s**4 - a * s * s for s in cands]
    return 3.0 * math.exp(max(vals) - min(vals)) + 1.0


def moment_ratio_upper(params: SingleSiteParams, k: int) -> float:
    """Upper bound on ``u[2k+2]/u[2k]`` valid for every order up to ``2k``.

    Log-convexity makes the ratio nondecreasing in ``k``; combined with the
    integration-by-parts recursion it gives ``4g r^2 + 2a r <= 2k+1``.
    """
    g, a = params.g, params.a
    return (-2 * a + math.sqrt(4 * a * a + 16 * g * (2 * k + 1))) / (8 * g)


# --------------------------------------------------------------------------
# block-spin constants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GSParams:
    N: int
    g_tilde: float
    a_tilde: float
    c_N: float
    d_N: float
    calibrated: bool = False


def gs_couplings(params: SingleSiteParams, N: int, calibrated: bool = False) -> GSParams:
    """Block-spin coupling constants.

    With ``calibrated=False`` the constants are ``g~ = (12/g)^{1/4}``,
    ``a~ = a g~^2``, ``c_N = g~ N^{-3/4}``, ``d_N = (1 - a~/sqrt N)/N``.
    Those values make the block spin converge to ``rho_{g/144, a/2}`` when the
    internal coupling is counted once per unordered pair.  ``calibrated=True``
    applies the same formulas to ``(144 g, 2 a)`` so the limit is
    ``rho_{g, a}``.
    """
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N!r}")
    g, a = (144.0 * params.g, 2.0 * params.a) if calibrated else (params.g, params.a)
    g_tilde = (12.0 / g) ** 0.25
    a_tilde = a * g_tilde**2
    c_N = g_tilde * N ** (-0.75)
    d_N = (1.0 / N) * (1.0 - a_tilde / math.sqrt(N))
    return GSParams(int(N), g_tilde, a_tilde, c_N, d_N, calibrated)


# --------------------------------------------------------------------------
# graphs
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """Finite weighted graph with interaction matrix ``J`` (unordered pairs)."""

    J: np.ndarray
    labels: tuple = ()

    def __post_init__(self) -> None:
        J = np.array(self.J, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise DomainError("J must be a square matrix")
        J.setflags(write=False)
        object.__setattr__(self, "J", J)
        labels = tuple(self.labels) if self.labels else tuple(range(J.shape[0]))
        if len(labels) != J.shape[0]:
            raise DomainError("label count does not match J")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence], labels: Sequence = ()) -> "InteractionGraph":
        J = np.zeros((n, n))
        for i, j, w in edges:
            i, j = int(i), int(j)
            J[i, j] = J[j, i] = float(w)
        return cls(J, tuple(labels))

    @classmethod
    def complete(cls, n: int, J: float = 1.0) -> "InteractionGraph":
        M = np.full((n, n), float(J))
        np.fill_diagonal(M, 0.0)
        return cls(M)

    @classmethod
    def path(cls, n: int, J: float = 1.0) -> "InteractionGraph":
        return cls.from_edges(n, [(i, i + 1, J) for i in range(n - 1)])

    def edges(self) -> list[tuple[int, int, float]]:
        """Positive-coupling unordered pairs ``(i, j, J_ij)`` with ``i < j``."""
        iu, ju = np.triu_indices(self.n, 1)
        return [(int(i), int(j), float(self.J[i, j])) for i, j in zip(iu, ju) if self.J[i, j] > 0]

    def subgraph(self, keep: Sequence[int]) -> "InteractionGraph":
        keep = list(keep)
        return InteractionGraph(self.J[np.ix_(keep, keep)], tuple(self.labels[i] for i in keep))

    def neighbours(self, i: int) -> list[int]:
        return [int(j) for j in np.nonzero(self.J[i] > 0)[0]]


@dataclass(frozen=True)
class ValidationReport:
    symmetric: bool
    ferromagnetic: bool
    zero_diagonal: bool
    irreducible: bool
    components: tuple[tuple[int, ...], ...]
    negative_pairs: tuple[tuple[int, int], ...]
    c2: str = "not applicable"
    c4: str = "not applicable"

    @property
    def valid(self) -> bool:
        return self.symmetric and self.ferromagnetic and self.zero_diagonal and self.irreducible

    @property
    def violations(self) -> list[str]:
        out = []
        if not self.symmetric:
            out.append("asymmetric")
        if not self.ferromagnetic:
            out.append("C1")
        if not self.zero_diagonal:
            out.append("diagonal")
        if not self.irreducible:
            out.append("C3")
        return out


def _components(adj: np.ndarray) -> list[tuple[int, ...]]:
    n = adj.shape[0]
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        stack, comp = [s], []
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in np.nonzero(adj[v])[0]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(int(w))
        comps.append(tuple(sorted(comp)))
    return comps


def validate_interaction(graph: InteractionGraph) -> ValidationReport:
    """Report symmetry, ferromagnetism (C1), zero diagonal and irreducibility (C3)."""
    J = graph.J
    symmetric = bool(np.array_equal(J, J.T))
    neg = tuple((int(i), int(j)) for i, j in zip(*np.nonzero(J < 0)) if i <= j or not symmetric)
    zero_diag = bool(np.all(np.diag(J) == 0))
    comps = _components((J > 0) | (J.T > 0))
    return ValidationReport(
        symmetric=symmetric,
        ferromagnetic=not neg,
        zero_diagonal=zero_diag,
        irreducible=len(comps) <= 1,
        components=tuple(comps),
        negative_pairs=neg,
    )


def graph_distances(graph: InteractionGraph, origin: int) -> np.ndarray:
    """Breadth-first graph distances on the positive-coupling support (-1 if unreachable)."""
    dist = np.full(graph.n, -1, dtype=np.int64)
    dist[origin] = 0
    q = deque([origin])
    while q:
        v = q.popleft()
        for w in graph.neighbours(v):
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                q.append(w)
    return dist


@dataclass(frozen=True)
class BoundaryProfile:
    M: float
    origin: int
    values: tuple[float, ...]


def boundary_profile(M: float, graph: InteractionGraph, origin: int = 0) -> BoundaryProfile:
    """``p_x = (M log(max(d(o, x), 1)))^{1/4}``."""
    if not (M > 0):
        raise ParameterError("M must be positive")
    dist = graph_distances(graph, origin)
    if np.any(dist < 0):
        raise DistanceError("graph is disconnected; distances from the origin are undefined")
    vals = tuple(float((M * math.log(max(int(d), 1))) ** 0.25) for d in dist)
    return BoundaryProfile(float(M), int(origin), vals)


def fold_boundary(
    graph: InteractionGraph, h: np.ndarray, eta: Mapping[int, float]
) -> tuple[InteractionGraph, np.ndarray, list[int]]:
    """Freeze the vertices in ``eta`` and absorb them into the field.

    Returns the induced graph on the remaining vertices, the field
    ``h_x + sum_y J_xy eta_y`` there, and the kept vertex indices.
    """
    h = np.broadcast_to(np.asarray(h, dtype=float), (graph.n,))
    keep = [i for i in range(graph.n) if i not in eta]
    ext = sorted(eta)
    h_new = h[keep].copy()
    if ext:
        eta_vec = np.array([float(eta[y]) for y in ext])
        h_new = h_new + graph.J[np.ix_(keep, ext)] @ eta_vec
    return graph.subgraph(keep), h_new, keep


# --------------------------------------------------------------------------
# model specification (CLI input)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModelSpec:
    graph: InteractionGraph
    params: SingleSiteParams
    beta: float
    h: np.ndarray
    boundary: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        def num(key, default=None):
            if key not in d:
                if default is None:
                    raise ParameterError(f"missing field '{key}'")
                return default
            try:
                return float(d[key])
            except (TypeError, ValueError):
                raise ParameterError(f"field '{key}' must be a number") from None

        g = num("g")
        if g <= 0:
            raise ParameterError(f"field 'g' must be positive, got {g}")
        a = num("a", 0.0)
        beta = num("beta", 1.0)
        if beta < 0:
            raise ParameterError(f"field 'beta' must be non-negative, got {beta}")
        verts = d.get("vertices", 0)
        n = len(verts) if isinstance(verts, list) else int(verts)
        labels = tuple(verts) if isinstance(verts, list) else ()
        try:
            graph = InteractionGraph.from_edges(n, d.get("edges", []), labels)
        except (IndexError, ValueError, TypeError):
            raise ParameterError("field 'edges' must be a list of [i, j, J_ij] with valid indices") from None
        h_raw = d.get("h", 0.0)
        try:
            h = np.broadcast_to(np.asarray(h_raw, dtype=float), (n,)).copy()
        except ValueError:
            raise ParameterError("field 'h' must be a scalar or per-vertex array") from None
        boundary = dict(d.get("boundary", {}) or {})
        extra = {k: v for k, v in d.items() if k not in {"g", "a", "beta", "h", "vertices", "edges", "boundary"}}
        return cls(graph, SingleSiteParams(g, a), beta, h, boundary, extra)

    @classmethod
    def from_json(cls, path) -> "ModelSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def eta(self) -> dict[int, float]:
        """Boundary values on exterior vertices (empty when no boundary)."""
        b = self.boundary
        if not b:
            return {}
        if "values" in b:
            return {int(k): float(v) for k, v in b["values"].items()}
        if "profile_M" in b:
            prof = boundary_profile(float(b["profile_M"]), self.graph, int(b.get("origin", 0)))
            ext = b.get("exterior")
            if ext is None:
                raise ParameterError("boundary 'profile_M' needs an 'exterior' vertex list")
            return {int(x): prof.values[int(x)] for x in ext}
        raise ParameterError("boundary must contain 'values' or 'profile_M'")
