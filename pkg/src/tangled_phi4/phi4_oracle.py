"""Reference values for phi^4 correlations on tiny graphs.

Two independent routes:

* ``correlate_quadrature``: tensor-product Gauss-Legendre quadrature on up to
  four vertices, contracted with explicit matrix products; accuracy is controlled by
  refining the rule until successive results agree.
* ``correlate_mc``: plain single-site Metropolis.

The measure is ``exp(-sum_x (g phi_x^4 + a phi_x^2) + beta sum_{x<y} J_xy phi_x phi_y
+ beta sum_x h_x phi_x)``, each unordered pair counted once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numba
import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import CapacityError, ContractError, ParameterError
from .model_core import InteractionGraph, SingleSiteParams, fold_boundary

__all__ = [
    "CorrelationRequest",
    "EstimateWithError",
    "MonotoneFunction",
    "Coordinate",
    "Clamp",
    "HalfSpace",
    "Constant",
    "FKGEstimate",
    "correlate_quadrature",
    "expect_local_quadrature",
    "correlate_mc",
    "sample_phi4",
    "fkg_pair_estimate",
    "fkg_covariance_quadrature",
    "batch_means",
]

MAX_QUAD_VERTICES = 4


@dataclass(frozen=True, eq=False)
class CorrelationRequest:
    graph: InteractionGraph
    params: SingleSiteParams
    beta: float
    h: np.ndarray | float = 0.0
    A: Sequence[int] | None = None
    boundary: Mapping[int, float] = field(default_factory=dict)

    def resolved(self) -> tuple[InteractionGraph, np.ndarray, np.ndarray]:
        """Graph, field and moment after folding boundary values into ``h``."""
        if self.beta < 0:
            raise ParameterError("beta must be non-negative")
        A = np.zeros(self.graph.n, dtype=np.int64) if self.A is None else np.asarray(
            getattr(self.A, "counts", self.A), dtype=np.int64
        )
        if A.shape != (self.graph.n,):
            raise ContractError("moment must have one entry per vertex")
        if np.any(A < 0):
            raise ContractError("moment entries must be non-negative")
        g, h, keep = fold_boundary(self.graph, self.h, dict(self.boundary))
        if any(A[i] for i in self.boundary):
            raise ContractError("moment is supported on a boundary vertex")
        return g, h, A[keep]


@dataclass(frozen=True)
class EstimateWithError:
    value: float
    stderr: float
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "n_samples": self.n_samples, "seed": self.seed}


def batch_means(x: np.ndarray, n_batches: int = 32) -> tuple[float, float]:
    """Mean and batch-means standard error of a 1-D series."""
    x = np.asarray(x, dtype=float)
    m = len(x) // n_batches
    if m < 1:
        return float(np.mean(x)), float("inf")
    b = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(np.mean(x)), float(np.std(b, ddof=1) / math.sqrt(n_batches))


# --------------------------------------------------------------------------
# monotone local functions (closed, tagged family)
# --------------------------------------------------------------------------


class MonotoneFunction:
    """Nondecreasing function of a single coordinate ``phi_vertex``."""

    vertex: int | None = None

    def __call__(self, t):
        raise NotImplementedError

    def kinks(self) -> tuple[float, ...]:
        return ()


@dataclass(frozen=True)
class Coordinate(MonotoneFunction):
    vertex: int

    def __call__(self, t):
        return np.asarray(t, dtype=float)


@dataclass(frozen=True)
class Clamp(MonotoneFunction):
    vertex: int
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ContractError("clamp needs lo <= hi")

    def __call__(self, t):
        return np.clip(np.asarray(t, dtype=float), self.lo, self.hi)

    def kinks(self):
        return (self.lo, self.hi)


@dataclass(frozen=True)
class HalfSpace(MonotoneFunction):
    vertex: int
    c: float = 0.0

    def __call__(self, t):
        return (np.asarray(t, dtype=float) >= self.c).astype(float)

    def kinks(self):
        return (self.c,)


@dataclass(frozen=True)
class Constant(MonotoneFunction):
    c: float = 1.0
    vertex: None = None

    def __call__(self, t):
        return np.full(np.shape(t), self.c, dtype=float)


def _check_monotone(f) -> MonotoneFunction:
    if not isinstance(f, (Coordinate, Clamp, HalfSpace, Constant)):
        raise ContractError(f"{f!r} is not a tagged member of the monotone family")
    return f


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------


def _domain_half_width(params: SingleSiteParams, beta: float, J: np.ndarray, h: np.ndarray) -> float:
    n = len(h)
    jsum = float(np.max(J.sum(axis=1))) if n else 0.0
    hmax = float(np.max(np.abs(h))) if n else 0.0
    # crude bound on the peak of the joint exponent along the diagonal
    ts = np.linspace(0.0, 20.0, 4001)
    diag = n * (-params.g * ts**4 - params.a * ts**2) + beta * 0.5 * J.sum() * ts**2 + beta * np.abs(h).sum() * ts
    peak = max(0.0, float(diag.max()))
    T = 1.0
    while params.g * T**4 + params.a * T * T - beta * jsum * T * T - beta * hmax * T < peak + 50.0:
        T *= 1.1
    return T


def _nodes(T: float, m: int, breaks: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xg, wg = leggauss(m)
    pts = sorted({-T, 0.0, T, *[b for b in breaks if -T < b < T]})
    xs, ws = [], []
    for lo, hi in zip(pts[:-1], pts[1:]):
        xs.append(0.5 * (hi - lo) * xg + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * wg)
    return np.concatenate(xs), np.concatenate(ws)


def _clique_sum(w: list[np.ndarray], M: dict) -> float:
    """``sum_{i_1..i_n} prod_x w_x[i_x] prod_{x<y} M[x,y][i_x, i_y]`` for n <= 4.

    Missing pairs count as all-ones matrices.  Written out with matrix
    products because generic einsum paths do not hit BLAS here.
    """
    n = len(w)

    def mat(x, y):
        if (x, y) in M:
            return M[(x, y)]
        return np.ones((len(w[x]), len(w[y])))

    if n == 1:
        return float(w[0].sum())
    if n == 2:
        return float(w[0] @ mat(0, 1) @ w[1])
    if n == 3:
        X = mat(0, 1) * w[1][None, :]
        Y = mat(0, 2) * w[2][None, :]
        return float(w[0] @ ((X @ mat(1, 2)) * Y).sum(axis=1))
    A = mat(0, 1) * w[0][:, None] * w[1][None, :]
    B = mat(1, 2) * w[2][None, :]
    M13, M14, M24, M34 = mat(0, 2), mat(0, 3), mat(1, 3), mat(2, 3)
    terms = []
    for a in range(len(w[0])):
        Y = (M24 * (w[3] * M14[a])[None, :]) @ M34.T
        terms.append(float(np.sum(A[a][:, None] * (B * M13[a][None, :]) * Y)))
    return math.fsum(terms)


def _contract(params, beta, J, h, funcs, m, T) -> tuple[float, float]:
    """Return (numerator, denominator) with a common scale."""
    n = len(h)
    node_sets, base = [], []
    for x in range(n):
        breaks = [k for f in funcs[x] for k in f.kinks()] if funcs[x] else []
        t, w = _nodes(T, m, breaks)
        node_sets.append(t)
        logw = -params.g * t**4 - params.a * t**2 + beta * h[x] * t
        logw -= logw.max()
        base.append(w * np.exp(logw))
    M = {}
    for x in range(n):
        for y in range(x + 1, n):
            if J[x, y] != 0.0 and beta != 0.0:
                E = beta * J[x, y] * np.outer(node_sets[x], node_sets[y])
                M[(x, y)] = np.exp(E - E.max())
    den = _clique_sum(base, M)
    weighted = []
    for x in range(n):
        fx = np.ones_like(node_sets[x])
        for f in funcs[x]:
            fx = fx * f(node_sets[x])
        weighted.append(base[x] * fx)
    return _clique_sum(weighted, M), den


class _Power(MonotoneFunction):
    # t -> t^k; only used internally for moments (not monotone for even k)
    def __init__(self, k: int):
        self.k = k

    def __call__(self, t):
        return np.asarray(t, dtype=float) ** self.k


def expect_local_quadrature(
    graph: InteractionGraph,
    params: SingleSiteParams,
    beta: float,
    h,
    funcs: Mapping[int, Sequence],
    tol: float = 1e-10,
) -> float:
    """``<prod_x prod_{f in funcs[x]} f(phi_x)>`` by refined tensor quadrature."""
    n = graph.n
    if n > MAX_QUAD_VERTICES:
        raise CapacityError(f"tensor quadrature supports at most {MAX_QUAD_VERTICES} vertices, got {n}")
    if beta < 0:
        raise ParameterError("beta must be non-negative")
    if n == 0:
        return 1.0
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,)).copy()
    per = [list(funcs.get(x, ())) for x in range(n)]
    T = _domain_half_width(params, beta, graph.J, h)
    prev = None
    for m in (16, 24, 32, 40, 48, 56, 64, 80, 96, 128):
        num, den = _contract(params, beta, graph.J, h, per, m, T)
        val = num / den
        if prev is not None and abs(val - prev) <= tol * abs(val):
            return val
        if prev is not None and abs(val) < 1e-14 and abs(prev) < 1e-14:
            return val
        prev = val
    return val


def correlate_quadrature(req: CorrelationRequest, tol: float = 1e-10) -> float:
    """``<phi_A>`` by tensor-product quadrature (at most four vertices)."""
    graph, h, A = req.resolved()
    if graph.n > MAX_QUAD_VERTICES:
        raise CapacityError(f"tensor quadrature supports at most {MAX_QUAD_VERTICES} vertices, got {graph.n}")
    if req.beta == 0.0 and np.all(h == 0) and int(A.sum()) % 2:
        return 0.0
    funcs = {x: [_Power(int(A[x]))] for x in range(graph.n) if A[x]}
    return expect_local_quadrature(graph, req.params, req.beta, h, funcs, tol)


# --------------------------------------------------------------------------
# Metropolis
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _metropolis(J, h, g, a, beta, sweeps, warm, seed, step):
    np.random.seed(seed)
    n = J.shape[0]
    phi = np.zeros(n)
    out = np.empty((sweeps - warm, n))
    acc = 0
    tried = 0
    for s in range(sweeps):
        for x in range(n):
            old = phi[x]
            new = old + step * (2.0 * np.random.random() - 1.0)
            loc = h[x]
            for y in range(n):
                loc += J[x, y] * phi[y]
            dS = g * (new**4 - old**4) + a * (new * new - old * old) - beta * (new - old) * loc
            tried += 1
            if dS <= 0.0 or np.random.random() < math.exp(-dS):
                phi[x] = new
                acc += 1
        if s < warm:
            if (s + 1) % 50 == 0:
                rate = acc / tried
                if rate < 0.3:
                    step *= 0.8
                elif rate > 0.6:
                    step *= 1.25
                acc = 0
                tried = 0
        else:
            out[s - warm, :] = phi
    return out


def sample_phi4(req: CorrelationRequest, sweeps: int, seed: int) -> np.ndarray:
    """Post-warm-up field samples, one row per sweep (20% warm-up discarded)."""
    if seed is None:
        raise ContractError("a seed is required")
    if sweeps < 1000:
        raise ParameterError("sweeps must be at least 1000")
    graph, h, _ = req.resolved()
    J = np.array(graph.J, dtype=float)
    np.fill_diagonal(J, 0.0)
    warm = sweeps // 5
    return _metropolis(J, h.astype(float), req.params.g, req.params.a, float(req.beta), int(sweeps), warm, int(seed) % (2**32), 1.0)


def correlate_mc(req: CorrelationRequest, sweeps: int, seed: int) -> EstimateWithError:
    """Metropolis estimate of ``<phi_A>`` with a 32-batch error bar."""
    phi = sample_phi4(req, sweeps, seed)
    _, _, A = req.resolved()
    obs = np.prod(phi ** A[None, :], axis=1)
    v, e = batch_means(obs)
    return EstimateWithError(v, e, len(obs), int(seed))


@dataclass(frozen=True)
class FKGEstimate:
    fg: EstimateWithError
    f: EstimateWithError
    g: EstimateWithError
    covariance: EstimateWithError


def _eval_family(f: MonotoneFunction, phi: np.ndarray) -> np.ndarray:
    if isinstance(f, Constant):
        return np.full(phi.shape[0], f.c)
    return f(phi[:, f.vertex])


def fkg_pair_estimate(req: CorrelationRequest, f, g, sweeps: int, seed: int, n_blocks: int = 32) -> FKGEstimate:
    """Joint estimates of ``<fg>``, ``<f>``, ``<g>`` and the covariance (jackknife)."""
    f = _check_monotone(f)
    g = _check_monotone(g)
    phi = sample_phi4(req, sweeps, seed)
    fv = _eval_family(f, phi)
    gv = _eval_family(g, phi)
    m = len(fv) // n_blocks
    fb = fv[: m * n_blocks].reshape(n_blocks, m).mean(1)
    gb = gv[: m * n_blocks].reshape(n_blocks, m).mean(1)
    fgb = (fv * gv)[: m * n_blocks].reshape(n_blocks, m).mean(1)
    cov_full = fgb.mean() - fb.mean() * gb.mean()
    jk = []
    for i in range(n_blocks):
        mask = np.arange(n_blocks) != i
        jk.append(fgb[mask].mean() - fb[mask].mean() * gb[mask].mean())
    jk = np.array(jk)
    cov_err = math.sqrt((n_blocks - 1) / n_blocks * np.sum((jk - jk.mean()) ** 2))
    n = len(fv)
    s = int(seed)

    def est(x):
        v, e = batch_means(x, n_blocks)
        return EstimateWithError(v, e, n, s)

    return FKGEstimate(est(fv * gv), est(fv), est(gv), EstimateWithError(float(cov_full), cov_err, n, s))


def fkg_covariance_quadrature(
    graph: InteractionGraph, params: SingleSiteParams, beta: float, h, f, g, tol: float = 1e-11
) -> tuple[float, float, float]:
    """``(<fg>, <f>, <g>)`` for two monotone family members by quadrature.

    Panel breakpoints are placed at the kinks of ``f`` and ``g`` so that
    clamps and half-spaces integrate to full accuracy.
    """
    f = _check_monotone(f)
    g = _check_monotone(g)

    def funcs(*fs):
        out: dict[int, list] = {}
        scale = 1.0
        for fn in fs:
            if isinstance(fn, Constant):
                scale *= fn.c
            else:
                out.setdefault(fn.vertex, []).append(fn)
        return out, scale

    vals = []
    for group in ((f, g), (f,), (g,)):
        fd, sc = funcs(*group)
        vals.append(sc * expect_local_quadrature(graph, params, beta, h, fd, tol) if fd else sc)
    return vals[0], vals[1], vals[2]
