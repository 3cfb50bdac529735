"""Numba kernels for the worm (defect-pair) sampler of Ising currents.

Target on the extended space ``(n, head, tail)``:
``pi ∝ prod_e K_e^{n_e}/n_e! * 1[∂n = S Δ {head, tail}]`` where the parity of
the ghost vertex (if any) is never constrained.  A move picks one of the
``deg(head)`` incident edges uniformly, proposes ``n_e ± 1`` with probability
1/2 each and moves the head across; the Hastings factor ``deg(head)/deg(v)``
compensates the non-uniform proposal.  Closed states (head == tail) may
are first relocated to a uniformly chosen vertex, which keeps the chain
irreducible on every connected graph.  Relocation and the head/tail swap
each leave the target invariant, and the head move is reversible.
"""

from __future__ import annotations

import numba
import numpy as np


def build_csr(n_vertices: int, eu: np.ndarray, ev: np.ndarray):
    """Adjacency in CSR form: offsets, neighbour ids, edge ids."""
    deg = np.zeros(n_vertices, dtype=np.int64)
    for u, v in zip(eu, ev):
        deg[u] += 1
        deg[v] += 1
    offs = np.zeros(n_vertices + 1, dtype=np.int64)
    offs[1:] = np.cumsum(deg)
    nbr = np.empty(offs[-1], dtype=np.int64)
    eid = np.empty(offs[-1], dtype=np.int64)
    fill = offs[:-1].copy()
    for e, (u, v) in enumerate(zip(eu, ev)):
        nbr[fill[u]] = v
        eid[fill[u]] = e
        fill[u] += 1
        nbr[fill[v]] = u
        eid[fill[v]] = e
        fill[v] += 1
    return offs, nbr, eid


@numba.njit(cache=True)
def _step(offs, nbr, eid, K, n, state, nv):
    # state = [head, tail]; one worm update, returns nothing
    head = state[0]
    tail = state[1]
    if head == tail:
        # uniform relocation of a closed worm is itself invariant
        head = np.random.randint(nv)
        tail = head
        state[0] = head
        state[1] = head
    if np.random.random() < 0.5:
        # swap roles so both ends move
        state[0] = tail
        state[1] = head
        head = tail
    d = offs[head + 1] - offs[head]
    if d == 0:
        return
    k = offs[head] + np.random.randint(d)
    v = nbr[k]
    e = eid[k]
    dv = offs[v + 1] - offs[v]
    ratio = d / dv
    if np.random.random() < 0.5:
        acc = K[e] / (n[e] + 1.0) * ratio
        if acc >= 1.0 or np.random.random() < acc:
            n[e] += 1
            state[0] = v
    else:
        if n[e] > 0:
            acc = n[e] / K[e] * ratio
            if acc >= 1.0 or np.random.random() < acc:
                n[e] -= 1
                state[0] = v


@numba.njit(cache=True)
def worm_two_point(offs, nbr, eid, K, n0, nv, steps, n_batches, seed):
    """Closed-state counts and ordered open-pair visit counts per batch."""
    np.random.seed(seed)
    n = n0.copy()
    state = np.zeros(2, dtype=np.int64)
    closed = np.zeros(n_batches, dtype=np.int64)
    opened = np.zeros((n_batches, nv, nv), dtype=np.int64)
    per = steps // n_batches
    # burn-in
    for _ in range(per):
        _step(offs, nbr, eid, K, n, state, nv)
    for b in range(n_batches):
        for _ in range(per):
            _step(offs, nbr, eid, K, n, state, nv)
            if state[0] == state[1]:
                closed[b] += 1
            else:
                opened[b, state[0], state[1]] += 1
    return closed, opened


@numba.njit(cache=True)
def _advance_closed(offs, nbr, eid, K, n, state, nv, thin):
    # every closed visit counts; waiting for the first closure after a
    # fixed delay would bias towards states that close quickly
    count = 0
    while count < thin:
        _step(offs, nbr, eid, K, n, state, nv)
        if state[0] == state[1]:
            count += 1


@numba.njit(cache=True)
def worm_sample_edges(offs, nbr, eid, K, n0, nv, n_samples, thin, burn, seed):
    """Edge values of closed states (``∂n`` equals the initial sources)."""
    np.random.seed(seed)
    n = n0.copy()
    state = np.zeros(2, dtype=np.int64)
    out = np.empty((n_samples, len(K)), dtype=np.int64)
    _advance_closed(offs, nbr, eid, K, n, state, nv, burn)
    for s in range(n_samples):
        _advance_closed(offs, nbr, eid, K, n, state, nv, thin)
        out[s, :] = n
    return out


@numba.njit(cache=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@numba.njit(cache=True)
def worm_partitions(
    offs, nbr, eid, K, K2, eu, ev, edge_mask, init1, init2, use2, points, nv, n_samples, thin, burn, seed, track
):
    """Partition of labelled ``points`` by clusters of ``n1 + n2`` (restricted to ``edge_mask``).

    Returns restricted-growth labels (one row per sample) and the size of the
    cluster containing vertex ``track`` (or -1 when ``track < 0``).  The
    second current uses couplings ``K2`` (zero outside its region).
    """
    np.random.seed(seed)
    n1 = init1.copy()
    n2 = init2.copy()
    s1 = np.zeros(2, dtype=np.int64)
    s2 = np.zeros(2, dtype=np.int64)
    P = len(points)
    labels = np.empty((n_samples, P), dtype=np.int8)
    sizes = np.full(n_samples, -1, dtype=np.int64)
    parent = np.empty(nv, dtype=np.int64)
    roots = np.empty(P, dtype=np.int64)
    _advance_closed(offs, nbr, eid, K, n1, s1, nv, burn)
    if use2:
        _advance_closed(offs, nbr, eid, K2, n2, s2, nv, burn)
    for s in range(n_samples):
        _advance_closed(offs, nbr, eid, K, n1, s1, nv, thin)
        if use2:
            _advance_closed(offs, nbr, eid, K2, n2, s2, nv, thin)
        for v in range(nv):
            parent[v] = v
        for e in range(len(K)):
            if edge_mask[e] and (n1[e] + n2[e]) > 0:
                a = _find(parent, eu[e])
                b = _find(parent, ev[e])
                if a != b:
                    parent[a] = b
        nxt = 0
        for p in range(P):
            r = _find(parent, points[p])
            lab = -1
            for q in range(p):
                if roots[q] == r:
                    lab = labels[s, q]
                    break
            if lab < 0:
                lab = nxt
                nxt += 1
            roots[p] = r
            labels[s, p] = lab
        if track >= 0:
            rt = _find(parent, track)
            c = 0
            for v in range(nv):
                if _find(parent, v) == rt:
                    c += 1
            sizes[s] = c
    return labels, sizes
