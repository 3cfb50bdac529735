"""Independent oracles for the frozen golden values in ``tests/golden.json``.

Nothing here imports ``tangled_phi4``: every number comes from closed forms,
brute-force enumeration or high-precision quadrature written from scratch.
Run ``python3 tests/oracles/build_golden.py`` to regenerate (it overwrites the
golden file, so review the diff before committing).
"""

from __future__ import annotations

import itertools
import json
import math
from pathlib import Path

import mpmath as mp
import numpy as np
from sympy.utilities.iterables import multiset_partitions

mp.mp.dps = 40
OUT = Path(__file__).resolve().parent.parent / "golden.json"


# ---------------------------------------------------------------- single site

def moment(g, a, k):
    f = lambda t: t**k * mp.exp(-g * t**4 - a * t**2)  # noqa: E731
    z = mp.quad(lambda t: mp.exp(-g * t**4 - a * t**2), [-mp.inf, 0, mp.inf])
    return mp.quad(f, [-mp.inf, 0, mp.inf]) / z


def single_site():
    return {
        "u2_g1_a0_gamma": float(mp.gamma(0.75) / mp.gamma(0.25)),
        "u4_g1_a0": float(mp.gamma(1.25) / mp.gamma(0.25)),
        "u2_g12_a0": float(moment(12, 0, 2)),
        "u2_g1_am1": float(moment(1, -1, 2)),
        "u2_g2_a1": float(moment(2, 1, 2)),
        "u6_g05_a15": float(moment(0.5, 1.5, 6)),
    }


# ---------------------------------------------------------- two-site phi^4

def two_vertex(g, a, bJ, h=0.0):
    """``<phi_x phi_y>`` on one edge by a tensor-product Gauss-Legendre rule."""
    T = 6.0
    xs, ws = np.polynomial.legendre.leggauss(400)
    t = xs * T
    w = ws * T
    base = np.exp(-g * t**4 - a * t**2 + h * t)
    W = np.outer(base * w, base * w) * np.exp(bJ * np.outer(t, t))
    z = W.sum()
    return {
        "xy": float((W * np.outer(t, t)).sum() / z),
        "xxyy": float((W * np.outer(t**2, t**2)).sum() / z),
    }


def current_series(g, a, bJ):
    """The same correlation as a sum over the edge current ``n``."""
    u = [moment(g, a, k) for k in range(0, 64)]
    num = mp.fsum(mp.mpf(bJ) ** n / mp.factorial(n) * u[n + 1] ** 2 for n in range(1, 61, 2))
    den = mp.fsum(mp.mpf(bJ) ** n / mp.factorial(n) * u[n] ** 2 for n in range(0, 61, 2))
    return float(num / den)


# ----------------------------------------------------- block-spin Ising sums

def gs_constants(g, a, N, calibrated):
    if calibrated:
        g, a = 144 * g, 2 * a
    gt = (12 / g) ** 0.25
    return gt * N ** -0.75, (1 - a * gt**2 / math.sqrt(N)) / N


def block_ising_two_blocks(g, a, beta, J, N, calibrated=True):
    """Ratio <s_x0 s_y0><s_x1 s_y1>/<s_x0 s_x1 s_y0 s_y1> on two blocks of N spins."""
    c, d = gs_constants(g, a, N, calibrated)
    n = 2 * N
    idx = np.arange(1 << n)
    s = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    mx = s[:, :N].sum(1)
    my = s[:, N:].sum(1)
    E = d * (mx**2 - N) / 2 + d * (my**2 - N) / 2 + beta * J * c * c * mx * my
    w = np.exp(E - E.max())
    Z = w.sum()
    e = lambda cols: float((w * np.prod(s[:, cols], axis=1)).sum() / Z)  # noqa: E731
    return e([0, N]) * e([0, N]) / e([0, 1, N, N + 1]), e([0, N])


def block_four_states():
    c, d = gs_constants(12, 0, 2, calibrated=False)
    num = sum(s1 * s2 * math.exp(d * s1 * s2) for s1 in (-1, 1) for s2 in (-1, 1))
    den = sum(math.exp(d * s1 * s2) for s1 in (-1, 1) for s2 in (-1, 1))
    return {"corr": num / den, "block_moment_p2": (2 * c) ** 2 * num / den}


# ------------------------------------------------------ even set partitions

def even_partition_counts(max_size=8):
    out = {}
    for n in range(0, max_size + 1, 2):
        if n == 0:
            out[n] = 1
            continue
        out[n] = sum(1 for P in multiset_partitions(list(range(n))) if all(len(b) % 2 == 0 for b in P))
    return out


def admissible_counts():
    out = {}
    for S, T in ((2, 2), (4, 2), (2, 4)):
        n = S + T
        k = 0
        for P in multiset_partitions(list(range(n))):
            if all(len(b) % 2 == 0 and sum(1 for i in b if i < S) % 2 == 0 for b in P):
                k += 1
        out[f"{S},{T}"] = k
    return out


# ------------------------------------------------- tangling measure on K_N

def tangling_bruteforce(K, n, S, T):
    """Partition law of the S+T source points under two independent currents on K_n.

    Each edge carries a pair of parities; its weight is the parity-restricted
    series ``cosh``/``sinh`` per current, with ``(even, even)`` split into the
    empty edge and the open remainder so that the support is known.
    """
    E = [(i, j) for i in range(n) for j in range(i + 1, n)]
    ch, sh = math.cosh(K), math.sinh(K)
    states = [(None, 1.0), ((0, 0), ch * ch - 1), ((1, 0), sh * ch), ((0, 1), ch * sh), ((1, 1), sh * sh)]
    src1, src2 = set(range(S)), set(range(S, S + T))
    out, tot = {}, 0.0
    for conf in itertools.product(range(5), repeat=len(E)):
        d1, d2, w = [0] * n, [0] * n, 1.0
        par = list(range(n))

        def find(x):
            while par[x] != x:
                x = par[x]
            return x

        for (u, v), k in zip(E, conf):
            p, wt = states[k]
            w *= wt
            if p is None:
                continue
            d1[u] ^= p[0]
            d1[v] ^= p[0]
            d2[u] ^= p[1]
            d2[v] ^= p[1]
            ru, rv = find(u), find(v)
            if ru != rv:
                par[ru] = rv
        if any(d1[v] != (v in src1) or d2[v] != (v in src2) for v in range(n)):
            continue
        roots = {}
        for i in range(S + T):
            roots.setdefault(find(i), []).append(i)
        key = json.dumps(sorted(roots.values()))
        out[key] = out.get(key, 0.0) + w
        tot += w
    return {k: v / tot for k, v in sorted(out.items())}


# ------------------------------------------------------------- green's fn

def watson_g000():
    """Simple cubic lattice return constant in Gamma-function closed form."""
    v = mp.sqrt(6) / (32 * mp.pi**3) * mp.gamma(mp.mpf(1) / 24) * mp.gamma(mp.mpf(5) / 24) \
        * mp.gamma(mp.mpf(7) / 24) * mp.gamma(mp.mpf(11) / 24)
    return float(v)


def green_torus_direct(d, L):
    """``G_L(0)`` by a plain momentum loop (zero mode dropped)."""
    k = 2 * np.pi * np.arange(L) / L
    grids = np.meshgrid(*([k] * d), indexing="ij")
    D = sum(np.cos(g) for g in grids) / d
    D.flat[0] = 0.0
    inv = 1.0 / (1.0 - D)
    inv.flat[0] = 0.0
    return float(inv.sum() / L**d)


def triangle_parity_sum(K):
    tot = 0.0
    for bits in itertools.product((0, 1), repeat=3):
        if (bits[0] + bits[2]) % 2 or (bits[0] + bits[1]) % 2 or (bits[1] + bits[2]) % 2:
            continue
        tot += math.prod(math.sinh(K) if b else math.cosh(K) for b in bits)
    return tot


def main():
    gold = {"single_site": single_site()}
    gold["two_vertex_g1_a0_bJ05"] = two_vertex(1.0, 0.0, 0.5)
    gold["two_vertex_g1_a0_bJ05"]["xy_series"] = current_series(1.0, 0.0, 0.5)
    tv = gold["two_vertex_g1_a0_bJ05"]
    gold["switching_phi4_ratio"] = tv["xy"] ** 2 / tv["xxyy"]
    r8, c8 = block_ising_two_blocks(1.0, 0.0, 0.5, 1.0, 8)
    gold["switching_block_ratio_N8"] = r8
    gold["block_corr_N8"] = c8
    gold["gs_four_states"] = block_four_states()
    gold["even_partition_counts"] = {str(k): v for k, v in even_partition_counts().items()}
    gold["admissible_counts"] = admissible_counts()
    gold["tangling"] = {
        f"{n},{S},{T},{K}": tangling_bruteforce(K, n, S, T) for n, S, T, K in ((4, 2, 2, 0.4), (5, 2, 2, 0.3), (5, 4, 0, 0.5))
    }
    gold["green_g000_watson"] = watson_g000()
    gold["green_torus_L16_d3"] = green_torus_direct(3, 16)
    gold["boundary_profile_log3"] = math.log(3) ** 0.25
    gold["triangle_parity_K07"] = triangle_parity_sum(0.7)
    OUT.write_text(json.dumps(gold, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
