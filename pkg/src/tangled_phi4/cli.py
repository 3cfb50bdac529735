"""Command-line front end: ``moments``, ``verify`` and ``scan``.

Exit codes: 0 success, 1 a check failed, 2 usage or config error, 3 capacity
exceeded.  Output is deterministic given ``--seed``; wall-clock times are
only written with ``--timing``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from importlib import resources

import numpy as np

from .errors import CapacityError, Phi4Error
from .model_core import ModelSpec, moment_table
from .spectral_irb import (
    SCAN_COLUMNS,
    NearestNeighbour,
    TorusPhi4,
    TorusSpec,
    binder_crossing,
    cesaro_green,
    green_torus,
    irb_check,
    magnetisation_scan,
)
from .verifiers import (
    _report,
    cluster_size_stats,
    inequality_suite,
    inputs_digest,
    ising_switching_suite,
    partition_positivity_stats,
    pairing_and_merging_stats,
    run_manifest,
    verify_domination,
    verify_fkg,
    verify_griffiths2,
    verify_switching_ratio,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3
SUITES = ("switching", "inequalities", "tangling", "irb")
WORKERS_ENV = "TANGLED_PHI4_WORKERS"

BUDGETS = {
    "tiny": {"instances": 5, "graphs": 10, "worm": 300, "worm_N": 8, "tangle": 2_000, "sweeps": 2_000},
    "small": {"instances": 25, "graphs": 12, "worm": 20_000, "worm_N": 8, "tangle": 10_000, "sweeps": 10_000},
    "full": {"instances": 100, "graphs": 20, "worm": 50_000, "worm_N": 32, "tangle": 100_000, "sweeps": 20_000},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def bundled_config_path() -> str:
    return str(resources.files("tangled_phi4") / "data" / "two_vertex.json")


def _load(path: str | None) -> tuple[ModelSpec, str]:
    path = path or bundled_config_path()
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return ModelSpec.from_dict(data), inputs_digest(data)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=True) + "\n"


def _write_atomic(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _strip_out(argv: list[str]) -> list[str]:
    # the destination path does not affect results, so reruns elsewhere stay identical
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok == "--out":
            skip = True
        elif not tok.startswith("--out="):
            out.append(tok)
    return out


def _job_seed(master: int, idx: int) -> int:
    return int(np.random.SeedSequence([master, idx]).generate_state(1)[0])


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


# --------------------------------------------------------------------------
# jobs: module-level so they pickle for the process pool
# --------------------------------------------------------------------------


def _job_micrographs(spec, budget, seed):
    return ising_switching_suite(budget["graphs"], seed)


def _config_moments(spec):
    n = spec.graph.n
    A = tuple(1 for _ in range(n)) if n % 2 == 0 else (2,) + (0,) * (n - 1)
    A = tuple(spec.extra.get("A", A))
    B = tuple(spec.extra.get("B", A))
    return A, B


def _job_ising_ratio(spec, budget, seed):
    A, B = _config_moments(spec)
    return [verify_switching_ratio(spec.graph, spec.params, spec.beta, spec.h, A, B, N=budget["worm_N"],
                                   mode="worm", n_samples=budget["worm"], seed=seed, reference="ising")]


def _job_phi4_ratio(spec, budget, seed):
    A, B = _config_moments(spec)
    return [verify_switching_ratio(spec.graph, spec.params, spec.beta, spec.h, A, B, N=32, mode="worm",
                                   n_samples=budget["worm"], seed=seed)]


def _job_inequalities(spec, budget, seed):
    res = inequality_suite(budget["instances"], seed)
    out = [r for key in sorted(res) for r in res[key]]
    if spec.graph.n <= 4:
        A, B = _config_moments(spec)
        out.append(verify_griffiths2(spec.graph, spec.params, spec.beta, spec.h, A, B))
    return out


def _job_fkg_config(spec, budget, seed):
    from .phi4_oracle import Coordinate

    if spec.graph.n > 4 or spec.graph.n == 0:
        return []
    return [verify_fkg(spec.graph, spec.params, spec.beta, spec.h, Coordinate(0), Coordinate(spec.graph.n - 1))]


def _job_positivity(spec, budget, seed, S, T, N):
    exact = N <= 16
    return [partition_positivity_stats(spec.params, [N], S, T, n_samples=budget["tangle"], seed=seed,
                                       floor=0.0 if exact else 1e-3)]


def _job_domination(spec, budget, seed, S, T):
    return [verify_domination(spec.params, 8, S, T)]


def _job_pairing(spec, budget, seed):
    return [pairing_and_merging_stats(spec.params, [8], 4, seed=seed)]


def _job_cluster(spec, budget, seed):
    return [cluster_size_stats(spec.params, [spec.params.a - 1.0, spec.params.a, spec.params.a + 1.0],
                               [16, 64, 256], seed=seed)]


def _job_irb(spec, budget, seed):
    import time

    t0 = time.perf_counter()
    grid = [round(0.05 * k, 10) for k in range(1, 9)]
    bc, _, _ = binder_crossing(spec.params, grid, 3, (4, 8), budget["sweeps"], seed)
    if bc is None:
        rep = _report("binder_crossing", {"params": spec.params, "grid": grid, "seed": seed}, float("nan"),
                      float("nan"), "==", 0.0, t0, details={"note": "no crossing on the grid"})
        rep.verdict = "inconclusive"
        return [rep]
    beta = 0.8 * bc
    model = TorusPhi4(TorusSpec(3, 8, NearestNeighbour()), spec.params)
    box = {(i, j, k): 1.0 / 8 for i in (0, 1) for j in (0, 1) for k in (0, 1)}
    out = []
    for tag, v in (("delta", {(0, 0, 0): 1.0}), ("box", box)):
        rep = irb_check(model, beta, v, budget["sweeps"], seed + (1 if tag == "box" else 0))
        rep.details["binder_crossing"] = bc
        rep.details["test_vector"] = tag
        out.append(rep)
    return out


def _suite_jobs(suite: str, budget_name: str):
    b = budget_name
    jobs = []
    if suite in ("switching", "all"):
        jobs += [(_job_micrographs, {}), (_job_ising_ratio, {})]
        if b != "tiny":
            jobs.append((_job_phi4_ratio, {}))
    if suite in ("inequalities", "all"):
        jobs += [(_job_inequalities, {}), (_job_fkg_config, {})]
    if suite in ("tangling", "all"):
        combos = [(4, 0), (2, 2)] if b == "tiny" else [(2, 0), (4, 0), (6, 0), (2, 2), (4, 2), (2, 4)]
        jobs.append((_job_positivity, {"S": 4, "T": 0, "N": 8}))
        jobs += [(_job_positivity, {"S": S, "T": T, "N": 32}) for S, T in combos]
        jobs += [(_job_domination, {"S": 2, "T": 2}), (_job_domination, {"S": 4, "T": 2}), (_job_pairing, {})]
        if b != "tiny":
            jobs.append((_job_cluster, {}))
    if suite in ("irb", "all"):
        jobs.append((_job_irb, {}))
    return jobs


def _run_job(args):
    fn, kw, spec, budget, seed = args
    return fn(spec, budget, seed, **kw)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_moments(ns) -> int:
    spec, digest = _load(ns.config)
    if ns.max_order < 0:
        raise UsageError("--max-order must be non-negative")
    if not ns.tol > 0:
        raise UsageError("--tol must be positive")
    table = moment_table(spec.params, max(ns.max_order, 2), ns.tol)
    orders = list(range(0, ns.max_order + 1, 2))
    out = {
        "g": spec.params.g,
        "a": spec.params.a,
        "max_order": ns.max_order,
        "tol": ns.tol,
        "config_digest": digest,
        "u": {str(k): float(table.u(k)) for k in orders},
    }
    _write_atomic(ns.out, _dumps(out))
    return EXIT_OK


def cmd_verify(ns, argv) -> int:
    import time

    spec, digest = _load(ns.config)
    budget = BUDGETS[ns.budget]
    jobs = _suite_jobs(ns.suite, ns.budget)
    payload = [(fn, kw, spec, budget, _job_seed(ns.seed, i)) for i, (fn, kw) in enumerate(jobs)]
    workers = _workers()
    t0 = time.perf_counter()
    if workers > 1 and len(payload) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(payload))) as ex:
            results = list(ex.map(_run_job, payload))
    else:
        results = [_run_job(p) for p in payload]
    reports = [r for batch in results for r in batch]
    manifest = run_manifest(reports, _strip_out(argv), ns.seed, ns.timing)
    manifest["config_digest"] = digest
    manifest["suite"] = ns.suite
    manifest["budget"] = ns.budget
    if ns.timing:
        manifest["wall_clock"] = time.perf_counter() - t0
    _write_atomic(ns.out, _dumps(manifest))
    c = manifest["counts"]
    print(f"pass={c['pass']} fail={c['fail']} inconclusive={c['inconclusive']}", file=sys.stderr)
    return EXIT_FAIL if c["fail"] else EXIT_OK


def _cell(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _parse_grid(text: str | None, kind=float) -> list:
    if text is None or not text.strip():
        return []
    try:
        return [kind(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--grid must be a comma-separated list, got {text!r}") from None


def cmd_scan(ns) -> int:
    spec, _ = _load(ns.config)
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    fam = NearestNeighbour()
    if ns.observable == "magnetisation":
        grid = sorted(_parse_grid(ns.grid))
        w.writerow(SCAN_COLUMNS)
        if grid:
            model = TorusPhi4(TorusSpec(ns.d, ns.L, fam), spec.params)
            for row in magnetisation_scan(model, grid, ns.sweeps, ns.seed):
                w.writerow([_cell(row[c]) for c in SCAN_COLUMNS])
    elif ns.observable == "green":
        grid = sorted(set(_parse_grid(ns.grid, int))) if ns.grid is not None else [ns.L]
        w.writerow(["d", "L", "G00"])
        for L in grid:
            G, _ = green_torus(fam, ns.d, L)
            w.writerow([ns.d, L, repr(float(G.flat[0]))])
    else:
        grid = sorted(set(_parse_grid(ns.grid, int)))
        w.writerow(["d", "n", "cesaro"])
        if grid:
            vals = cesaro_green(fam, ns.d, grid)
            for n, v in zip(grid, vals):
                w.writerow([ns.d, n, repr(float(v))])
    _write_atomic(ns.out, buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tangled-phi4", description="Tangled-current toolkit for the lattice phi^4 model.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("moments", help="single-site moment table")
    m.add_argument("--config")
    m.add_argument("--max-order", type=int, default=8)
    m.add_argument("--tol", type=float, default=1e-12)
    m.add_argument("--out")

    v = sub.add_parser("verify", help="run a verification suite and write a manifest")
    v.add_argument("--config")
    v.add_argument("--suite", choices=SUITES + ("all",), required=True)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--budget", choices=tuple(BUDGETS), default="small")
    v.add_argument("--out")
    v.add_argument("--timing", action="store_true", help="record wall-clock times (breaks byte identity)")

    s = sub.add_parser("scan", help="CSV scan of an observable")
    s.add_argument("--config")
    s.add_argument("--observable", choices=("magnetisation", "green", "cesaro"), required=True)
    s.add_argument("--grid")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--L", type=int, default=8)
    s.add_argument("--sweeps", type=int, default=10_000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = build_parser().parse_args(argv)
        if ns.command == "moments":
            return cmd_moments(ns)
        if ns.command == "verify":
            return cmd_verify(ns, argv)
        return cmd_scan(ns)
    except UsageError as exc:
        print(f"tangled-phi4: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"tangled-phi4: capacity: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except Phi4Error as exc:
        print(f"tangled-phi4: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
