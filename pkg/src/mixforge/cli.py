"""
Command-line entry point: ``mixforge <command> [options]``.

Commands
--------
gen-ensemble  build a candidate ensemble (GRAPE for 1Q, bang-bang echoes for 2Q)
synth         solve one of the weighting programs
eval          AGI / diamond distance of members and of a mixture
sweep         metric curves along one Hamiltonian parameter (CSV)
rb            simulated randomized benchmarking
report        merge result files into one summary with pass/fail checks

Exit codes: 0 success, 2 schema or input error, 3 generation shortfall,
4 best-effort optimum (residual above tolerance), 5 infeasible program.
"""

import argparse
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from . import io as mio
from .control import (BangBangOptions, GrapeOptions, HamiltonianModel, bangbang_family,
                      build_ensemble, grape_optimize, iswap_family_target, propagate,
                      sensitivity_scan)
from .diamond import metric_report, unitary_diamond_distance
from .exceptions import ConvergenceError, InfeasibleError, MixforgeError, SchemaError
from .metrics import agi, check_diamond_convexity, error_map, off_diagonal_vector
from .pauli import pauli_operator, ptm_from_unitary, rotation
from .rb import GateSource, PulseImplementation, RBConfig, acorn_sources, run_rb
from .synthesis import (ACORN_SCALES, Program, SynthesisConfig, acorn_ensemble,
                        solve)

log = logging.getLogger("mixforge")

EXIT_OK, EXIT_SCHEMA, EXIT_SHORTFALL, EXIT_BEST_EFFORT, EXIT_INFEASIBLE = 0, 2, 3, 4, 5

TARGETS_1Q = {
    "xhalf": lambda: rotation("X", np.pi / 2),
    "yhalf": lambda: rotation("Y", np.pi / 2),
}


def thread_count(requested):
    cap = os.environ.get("MIXFORGE_THREADS")
    n = requested or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def _grape_one(args):
    target, seed, opts = args
    try:
        return grape_optimize(target, HamiltonianModel.one_qubit(), seed=seed, opts=opts), True
    except ConvergenceError as exc:
        return exc.best, False


def cmd_gen_ensemble(a):
    if a.model == "1q":
        model = HamiltonianModel.one_qubit()
        target = TARGETS_1Q[a.target]()
        opts = GrapeOptions(fidelity_floor=a.floor, n_steps=a.n_steps, max_iterations=a.max_iter)
        count = a.count or 150
        jobs = [(target, [a.seed, i], opts) for i in range(count)]
        n = thread_count(a.threads)
        if n > 1:
            with ProcessPoolExecutor(n) as pool:
                results = list(pool.map(_grape_one, jobs))
        else:
            results = [_grape_one(j) for j in jobs]
        pulses = [p for p, ok in results if ok]
        short = len(pulses) < count
        if short:
            warnings.warn(f"{count - len(pulses)} of {count} GRAPE runs missed the fidelity floor")
        meta = {"seed": a.seed, "algorithm": "grape", "floor": a.floor, "target": a.target}
    else:
        model = HamiltonianModel.two_qubit()
        target = iswap_family_target()
        pulses = bangbang_family(model, BangBangOptions(seed=a.seed))
        if a.count:
            pulses = pulses[:a.count]
        short = False
        meta = {"seed": a.seed, "algorithm": a.family, "floor": None, "target": "exchange-quarter"}
    meta["timestamp"] = os.environ.get("SOURCE_DATE_EPOCH")
    if not pulses:
        log.error("no candidate reached the fidelity floor")
        return EXIT_SHORTFALL
    ens = build_ensemble(pulses, target, model, metadata=meta)
    out = a.out or "ensemble.json"
    mio.write_atomic(out, mio.dumps(mio.ensemble_to_doc(ens, model)))
    print(f"wrote {len(ens)} members to {out}")
    return EXIT_SHORTFALL if short else EXIT_OK


def _load_ensemble(a):
    if getattr(a, "builtin", None):
        if a.builtin != "paper-acorn":
            raise SchemaError(f"unknown builtin ensemble {a.builtin!r}")
        return acorn_ensemble()
    if not getattr(a, "ensemble", None):
        raise SchemaError("an --ensemble file or --builtin set is required")
    return mio.ensemble_from_doc(mio.load_doc(a.ensemble))


def cmd_synth(a):
    ens = _load_ensemble(a)
    program = Program.parse(a.program)
    cfg = SynthesisConfig(tolerance=a.tol, eta=a.eta, lam=a.lam, prune_threshold=a.prune, seed=a.seed)
    params = [p for p in a.params.split(",") if p] if a.params else None
    if params and ens.metadata.get("model_descriptor", {}).get("kind") == "two_qubit":
        params = [q for p in params for q in ((f"{p}_1", f"{p}_2") if p in ("delta", "epsilon") else (p,))]
    try:
        res = solve(ens, program, cfg, parameters=params)
        code = EXIT_OK
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        print("fallback: rerun with --program agi-weighted --eta <weight> to trade "
              "cancellation against infidelity", file=sys.stderr)
        return EXIT_INFEASIBLE
    exactness = res.metadata.get("cancellation", res.residual)
    if program is not Program.DIAMOND_DIRECT and exactness > a.tol:
        code = EXIT_BEST_EFFORT
    out = a.out or "weights.json"
    mio.write_atomic(out, mio.dumps(mio.weights_to_doc(res)))
    print(f"{program.value}: residual {res.residual:.3e}, support {res.support_size()} -> {out}")
    return code


def _member_metrics(ens, method, seed):
    rows = []
    for m in ens.members:
        rep = metric_report(m.error_map, method=method, seed=seed)
        rep["id"] = m.id
        rows.append(rep)
    return rows


def _random_channel_ptm(rng):
    """Random single-qubit channel: a small rotation followed by a Pauli channel."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    h = sum(c * pauli_operator(p) for c, p in zip(axis, "XYZ"))
    u = expm(-0.5j * rng.uniform(0, 0.5) * h)
    p = rng.dirichlet(np.ones(3)) * rng.uniform(0, 0.2)
    pauli = np.diag([1.0, *(1 - 2 * (p.sum() - p))])
    return pauli @ ptm_from_unitary(u).matrix


def convexity_batch(trials, seed, method="certified"):
    rng = np.random.default_rng(seed)
    passed = 0
    for _ in range(trials):
        m = int(rng.integers(2, 5))
        maps = [_random_channel_ptm(rng) for _ in range(m)]
        w = rng.dirichlet(np.ones(m))
        if check_diamond_convexity(maps, w, method=method).holds:
            passed += 1
    return {"trials": trials, "passed": passed, "pass": passed == trials}


def cmd_eval(a):
    doc = {"kind": "metrics", "schema_version": mio.SCHEMA_VERSION, "method": a.method, "seed": a.seed}
    if a.convexity:
        doc["convexity"] = convexity_batch(a.convexity, a.seed, a.method)
    if getattr(a, "ensemble", None) or getattr(a, "builtin", None):
        ens = _load_ensemble(a)
        doc["members"] = _member_metrics(ens, a.method, a.seed)
        if a.weights:
            w = mio.weights_from_doc(mio.load_doc(a.weights))
            mix = ens.mixture(w)
            rep = metric_report(mix, method=a.method, seed=a.seed)
            rep["offdiag_max"] = float(np.max(np.abs(off_diagonal_vector(mix))))
            rep["program"] = w.program.value
            doc["mixture"] = rep
    out = a.out or "metrics.json"
    mio.write_atomic(out, mio.dumps(doc))
    print(f"wrote {out}")
    return EXIT_OK


def parse_grid(text):
    """``a:b:n`` (inclusive, n points) or a comma-separated list."""
    if ":" in text:
        lo, hi, n = text.split(":")
        # round away linspace noise so CSV values read as typed
        grid = np.round(np.linspace(float(lo), float(hi), int(n)), 12)
    else:
        grid = np.array([float(x) for x in text.split(",") if x.strip()])
    if grid.size == 0 or np.any(np.diff(grid) < 0):
        raise SchemaError("grid must be non-empty and sorted")
    return grid


def cmd_sweep(a):
    ens = _load_ensemble(a)
    model = mio.model_from_doc(ens)
    if model is None:
        raise SchemaError("sweeps need an ensemble with pulses and a model descriptor")
    grid = parse_grid(a.grid)
    target = ens.target_unitary
    pulses = [m.pulse for m in ens.members]
    rows = []
    if a.members:
        ids = ens.ids if a.members == "all" else a.members.split(",")
        index = {m.id: i for i, m in enumerate(ens.members)}
        for mid in ids:
            if mid not in index:
                raise SchemaError(f"no member with id {mid!r}")
            pulse = pulses[index[mid]]
            for v in grid:
                try:
                    u = propagate(pulse, model, {a.param: v})
                    emap = error_map(ptm_from_unitary(u), ens.target)
                    rows.append((v, mid, agi(emap), unitary_diamond_distance(target.conj().T @ u)))
                except MixforgeError as exc:
                    print(f"warning: {mid} at {v}: {exc}", file=sys.stderr)
                    rows.append((v, mid, float("nan"), float("nan")))
    for path in a.weights or []:
        w = mio.weights_from_doc(mio.load_doc(path))
        sid = Path(path).stem
        for v in grid:
            try:
                pt = sensitivity_scan(w, model, target, a.param, [v], pulses=pulses)[0]
                rows.append((v, sid, pt.agi, pt.diamond))
            except MixforgeError as exc:
                print(f"warning: {sid} at {v}: {exc}", file=sys.stderr)
                rows.append((v, sid, float("nan"), float("nan")))
    rows.sort(key=lambda r: (r[0], r[1]))
    text = "param_value,source_id,agi,diamond\n" + "".join(
        f"{v!r},{sid},{g!r},{dd!r}\n" for v, sid, g, dd in
        ((float(v), s, float(g), float(dd)) for v, s, g, dd in rows))
    out = a.out or "sweep.csv"
    mio.write_atomic(out, text)
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def resolve_source(text, pulse_depol=0.0):
    if text == "calibrated":
        return GateSource([PulseImplementation("calibrated", 1.0, depolarizing=pulse_depol)])
    if text.startswith("builtin:"):
        name = text.split(":", 1)[1]
        sources = acorn_sources(depolarizing=pulse_depol)
        if name not in sources:
            raise SchemaError(f"unknown builtin pulse {name!r}")
        return sources[name]
    if text.startswith("mqg:"):
        ref = text.split(":", 1)[1]
        if ref == "paper-acorn":
            from .synthesis import solve_pauli_exact
            w = solve_pauli_exact(acorn_ensemble()).w
        else:
            w = mio.weights_from_doc(mio.load_doc(ref)).w
        if len(w) != len(ACORN_SCALES):
            raise SchemaError("MQG weights must cover the four builtin pulses")
        return acorn_sources(w, depolarizing=pulse_depol)["mqg"]
    raise SchemaError(f"unknown RB source {text!r}")


def cmd_rb(a):
    src = resolve_source(a.source, a.pulse_depol)
    lengths = tuple(int(x) for x in a.lengths.split(","))
    cfg = RBConfig(src, lengths, a.seqs, a.shots, clifford_depolarizing=a.depol, seed=a.seed)
    res = run_rb(cfg)
    out = Path(a.out or "rb.json")
    mio.write_atomic(out, mio.dumps(mio.rb_to_doc(res)))
    mio.write_atomic(out.with_suffix(".csv"), res.to_csv())
    Lmax = 64 if 64 in lengths else max(lengths)
    st = res.stats(Lmax)
    print(f"{src.name}: r = {res.r:.5f}  var(L={Lmax}) = {st['variance']:.3e}"
          + ("  [fit failed]" if res.fit_failed else ""))
    return EXIT_OK


def cmd_report(a):
    summary = {"schema_version": mio.SCHEMA_VERSION, "kind": "report", "files": {}, "checks": []}
    failed_read = False
    rb = {}
    for path in a.inputs:
        try:
            doc = mio.load_doc(path)
        except (OSError, SchemaError) as exc:
            summary["files"][path] = {"error": str(exc)}
            failed_read = True
            continue
        kind = doc.get("kind")
        entry = {"kind": kind}
        if kind == "weights":
            entry.update(program=doc["program"], residual=doc["residual"])
            summary["checks"].append({"name": f"residual:{path}", "value": doc["residual"],
                                      "threshold": a.tol, "pass": doc["residual"] <= a.tol})
        elif kind == "rb_result":
            L = 64 if 64 in doc["lengths"] else max(doc["lengths"])
            entry.update(source=doc["source"], r=doc["r"], variance=doc["stats"][str(L)]["variance"])
            rb[doc["source"]] = entry
        elif kind == "metrics":
            if "convexity" in doc:
                c = doc["convexity"]
                entry["convexity"] = c
                summary["checks"].append({"name": f"convexity:{path}", "value": f"{c['passed']}/{c['trials']}",
                                          "pass": c["pass"]})
            if "mixture" in doc:
                entry["mixture"] = doc["mixture"]
        summary["files"][path] = entry
    if "mqg" in rb:
        for name, e in sorted(rb.items()):
            if name.startswith("pulse"):
                summary["checks"].append({"name": f"rb_order:mqg<{name}", "value": [rb["mqg"]["r"], e["r"]],
                                          "pass": rb["mqg"]["r"] < e["r"]})
    summary["pass"] = all(c["pass"] for c in summary["checks"]) and not failed_read
    out = a.out or "report.json"
    mio.write_atomic(out, mio.dumps(summary))
    print(f"report: {len(summary['files'])} files, {len(summary['checks'])} checks, "
          f"{'pass' if summary['pass'] else 'FAIL'} -> {out}")
    if failed_read:
        return EXIT_SCHEMA
    return EXIT_OK if summary["pass"] else 1


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base random seed (default: 0)")
    common.add_argument("--out", default=None, help="output path")
    common.add_argument("--tol", type=float, default=1e-9, help="residual tolerance (default: 1e-9)")
    common.add_argument("--threads", type=int, default=1, help="worker processes (capped by MIXFORGE_THREADS)")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="mixforge", description=__doc__.split("\n\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-ensemble", parents=[common], help="build a candidate ensemble")
    p.add_argument("--model", choices=("1q", "2q"), default="1q")
    p.add_argument("--target", choices=sorted(TARGETS_1Q), default="xhalf")
    p.add_argument("--count", type=int, default=None, help="1q: GRAPE runs (150); 2q: keep the first N echoes")
    p.add_argument("--family", choices=("bangbang",), default="bangbang")
    p.add_argument("--floor", type=float, default=0.999)
    p.add_argument("--n-steps", type=int, default=25)
    p.add_argument("--max-iter", type=int, default=5000, help="GRAPE iteration budget per candidate")
    p.set_defaults(func=cmd_gen_ensemble)

    def ensemble_args(p):
        p.add_argument("--ensemble", help="ensemble JSON file")
        p.add_argument("--builtin", help="builtin ensemble (paper-acorn)")

    p = sub.add_parser("synth", parents=[common], help="solve a weighting program")
    ensemble_args(p)
    p.add_argument("--program", default="generator-exact",
                   choices=[x.value.replace("_", "-") for x in Program])
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--prune", type=float, default=1e-6)
    p.add_argument("--params", default=None, help="comma-separated parameter names (robust)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", parents=[common], help="metrics of members and a mixture")
    ensemble_args(p)
    p.add_argument("--weights")
    p.add_argument("--method", choices=("certified", "multistart"), default="certified")
    p.add_argument("--convexity", type=int, default=0, help="run N random convexity checks")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="metric curves along a parameter")
    ensemble_args(p)
    p.add_argument("--param", default="delta")
    p.add_argument("--grid", default="-0.01:0.01:41")
    p.add_argument("--members", default=None, help="'all' or comma-separated member ids")
    p.add_argument("--weights", action="append", help="weights file (repeatable)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rb", parents=[common], help="simulated randomized benchmarking")
    p.add_argument("--lengths", default="2,4,8,16,32,64")
    p.add_argument("--seqs", type=int, default=10)
    p.add_argument("--shots", type=int, default=1000)
    p.add_argument("--source", default="calibrated",
                   help="calibrated | builtin:pulseN | mqg:<weights.json> | mqg:paper-acorn")
    p.add_argument("--depol", type=float, default=0.0, help="per-Clifford depolarizing rate")
    p.add_argument("--pulse-depol", type=float, default=0.0, help="per-pulse depolarizing rate")
    p.set_defaults(func=cmd_rb)

    p = sub.add_parser("report", parents=[common], help="summarize result files")
    p.add_argument("inputs", nargs="*")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_BEST_EFFORT


if __name__ == "__main__":
    sys.exit(main())
