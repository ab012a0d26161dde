"""``spz`` command line: stats, run, compare, trace, gen.

Exit codes: 0 ok, 1 correctness failure, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import io
import json
import logging
import os
import re
import sys

from . import __version__
from .errors import ParseError, PreconditionError, SpzError
from .kernels import KERNELS, compare_kernels, diff_matrices, spgemm_esc
from .matrix import (
    CsrMatrix,
    dataset_stats,
    dumps_cache,
    gen_banded,
    gen_identity,
    gen_random,
    gen_skewed,
    load_matrix,
    reference_spgemm,
    write_matrix_market,
)
from .state import MachineState
from .trace import RowInput, trace_rows

SCHEMA = 1
DEFAULTS = {"R": 16, "tolerance": 1e-5, "atol": 1e-6, "rsort_descending": True, "block_size": 16}


class UsageError(SpzError):
    pass


# ---------------------------------------------------------------------------
# inputs

_GEN_PATTERNS = {
    "random": re.compile(r"random:(\d+)x(\d+):([0-9.eE+-]+):seed(\d+)$"),
    "skewed": re.compile(r"skewed:(\d+)x(\d+):(\d+):(\d+):(\d+):seed(\d+)$"),
    "identity": re.compile(r"identity:(\d+)$"),
    "banded": re.compile(r"banded:(\d+):(\d+):seed(\d+)$"),
}


def parse_gen(spec: str) -> CsrMatrix:
    """Build a synthetic matrix from a generator spec.

    ``random:RxC:DENSITY:seedN``, ``skewed:RxC:HEAVY_ROWS:HEAVY_NNZ:LIGHT_NNZ:seedN``,
    ``identity:N`` or ``banded:N:HALF_WIDTH:seedN``.
    """
    kind = spec.split(":", 1)[0]
    pat = _GEN_PATTERNS.get(kind)
    m = pat.match(spec) if pat else None
    if m is None:
        raise UsageError(f"bad generator spec {spec!r}")
    g = m.groups()
    try:
        if kind == "random":
            return gen_random(int(g[0]), int(g[1]), float(g[2]), int(g[3]))
        if kind == "skewed":
            return gen_skewed(int(g[0]), int(g[1]), int(g[2]), int(g[3]), int(g[4]), int(g[5]))
        if kind == "identity":
            return gen_identity(int(g[0]))
        return gen_banded(int(g[0]), int(g[1]), int(g[2]))
    except ValueError as e:
        raise UsageError(f"{spec}: {e}") from None


def load_source(path=None, gen=None):
    """Returns ``(matrix_id, CsrMatrix)`` for a file path or a generator spec."""
    if (path is None) == (gen is None):
        raise UsageError("give exactly one of a matrix path or --gen")
    if gen is not None:
        return gen, parse_gen(gen)
    return os.path.basename(path), load_matrix(path)


def load_config(env=None):
    """Defaults overlaid with the JSON file named by ``SPZ_CONFIG``."""
    env = os.environ if env is None else env
    cfg = dict(DEFAULTS)
    path = env.get("SPZ_CONFIG")
    if path:
        with open(path) as fh:
            user = json.load(fh)
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys in {path}: {sorted(unknown)}")
        cfg.update(user)
    return cfg


# ---------------------------------------------------------------------------
# commands (library level)

def cmd_stats(a: CsrMatrix, group_size=16):
    return dataset_stats(a, group_size)


def _kernel_entry(res, verdict, timings):
    d = {"counters": res.counters.as_dict(timings)}
    if verdict is not None:
        d["check"] = {"ok": verdict.ok, "first_divergence": list(verdict.first_divergence)
                      if verdict.first_divergence else None, "message": verdict.message}
    return d


def _report(matrix_id, a, cfg, kernels, extra=None, b=None):
    rep = {
        "schema": SCHEMA,
        "tool": {"name": "spz", "version": __version__},
        "matrix": {"id": matrix_id, "stats": dataset_stats(a, cfg["R"], b).as_dict()},
        "config": {k: cfg[k] for k in sorted(cfg)},
        "kernels": kernels,
    }
    if extra:
        rep.update(extra)
    return rep


def block_sizes(rows):
    sizes, s = [], 1
    while True:
        sizes.append(s)
        if s >= rows:
            return sizes
        s *= 2


def cmd_run(matrix_id, a, algo, cfg, b=None, check=False, block_sweep=False, timings=False):
    """Run one kernel on A x A (or A x B); returns ``(report, ok)``."""
    if algo not in KERNELS:
        raise UsageError(f"unknown algo {algo!r}; choose from {', '.join(KERNELS)}")
    b = a if b is None else b
    ref = reference_spgemm(a, b) if check else None
    ok = True

    def one(fn, **kw):
        nonlocal ok
        res = fn(a, b, **kw)
        verdict = diff_matrices(res.c, ref, cfg["tolerance"], cfg["atol"]) if check else None
        if verdict is not None and not verdict.ok:
            ok = False
        return _kernel_entry(res, verdict, timings)

    extra = None
    if algo == "esc" and block_sweep:
        sweep = {}
        for bs in block_sizes(a.rows):
            sweep[str(bs)] = one(spgemm_esc, block_rows=bs)
        cost = {bs: e["counters"]["ops"].get("radix_moves", 0) for bs, e in sweep.items()}
        best = min(cost, key=lambda bs: (cost[bs], int(bs)))
        kernels = {"esc": sweep[best]}
        extra = {"block_sweep": {"sizes": sweep, "best": int(best), "metric": "radix_moves"}}
    elif algo == "esc":
        kernels = {"esc": one(spgemm_esc, block_rows=cfg["block_size"])}
    elif algo == "spz":
        kernels = {algo: one(KERNELS[algo], machine=MachineState(cfg["R"]))}
    elif algo == "spz-rsort":
        kernels = {algo: one(KERNELS[algo], machine=MachineState(cfg["R"]),
                             descending=cfg["rsort_descending"])}
    else:
        kernels = {algo: one(KERNELS[algo])}
    return _report(matrix_id, a, cfg, kernels, extra, b), ok


def cmd_compare(matrix_id, a, algos, cfg, b=None, parallel=False, timings=False):
    unknown = [x for x in algos if x not in KERNELS]
    if unknown:
        raise UsageError(f"unknown algo(s): {', '.join(unknown)}")
    args = {"esc": {"block_rows": cfg["block_size"]},
            "spz-rsort": {"descending": cfg["rsort_descending"]}}
    rep = compare_kernels(a, b, algos, rtol=cfg["tolerance"], atol=cfg["atol"], R=cfg["R"],
                          parallel=parallel, kernel_args=args)
    kernels = {name: _kernel_entry(rep.results[name], rep.verdicts[name], timings) for name in algos}
    return _report(matrix_id, a, cfg, kernels, b=b), rep.ok


def _parse_list(text, conv=int):
    if text is None or text.strip() == "":
        return []
    try:
        return [conv(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"bad list literal {text!r}") from None


def cmd_trace(kind, n, west=(), north=(), west_values=None, north_values=None):
    """Simulate one row pair; empty chunks issue no micro-op and give an empty trace."""
    if kind not in ("sort", "zip"):
        raise UsageError(f"trace kind must be sort or zip, not {kind!r}")
    if len(west) > n or len(north) > n:
        raise UsageError(f"chunks longer than n={n}")
    if (west_values is None) != (north_values is None):
        raise UsageError("give values for both sides or neither")
    rows = []
    if west or north:
        pad = [0] * n
        va = vb = None
        if west_values is not None:
            if len(west_values) != len(west) or len(north_values) != len(north):
                raise UsageError("value lists must match chunk lengths")
            va, vb = list(west_values) + pad[len(west):], list(north_values) + pad[len(north):]
        rows.append(RowInput(list(west) + pad[len(west):], list(north) + pad[len(north):],
                             len(west), len(north), va, vb))
    results, trace = trace_rows(kind, n, rows)
    return (results[0] if results else None), trace


def cmd_gen(spec, out=None):
    a = parse_gen(spec)
    if out is None:
        return a, write_matrix_market(a)
    if out.endswith(".spzc"):
        with open(out, "wb") as fh:
            fh.write(dumps_cache(a))
    else:
        with open(out, "w") as fh:
            write_matrix_market(a, fh)
    return a, None


# ---------------------------------------------------------------------------
# rendering

def _fmt_num(x):
    if isinstance(x, float):
        return f"{x:.4g}" if 1e-3 <= abs(x) < 1e6 or x == 0 else f"{x:.3E}"
    return str(x)


def render_stats(matrix_id, st, fmt):
    d = st.as_dict()
    if fmt == "json":
        return json.dumps({"schema": SCHEMA, "matrix": matrix_id, "stats": d}, sort_keys=True, indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["matrix", *d])
        w.writerow([matrix_id, *d.values()])
        return buf.getvalue()
    width = max(map(len, d))
    lines = [f"{'matrix'.ljust(width)}  {matrix_id}"]
    for k, v in d.items():
        text = f"{v:.2E}" if k == "density" else _fmt_num(v)
        lines.append(f"{k.ljust(width)}  {text}")
    return "\n".join(lines) + "\n"


_COLUMNS = ("multiplies", "key_instr_total", "sort_iterations", "merge_iterations", "cycle_estimate")


def render_report(rep, fmt):
    if fmt == "json":
        return json.dumps(rep, sort_keys=True, indent=1) + "\n"
    rows = []
    for name, e in rep["kernels"].items():
        c = e["counters"]
        check = e.get("check")
        rows.append([name, *(c[k] for k in _COLUMNS),
                     "-" if check is None else ("ok" if check["ok"] else "FAIL")])
    header = ["kernel", *_COLUMNS, "check"]
    if "block_sweep" in rep:
        metric = rep["block_sweep"]["metric"]
        header.append(metric)
        rows = [r + [rep["kernels"]["esc"]["counters"]["ops"].get(metric, 0)] for r in rows]
        for bs, e in rep["block_sweep"]["sizes"].items():
            c = e["counters"]
            mark = "*" if int(bs) == rep["block_sweep"]["best"] else ""
            rows.append([f"esc[block={bs}]{mark}", *(c[k] for k in _COLUMNS),
                         "-" if "check" not in e else ("ok" if e["check"]["ok"] else "FAIL"),
                         c["ops"].get(metric, 0)])
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["matrix", *header])
        for r in rows:
            w.writerow([rep["matrix"]["id"], *r])
        return buf.getvalue()
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    out = [f"matrix {rep['matrix']['id']}  R={rep['config']['R']}"]
    for r in [header, *rows]:
        out.append("  ".join(str(x).rjust(w) if i else str(x).ljust(w) for i, (x, w) in enumerate(zip(r, widths))))
    for name, e in rep["kernels"].items():
        if e.get("check") and not e["check"]["ok"]:
            out.append(f"{name}: {e['check']['message']}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# argparse front end

def build_parser():
    p = argparse.ArgumentParser(prog="spz", description="SparseZipper SpGEMM simulator and benchmarks")
    p.add_argument("--version", action="version", version=f"spz {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log every executed instruction to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def source(sp):
        sp.add_argument("matrix", nargs="?", help="Matrix Market or .spzc cache file")
        sp.add_argument("--gen", help="generator spec, e.g. random:64x64:0.1:seed3")
        sp.add_argument("--format", choices=("text", "json", "csv"), default="text")

    def config(sp):
        sp.add_argument("--rhs", help="right-hand matrix file (default: A x A)")
        sp.add_argument("--rhs-gen", help="generator spec for the right-hand matrix")
        sp.add_argument("--R", type=int, help="lanes per register row")
        sp.add_argument("--tol", type=float, help="relative tolerance for --check")
        sp.add_argument("--block-size", type=int, help="rows per esc block")
        sp.add_argument("--ascending", action="store_true", help="spz-rsort: ascending work order")
        sp.add_argument("--timings", action="store_true", help="include wall-clock phase seconds")

    sp = sub.add_parser("stats", help="dataset statistics")
    source(sp)
    sp.add_argument("--group-size", type=int, help="rows per group for work variation")

    sp = sub.add_parser("run", help="run one kernel")
    source(sp)
    config(sp)
    sp.add_argument("--algo", required=True, choices=list(KERNELS))
    sp.add_argument("--check", action="store_true", help="compare against the reference product")
    sp.add_argument("--block-sweep", action="store_true", help="esc: sweep block sizes")

    sp = sub.add_parser("compare", help="run several kernels and check them against the reference")
    source(sp)
    config(sp)
    sp.add_argument("--algos", default=",".join(KERNELS))
    sp.add_argument("--parallel", action="store_true")

    sp = sub.add_parser("trace", help="cycle trace of one key/value instruction pair")
    sp.add_argument("kind", choices=("sort", "zip"))
    sp.add_argument("-n", type=int, default=3, help="array dimension")
    sp.add_argument("--west", default="", help="comma-separated keys entering from the west")
    sp.add_argument("--north", default="", help="comma-separated keys entering from the north")
    sp.add_argument("--west-values", help="values paired with --west")
    sp.add_argument("--north-values", help="values paired with --north")
    sp.add_argument("--format", choices=("text", "json"), default="text")
    sp.add_argument("--golden", help="compare the rendered trace with this file")

    sp = sub.add_parser("gen", help="write a synthetic matrix")
    sp.add_argument("spec")
    sp.add_argument("--out", help="output path (.mtx or .spzc); stdout if omitted")
    return p


def _config_from(args):
    cfg = load_config()
    for flag, key in (("R", "R"), ("tol", "tolerance"), ("block_size", "block_size")):
        val = getattr(args, flag, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "ascending", False):
        cfg["rsort_descending"] = False
    return cfg


def _rhs(args):
    if args.rhs and args.rhs_gen:
        raise UsageError("give at most one of --rhs and --rhs-gen")
    if args.rhs:
        return load_matrix(args.rhs)
    if args.rhs_gen:
        return parse_gen(args.rhs_gen)
    return None


def _dispatch(args, out):
    if args.command == "gen":
        _, text = cmd_gen(args.spec, args.out)
        if text is not None:
            out.write(text)
        return 0

    if args.command == "trace":
        wv = nv = None
        if args.west_values is not None or args.north_values is not None:
            wv = _parse_list(args.west_values, float)
            nv = _parse_list(args.north_values, float)
        res, trace = cmd_trace(args.kind, args.n, _parse_list(args.west), _parse_list(args.north), wv, nv)
        text = trace.to_json() if args.format == "json" else trace.render_text()
        if args.golden:
            with open(args.golden) as fh:
                want = fh.read()
            if want != text:
                sys.stderr.writelines(difflib.unified_diff(
                    want.splitlines(True), text.splitlines(True), args.golden, "trace"))
                return 1
        out.write(text)
        return 0

    matrix_id, a = load_source(args.matrix, args.gen)
    if args.command == "stats":
        cfg = load_config()
        gs = args.group_size or cfg["R"]
        out.write(render_stats(matrix_id, cmd_stats(a, gs), args.format))
        return 0

    cfg = _config_from(args)
    b = _rhs(args)
    if args.command == "run":
        rep, ok = cmd_run(matrix_id, a, args.algo, cfg, b, args.check, args.block_sweep, args.timings)
    else:
        algos = [x.strip() for x in args.algos.split(",") if x.strip()]
        rep, ok = cmd_compare(matrix_id, a, algos, cfg, b, args.parallel, args.timings)
    out.write(render_report(rep, args.format))
    if not ok:
        for name, e in rep["kernels"].items():
            if e.get("check") and not e["check"]["ok"]:
                print(f"spz: {name} check failed: {e['check']['message']}", file=sys.stderr)
        return 1
    return 0


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    if args.verbose:
        logging.basicConfig(format="%(name)s: %(message)s")
        logging.getLogger("sparsezipper.isa").setLevel(logging.DEBUG)
    try:
        return _dispatch(args, out)
    except (UsageError, PreconditionError) as e:
        print(f"spz: {e}", file=sys.stderr)
        return 2
    except (OSError, ParseError, json.JSONDecodeError) as e:
        print(f"spz: {e}", file=sys.stderr)
        return 3
    except SpzError as e:
        print(f"spz: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
