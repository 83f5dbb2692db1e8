"""Command-line front end.

Subcommands::

    procmat validate  (--preset NAME | --input FILE) [--order A,B,...]
    procmat rob       {s|c|proc} (--preset NAME | --input FILE)
                      [--side primal|dual|both] [--witness-out FILE]
    procmat sample    --dims 2,2,2,2 --seed N [--count K] [--out-dir DIR]
    procmat seesaw    [--start NAME|FILE] [--seed N] [--rounds R]
    procmat convert   --from NAME|FILE --to NAME|FILE [--class ns|afp]
    procmat afp-search [--seeds N] [--rounds R]

Exit codes: 0 success / feasible; 1 domain-negative (invalid process);
2 usage or parse error; 3 negative finding (infeasible conversion, no
violation found); 4 solver failure.

Every run that produces artifacts writes a RunManifest JSON next to them;
``PROCMAT_TOL`` overrides the default equality tolerance.  All numeric
output is fixed-format and locale-independent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .labeled import (
    LabeledOperator,
    Tolerance,
    operator_dump,
    operator_from_json,
)
from .processes import (
    InvalidProcess,
    PartyLayout,
    ProcessMatrix,
    bipartite_layout,
    make_Z,
    make_a2b,
    make_b2a,
    make_free,
    make_mix,
    make_ocb,
    validate_process,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_FINDING = 3
EXIT_SOLVER = 4


def _tolerance() -> Tolerance:
    env = os.environ.get("PROCMAT_TOL")
    if env:
        try:
            return Tolerance(eps_eq=float(env))
        except ValueError:
            raise SystemExit(EXIT_USAGE)
    return Tolerance()


PRESETS = {
    "a2b": lambda: make_a2b().op,
    "b2a": lambda: make_b2a().op,
    "mix": lambda: make_mix(0.5).op,
    "ocb": lambda: make_ocb().op,
    "z": lambda: make_Z(),
    "free": lambda: make_free().op,
}


def _load_operator(args) -> tuple[LabeledOperator, PartyLayout]:
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            print(f"unknown preset {args.preset}", file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
        return PRESETS[args.preset](), bipartite_layout(2)
    path = getattr(args, "input", None)
    if not path:
        print("one of --preset/--input is required", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    try:
        with open(path) as fh:
            data = json.load(fh)
        op = operator_from_json(data)
        layout = (
            PartyLayout.from_json(data["layout"], op)
            if "layout" in data
            else bipartite_layout(2)
        )
        return op, layout
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read operator: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _resolve_process(name_or_path: str) -> ProcessMatrix:
    if name_or_path in PRESETS and name_or_path != "z":
        return ProcessMatrix.build(PRESETS[name_or_path](), bipartite_layout(2))
    try:
        with open(name_or_path) as fh:
            data = json.load(fh)
        op = operator_from_json(data)
        layout = (
            PartyLayout.from_json(data["layout"], op)
            if "layout" in data
            else bipartite_layout(2)
        )
        return ProcessMatrix.build(op, layout)
    except InvalidProcess:
        raise
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read process {name_or_path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_manifest(out_dir: Optional[str], command: str, args_dict: dict,
                    result: dict, t0: float, seed=None) -> None:
    if not out_dir:
        return
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "arguments": {k: v for k, v in args_dict.items() if k != "func"},
        "seed": seed,
        "tolerances": {"eps_eq": _tolerance().eps_eq},
        "tool_version": __version__,
        "wall_time_s": round(time.time() - t0, 3),
        "result": result,
    }
    with open(os.path.join(out_dir, f"manifest-{command}.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    t0 = time.time()
    op, layout = _load_operator(args)
    order = args.order.split(",") if args.order else None
    report = validate_process(op, layout, _tolerance(), order)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    _write_manifest(args.out_dir, "validate", vars(args), report.to_json(), t0)
    return EXIT_OK if report.accepted else EXIT_DOMAIN


def cmd_rob(args) -> int:
    from .robustness import causal_robustness, robustness_to_proc, \
        signalling_robustness

    t0 = time.time()
    op, layout = _load_operator(args)
    try:
        if args.kind == "proc":
            res = robustness_to_proc(op, layout)
        else:
            w = ProcessMatrix.build(op, layout, _tolerance())
            fn = signalling_robustness if args.kind == "s" else causal_robustness
            res = fn(w, side=args.side)
    except InvalidProcess as exc:
        print(f"invalid process: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if res.status != "optimal" or not np.isfinite(res.value):
        print(f"solver failure: {res.status}", file=sys.stderr)
        return EXIT_SOLVER
    print(_fmt(res.value))
    if not np.isnan(res.gap):
        print(f"gap {res.gap:.2e}")
    summary = {"value": res.value, "gap": None if np.isnan(res.gap) else res.gap}
    if args.witness_out and res.witness is not None:
        operator_dump(res.witness.op, args.witness_out)
        print(f"witness {args.witness_out}")
        summary["witness"] = args.witness_out
    if args.kind == "proc" and args.out_dir and res.T is not None:
        path = os.path.join(args.out_dir, "closest-process.json")
        os.makedirs(args.out_dir, exist_ok=True)
        operator_dump(res.T, path)
        summary["closest"] = path
    _write_manifest(args.out_dir, f"rob-{args.kind}", vars(args), summary, t0)
    return EXIT_OK


def cmd_sample(args) -> int:
    from .search import MaxRetriesExceeded, sample_process

    t0 = time.time()
    try:
        dims = [int(x) for x in args.dims.split(",")]
    except ValueError:
        print("bad --dims", file=sys.stderr)
        return EXIT_USAGE
    out_dir = args.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    try:
        for k in range(args.count):
            w = sample_process(dims, args.seed + k)
            path = os.path.join(out_dir, f"sample-{args.seed + k}.json")
            with open(path, "w") as fh:
                json.dump(w.to_json(), fh, sort_keys=True)
            paths.append(path)
            print(path)
    except MaxRetriesExceeded as exc:
        print(f"sampling failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write_manifest(out_dir, "sample", vars(args), {"files": paths}, t0,
                    seed=args.seed)
    return EXIT_OK


def cmd_seesaw(args) -> int:
    from .search import seesaw_causal

    t0 = time.time()
    w0 = _resolve_process(args.start) if args.start else None
    trace = seesaw_causal(w0, max_rounds=args.rounds, seed=args.seed)
    if trace.status != "ok":
        print(f"solver failure: {trace.status}", file=sys.stderr)
        return EXIT_SOLVER
    value = trace.best_value
    print(f"objective {_fmt(value)}")
    print(f"causal-robustness {_fmt(value - 1.0)}")
    print(f"rounds {len(trace.objectives)} converged {trace.converged}")
    summary = {"objective": value, "rounds": len(trace.objectives),
               "converged": trace.converged}
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "seesaw-process.json")
        operator_dump(trace.best_process, path)
        summary["process"] = path
    _write_manifest(args.out_dir, "seesaw", vars(args), summary, t0,
                    seed=args.seed)
    return EXIT_OK


def cmd_convert(args) -> int:
    from .search import SolverFailure, conversion_feasible

    t0 = time.time()
    w = _resolve_process(args.src)
    w_target = _resolve_process(args.dst)
    try:
        res = conversion_feasible(w, w_target, args.adapter_class)
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    summary = {"feasible": res.feasible}
    if res.feasible:
        print("FEASIBLE")
        print(f"residual {res.residual:.2e}")
        if args.out_dir:
            os.makedirs(args.out_dir, exist_ok=True)
            path = os.path.join(args.out_dir, "adapter.json")
            with open(path, "w") as fh:
                json.dump(res.adapter.to_json(), fh, sort_keys=True)
            print(f"adapter {path}")
            summary["adapter"] = path
        code = EXIT_OK
    else:
        print("INFEASIBLE")
        code = EXIT_FINDING
    _write_manifest(args.out_dir, "convert", vars(args), summary, t0)
    return code


def cmd_afp_search(args) -> int:
    from .search import search_afp_nonsep

    t0 = time.time()
    best = None
    per_seed = {}
    for seed in range(args.seeds):
        res = search_afp_nonsep(seed, rounds=args.rounds)
        per_seed[seed] = res.value
        print(f"seed {seed} value {_fmt(res.value)} {res.status}")
        if best is None or res.value < best.value:
            best = res
    print(f"best {_fmt(best.value)}")
    summary = {"best_value": best.value, "per_seed": per_seed,
               "rounds": args.rounds}
    if args.out_dir and best.adapter is not None:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "afp-adapter.json")
        with open(path, "w") as fh:
            json.dump(best.adapter.to_json(), fh, sort_keys=True)
        summary["adapter"] = path
    _write_manifest(args.out_dir, "afp-search", vars(args), summary, t0)
    return EXIT_OK if best.value < -1e-3 else EXIT_FINDING


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_io(sub, witness=False):
    sub.add_argument("--preset", choices=sorted(PRESETS))
    sub.add_argument("--input")
    sub.add_argument("--out-dir", dest="out_dir")
    if witness:
        sub.add_argument("--witness-out", dest="witness_out")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="procmat", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    subs = p.add_subparsers(dest="command", required=True)

    sv = subs.add_parser("validate", help="validate a process matrix")
    _add_io(sv)
    sv.add_argument("--order", help="comma-separated party order for combs")
    sv.set_defaults(func=cmd_validate)

    sr = subs.add_parser("rob", help="robustness monotones")
    sr.add_argument("kind", choices=["s", "c", "proc"])
    _add_io(sr, witness=True)
    sr.add_argument("--side", choices=["primal", "dual", "both"],
                    default="both")
    sr.set_defaults(func=cmd_rob)

    ss = subs.add_parser("sample", help="sample random valid processes")
    ss.add_argument("--dims", default="2,2,2,2")
    ss.add_argument("--seed", type=int, default=0)
    ss.add_argument("--count", type=int, default=1)
    ss.add_argument("--out-dir", dest="out_dir")
    ss.set_defaults(func=cmd_sample)

    se = subs.add_parser("seesaw", help="causal-robustness seesaw search")
    se.add_argument("--start", help="preset name or process file")
    se.add_argument("--seed", type=int, default=0)
    se.add_argument("--rounds", type=int, default=200)
    se.add_argument("--out-dir", dest="out_dir")
    se.set_defaults(func=cmd_seesaw)

    sc = subs.add_parser("convert", help="adapter conversion feasibility")
    sc.add_argument("--from", dest="src", required=True)
    sc.add_argument("--to", dest="dst", required=True)
    sc.add_argument("--class", dest="adapter_class", choices=["ns", "afp"],
                    default="ns")
    sc.add_argument("--out-dir", dest="out_dir")
    sc.set_defaults(func=cmd_convert)

    sa = subs.add_parser("afp-search", help="AFP non-separability search")
    sa.add_argument("--seeds", type=int, default=1)
    sa.add_argument("--rounds", type=int, default=6)
    sa.add_argument("--out-dir", dest="out_dir")
    sa.set_defaults(func=cmd_afp_search)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors already
        raise
    try:
        return args.func(args)
    except SystemExit:
        raise
    except json.JSONDecodeError:
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 — CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
