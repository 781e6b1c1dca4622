"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 model-unstable, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .latency import ForkSaturatedError, confirmation_latency
from .optimize import OptimizationError, optimize_block_size
from .params import InvalidParameterError, ScenarioParams, load_scenario, validate_params
from .queue import MODEL_VARIANTS, OCCUPANCY, QueueModelError
from .sim import LOSER_POLICIES, SimConfig, run_replications, run_simulation

EXIT_OK, EXIT_USAGE, EXIT_UNSTABLE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _scenario_flags(p):
    g = p.add_argument_group("scenario")
    g.add_argument("--scenario", metavar="FILE", help="JSON scenario file; flags override it")
    g.add_argument("--mu", type=float, help="transaction arrival rate (tx/s)")
    g.add_argument("--lambda", dest="lam", type=float, help="per-miner mining rate (Hz)")
    g.add_argument("--miners", type=int)
    g.add_argument("--queue-size", type=int)
    g.add_argument("--block-size", dest="block_size_tx", type=int, help="transactions per block")
    g.add_argument("--timer", type=float, help="block formation timer (s)")
    g.add_argument("--capacity-bps", type=float)
    g.add_argument("--header-bits", type=float)
    g.add_argument("--tx-bits", type=float)
    g.add_argument("--fork-valid-tx", type=int)
    g.add_argument("--service-rate-mode", choices=("per-miner", "aggregate"))
    g.add_argument("--format", choices=("text", "jsonl"), default="text")


_SCENARIO_KEYS = ("mu", "lam", "miners", "queue_size", "block_size_tx", "timer", "capacity_bps",
                  "header_bits", "tx_bits", "fork_valid_tx", "service_rate_mode")


def _scenario(args) -> ScenarioParams:
    base = load_scenario(args.scenario) if args.scenario else ScenarioParams()
    changes = {k: getattr(args, k) for k in _SCENARIO_KEYS if getattr(args, k) is not None}
    return validate_params(base.__class__(**{**base.__dict__, **changes}))


def _num(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else format(v, ".10g")
    return str(v)


def _emit(fields: dict, fmt: str, out):
    if fmt == "jsonl":
        out.write(json.dumps({k: (None if isinstance(v, float) and math.isnan(v) else v)
                              for k, v in fields.items()}) + "\n")
    else:
        width = max(len(k) for k in fields)
        for k, v in fields.items():
            out.write(f"{k:<{width}}  {_num(v) if not isinstance(v, (list, dict)) else v}\n")


def cmd_model(args, out) -> int:
    p = _scenario(args)
    try:
        lat = confirmation_latency(p, timer_disabled=args.assumption1, variant=args.variant)
    except (QueueModelError, ForkSaturatedError) as exc:
        out.write(f"diagnostics  {exc}\n")
        return EXIT_UNSTABLE
    fields = {**lat.as_dict(), "blocking": lat.queue.blocking,
              "diagnostics": ",".join(lat.diagnostics) or "none"}
    _emit(fields, args.format, out)
    if lat.queue.saturated:
        sys.stderr.write("model-unstable: pool saturated, steady-state delay is not reliable\n")
        return EXIT_UNSTABLE
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    p = _scenario(args)
    cfg = SimConfig(p, sim_time=args.sim_time, seed=args.seed, forks_enabled=not args.no_forks,
                    warmup=args.warmup, loser_tx_policy=args.loser_policy)
    if args.trace:
        with open(args.trace, "w") as fh:
            run_simulation(cfg, trace=fh)
    seeds = [args.seed + i for i in range(args.replications)]
    if len(seeds) == 1:
        r = run_simulation(cfg)
        fields = {"seeds": 1, "mean_pool_delay": r.mean_pool_delay,
                  "pool_delay_ci95": r.ci_half_width,
                  "mean_confirmation_latency": r.mean_confirmation_latency,
                  "fork_rate": r.fork_rate, "drop_count": r.drop_count,
                  "blocks_mined": r.blocks_mined, "transactions_committed": r.transactions_committed,
                  "block_size_histogram": r.block_size_histogram}
    else:
        agg = run_replications(cfg, seeds)
        fields = {"seeds": len(seeds)}
        for k in agg.mean:
            fields[k] = agg.mean[k]
            fields[f"{k}_ci95"] = agg.ci[k]
    _emit(fields, args.format, out)
    return EXIT_OK


def cmd_optimize(args, out) -> int:
    p = _scenario(args)
    if args.nodes < 3:
        raise UsageError(f"--nodes must be >= 3 (got {args.nodes})")
    try:
        res = optimize_block_size(p, node_budget=args.nodes, b_max=args.bmax,
                                  propagation=args.propagation, variant=args.variant)
    except OptimizationError as exc:
        out.write(f"diagnostics  {exc}\n")
        return EXIT_UNSTABLE
    fields = {"b_star": res.b_star, "b_star_continuous": res.b_star_continuous,
              "t_bc_hat": res.t_bc_hat}
    _emit(fields, args.format, out)
    if args.format == "jsonl":
        _emit({"table": [[b, v] for b, v in res.table]}, "jsonl", out)
    else:
        out.write("b  t_bc_hat\n")
        for b, v in res.table:
            out.write(f"{b}  {_num(v)}\n")
    for d in res.diagnostics:
        out.write(f"note  {d}\n")
    return EXIT_OK


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def cmd_sweep(args, out) -> int:
    from .harness import load_sweep_spec, run_sweep, write_rows
    spec = load_sweep_spec(args.spec)
    if args.output:
        spec.output = args.output
    fmt = args.format or spec.format
    rows = run_sweep(spec, jobs=args.jobs)
    fh = out if spec.output in (None, "-") else _open_out(spec.output)
    try:
        write_rows(rows, fh, fmt=fmt)
    finally:
        if fh is not out:
            fh.close()
    return EXIT_OK


def cmd_validate(args, out) -> int:
    from .harness import render_report_csv, validate_preset
    seeds = list(range(args.seed, args.seed + args.replications))
    rep = validate_preset(args.preset, seeds=seeds, sim_time=args.sim_time, jobs=args.jobs,
                          variant=args.variant)
    text = rep.to_json() + "\n" if args.format == "json" else render_report_csv(rep)
    if args.output in (None, "-"):
        out.write(text)
    else:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
        for name, s in rep.summary.items():
            out.write(f"{name}: " + " ".join(f"{k}={_num(v)}" for k, v in s.items()) + "\n")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="powlat", description="PoW blockchain latency model and simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("model", help="analytical confirmation latency")
    _scenario_flags(m)

    s = sub.add_parser("simulate", help="discrete-event simulation")
    _scenario_flags(s)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--replications", type=int, default=1)
    s.add_argument("--sim-time", type=float, default=100_000.0)
    s.add_argument("--warmup", type=float, default=None)
    s.add_argument("--no-forks", action="store_true")
    s.add_argument("--loser-policy", choices=LOSER_POLICIES, default=LOSER_POLICIES[0])
    s.add_argument("--trace", metavar="FILE", help="write a tab-separated event trace")

    o = sub.add_parser("optimize", help="surrogate-based block size optimization")
    _scenario_flags(o)
    o.add_argument("--nodes", type=int, default=5)
    o.add_argument("--bmax", type=int, default=None)
    o.add_argument("--propagation", choices=("bits", "raw"), default="bits")

    for p in (m, o):
        p.add_argument("--variant", choices=MODEL_VARIANTS, default=OCCUPANCY)
    m.add_argument("--assumption1", action="store_true",
                   help="disable the formation timer (blocks always hold b transactions)")
    o.add_argument("--assumption1", action="store_true", help=argparse.SUPPRESS)

    w = sub.add_parser("sweep", help="run a sweep spec file")
    w.add_argument("spec")
    w.add_argument("--output")
    w.add_argument("--format", choices=("csv", "jsonl"))
    w.add_argument("--jobs", type=int, default=1)

    v = sub.add_parser("validate", help="model vs simulation for a figure preset")
    v.add_argument("preset", choices=("fig3", "fig4", "fig5"))
    v.add_argument("--output")
    v.add_argument("--format", choices=("json", "csv"), default="json")
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--replications", type=int, default=3)
    v.add_argument("--sim-time", type=float, default=100_000.0)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--variant", choices=MODEL_VARIANTS, default=OCCUPANCY)
    return parser


COMMANDS = {"model": cmd_model, "simulate": cmd_simulate, "optimize": cmd_optimize,
            "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except (InvalidParameterError, UsageError, ValueError) as exc:
        sys.stderr.write(f"powlat {args.command}: {exc}\n")
        return EXIT_USAGE
    except OSError as exc:
        sys.stderr.write(f"powlat {args.command}: {exc}\n")
        return EXIT_IO
    except QueueModelError as exc:
        sys.stderr.write(f"powlat {args.command}: {exc}\n")
        return EXIT_UNSTABLE


if __name__ == "__main__":
    sys.exit(main())
