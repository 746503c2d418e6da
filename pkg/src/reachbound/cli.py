"""Command-line frontend.

Subcommands: solve, simulate, generate, fixture.  Exit codes: 0 for a
converged solve, 2 for an anytime (budget-limited) result, 1 for usage or
model errors.  Diagnostics go to stderr; the human summary to stdout.
"""

import argparse
import json
import re
import sys

from . import models
from .explore import HeuristicConfig
from .graph import MERGE_TOL
from .policy import AlphaPolicy, simulate
from .pomdp import ReachboundError, augment
from .solver import SolverConfig, solve

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ANYTIME = 2

_DURATION = re.compile(r"^\s*(\d+(?:\.\d*)?)\s*(ms|s|m|h)?\s*$")
_DURATION_UNITS = {"ms": 1e-3, "s": 1.0, "m": 60.0, "h": 3600.0, None: 1.0}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; this CLI reserves 2 for
    # anytime results, so usage problems must surface as exit 1.
    def error(self, message):
        raise _UsageError(message)


def parse_duration(text: str) -> float:
    m = _DURATION.match(text)
    if not m:
        raise _UsageError(f"cannot parse duration {text!r} (try '30s', '2m', '1.5h')")
    return float(m.group(1)) * _DURATION_UNITS[m.group(2)]


def _add_model_source(sub):
    sub.add_argument("model", nargs="?", help="model file in the text format")
    sub.add_argument("--preset", choices=sorted(models.PRESET_SPECS),
                     help="built-in benchmark instead of a model file")


def _add_solver_flags(sub):
    sub.add_argument("--epsilon", type=float, default=1e-3,
                     help="target gap at the initial belief (default 1e-3)")
    sub.add_argument("--gamma", type=float, default=1.0,
                     help="discount; 1 solves the undiscounted reachability problem")
    sub.add_argument("--heuristic", choices=["reachability", "hsvi2"],
                     default="reachability",
                     help="trial heuristics; hsvi2 is the discounted-baseline mode")
    sub.add_argument("--mix-p", type=float, default=0.0,
                     help="probability of using the plain excess-uncertainty "
                          "observation rule instead of the count-bonus rule")
    sub.add_argument("--c-a", type=float, default=0.01, help="action exploration constant")
    sub.add_argument("--c-z", type=float, default=0.01, help="observation exploration constant")
    sub.add_argument("--xi", type=float, default=0.1, help="action selection radius")
    sub.add_argument("--kappa", type=float, default=0.01, help="trial gap-shrink factor")
    sub.add_argument("--literal-observation-rule", action="store_true",
                     help="score observations with the node's own excess "
                          "uncertainty (constant) plus the count bonus")
    sub.add_argument("--trials-per-vi", type=int, default=10,
                     help="trials between exact VI passes (default 10)")
    sub.add_argument("--d-trial", type=int, default=200, help="initial trial depth cap")
    sub.add_argument("--d-inc", type=int, default=10, help="depth cap increase on stall")
    sub.add_argument("--stall-threshold", type=float, default=0.01,
                     help="root bound movement below which the run counts as stalled")
    sub.add_argument("--stall-window", type=int, default=None,
                     help="trials per stall check (default: trials-per-vi)")
    sub.add_argument("--vi-tol", type=float, default=1e-8,
                     help="sup-norm residual for exact VI sweeps")
    sub.add_argument("--prune-growth", type=float, default=0.10,
                     help="alpha-set growth fraction triggering pruning")
    sub.add_argument("--blind-steps", type=int, default=50,
                     help="fixed-action sweeps for the initial lower bound")
    sub.add_argument("--merge-tol", type=float, default=MERGE_TOL,
                     help="L-infinity tolerance for merging graph beliefs")
    sub.add_argument("--budget", default="900s",
                     help="wall-clock budget, e.g. 30s, 5m, 2h (default 900s)")
    sub.add_argument("--max-trials", type=int, default=None, help="trial budget")
    sub.add_argument("--max-steps", type=int, default=None, help="total trial-step budget")
    sub.add_argument("--seed", type=int, default=None,
                     help="fix every stochastic choice; also switches emitted "
                          "times to a logical event clock for reproducibility")


def _add_output_flags(sub):
    sub.add_argument("--trace", help="write the trace CSV here")
    sub.add_argument("--result", help="write the result JSON here")
    sub.add_argument("--graph-dump", help="write the belief-graph text dump here")


def build_parser():
    parser = _Parser(prog="reachbound",
                     description="Two-sided bounds on POMDP maximal reachability")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("solve", help="solve a model or preset")
    _add_model_source(s)
    _add_solver_flags(s)
    _add_output_flags(s)

    s = subs.add_parser("simulate", help="solve, then Monte-Carlo evaluate the policy")
    _add_model_source(s)
    _add_solver_flags(s)
    _add_output_flags(s)
    s.add_argument("--episodes", type=int, default=100000)
    s.add_argument("--sim-steps", type=int, default=None,
                   help="episode step cap (default 10 * d-trial)")
    s.add_argument("--report", help="write the simulation report JSON here")

    s = subs.add_parser("generate", help="write a benchmark model file")
    s.add_argument("--family", choices=["chain", "grid-av", "refuel", "fixture-fig1"])
    s.add_argument("--preset", choices=sorted(models.PRESET_SPECS))
    s.add_argument("--n", type=int, help="family size parameter")
    s.add_argument("--slip", type=float, default=None, help="slip probability")
    s.add_argument("--coin-prob", type=float, default=0.5,
                   help="hidden-coin probability for fixture-fig1")
    s.add_argument("-o", "--output", required=True, help="output model path")

    s = subs.add_parser("fixture", help="write the loop fixture and its exact values")
    s.add_argument("--coin-prob", type=float, default=0.5)
    s.add_argument("-o", "--output", help="output model path")
    return parser


def _load(args):
    if args.preset and args.model:
        raise _UsageError("give either a model file or --preset, not both")
    if args.preset:
        return models.preset(args.preset)
    if args.model:
        return models.load_model(args.model)
    raise _UsageError("a model file or --preset is required")


def _solver_config(args) -> SolverConfig:
    heur = HeuristicConfig(
        c_a=args.c_a, c_z=args.c_z, xi=args.xi, kappa=args.kappa,
        mix_p=args.mix_p,
        mode="discounted-baseline" if args.heuristic == "hsvi2" else "reachability",
        gamma=args.gamma,
        literal_observation_rule=args.literal_observation_rule,
    )
    return SolverConfig(
        epsilon=args.epsilon, trials_per_vi=args.trials_per_vi,
        d_trial_init=args.d_trial, d_inc=args.d_inc,
        stall_threshold=args.stall_threshold, stall_window=args.stall_window,
        vi_tol=args.vi_tol, wall_clock_budget=parse_duration(args.budget),
        rng_seed=args.seed, heuristic=heur, prune_growth=args.prune_growth,
        blind_steps=args.blind_steps, merge_tol=args.merge_tol,
        max_trials=args.max_trials, max_steps=args.max_steps,
    )


def _run_solve(args, out):
    p = augment(_load(args))
    cfg = _solver_config(args)
    result = solve(p, cfg, trace_sink=args.trace)
    # Seeded runs promise byte-identical outputs, so every emitted time is
    # the logical event clock; unseeded runs report wall-clock seconds.
    time_s = result.wall_time if cfg.rng_seed is None else float(len(result.trace))
    print(f"lower {result.lower:.12g}", file=out)
    print(f"upper {result.upper:.12g}", file=out)
    print(f"gap {result.gap:.12g}", file=out)
    print(f"time {time_s:.12g}", file=out)
    print(f"beliefs {result.beliefs_expanded}", file=out)
    if args.result:
        payload = result.to_dict()
        payload["wall_time"] = time_s
        with open(args.result, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
    if args.graph_dump:
        with open(args.graph_dump, "w", encoding="utf-8") as fh:
            fh.write(result.graph.dump(result.lower_set.value, result.upper_set.value))
    return p, result


def cmd_solve(args, out):
    _, result = _run_solve(args, out)
    return EXIT_OK if result.converged else EXIT_ANYTIME


def cmd_simulate(args, out):
    p, result = _run_solve(args, out)
    policy = AlphaPolicy(result.policy, p)
    max_steps = args.sim_steps if args.sim_steps else 10 * args.d_trial
    report = simulate(policy, args.episodes, max_steps,
                      args.seed if args.seed is not None else 0)
    print(f"estimate {report.estimate:.12g}", file=out)
    print(f"ci99 {report.ci99:.12g}", file=out)
    print(f"truncated {report.truncated}", file=out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    return EXIT_OK if result.converged else EXIT_ANYTIME


def cmd_generate(args, out):
    if bool(args.family) == bool(args.preset):
        raise _UsageError("give exactly one of --family or --preset")
    if args.preset:
        p = models.preset(args.preset)
    else:
        family = args.family.replace("-", "_")
        if family == "fixture_fig1":
            p = models.loop_fixture(args.coin_prob).pomdp
        else:
            if args.n is None:
                raise _UsageError(f"--family {args.family} needs --n")
            # --n selects the matching preset layout when one exists, so
            # generate --family X --n K equals solve --preset X-K.
            preset_name = {"chain": f"chain-{args.n}", "grid_av": f"grid-av-{args.n}",
                           "refuel": f"refuel-{args.n}"}[family]
            if preset_name in models.PRESET_SPECS and args.slip is None:
                p = models.preset(preset_name)
            else:
                kwargs = {"n_steps" if family == "chain" else "n": args.n}
                if args.slip is not None:
                    kwargs["slip"] = args.slip
                p = models.build_family(family, **kwargs)
    models.save_model(p, args.output)
    print(f"wrote {args.output} ({p.n_states} states, {p.n_actions} actions, "
          f"{p.n_observations} observations)", file=out)
    return EXIT_OK


def cmd_fixture(args, out):
    fx = models.loop_fixture(args.coin_prob)
    if args.output:
        models.save_model(fx.pomdp, args.output)
        print(f"wrote {args.output}", file=out)
    for name in ("b1", "b2", "b3", "b4", "goal", "dead"):
        print(f"{name} optimal {fx.optimal_values[name]:.12g}", file=out)
    return EXIT_OK


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "solve": cmd_solve,
            "simulate": cmd_simulate,
            "generate": cmd_generate,
            "fixture": cmd_fixture,
        }[args.command]
        return handler(args, out)
    except _UsageError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_ERROR
    except (ReachboundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
