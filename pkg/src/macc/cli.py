"""Operator command line.

Exit codes: 0 success, 2 validation error, 3 io/runtime error, 4 auth
failure.  All compute commands emit deterministic CSV (and trajectory
logs); `report` renders figures from those files.
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys

from . import protocol
from .client import AgentClient, resolve_token
from .errors import AuthFailed, InvalidScenario, MaccError
from .mechopt import ESConfig, WelfareWeights, train_mechanism, write_curve_csv, write_theta_json
from .scenario import apply_vary, load_scenario, parse_vary_value
from .server import Server, load_tokens
from .sim import (
    METRICS_COLUMNS,
    Metrics,
    metrics_csv_header,
    metrics_csv_row,
    run,
    write_metrics_csv,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_AUTH = 4


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_sim(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            from dataclasses import replace

            scenario = replace(scenario, master_seed=args.seed).validate()
    except InvalidScenario as e:
        return _fail(EXIT_VALIDATION, f"scenario: {e}")
    try:
        trajectory, metrics = run(scenario)
        rows = [metrics_csv_row(args.scenario, scenario.master_seed, metrics)]
        write_metrics_csv(args.out, rows)
        if args.log:
            trajectory.write_log(args.log)
    except OSError as e:
        return _fail(EXIT_RUNTIME, str(e))
    return EXIT_OK


def _summary_rows(per_value: dict[str, list[Metrics]], vary_key: str) -> list[str]:
    header = ["vary_key", "vary_value", "runs"]
    for column in METRICS_COLUMNS[4:]:
        header += [f"{column}_mean", f"{column}_stderr"]
    lines = [",".join(header)]
    for value, metrics_list in per_value.items():
        cells = [vary_key, str(value), str(len(metrics_list))]
        for column in METRICS_COLUMNS[4:]:
            samples = [float(getattr(m, column)) if column != "best_true_score"
                       else m.best_true_score for m in metrics_list]
            mean = statistics.fmean(samples)
            stderr = (statistics.stdev(samples) / len(samples) ** 0.5
                      if len(samples) > 1 else 0.0)
            cells += [repr(mean), repr(stderr)]
        lines.append(",".join(cells))
    return lines


def cmd_sweep(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        lo, _, hi = args.seeds.partition("..")
        seeds = list(range(int(lo), int(hi) + 1)) if hi else [int(lo)]
        if args.vary:
            key, _, raw_values = args.vary.partition("=")
            if not raw_values:
                raise InvalidScenario("--vary expects key=v1,v2,...")
            values = [parse_vary_value(key, v) for v in raw_values.split(",")]
        else:
            key, values = "", [None]
    except (InvalidScenario, ValueError) as e:
        return _fail(EXIT_VALIDATION, str(e))
    try:
        os.makedirs(args.out, exist_ok=True)
        from dataclasses import replace

        rows = []
        per_value: dict[str, list[Metrics]] = {}
        for value in values:
            varied = apply_vary(scenario, key, value) if key else scenario
            for seed in seeds:
                seeded = replace(varied, master_seed=seed).validate()
                _, metrics = run(seeded)
                rows.append(metrics_csv_row(args.scenario, seed, metrics,
                                            vary_key=key,
                                            vary_value="" if value is None else str(value)))
                per_value.setdefault("" if value is None else str(value), []).append(metrics)
        write_metrics_csv(os.path.join(args.out, "runs.csv"), rows)
        with open(os.path.join(args.out, "summary.csv"), "w", encoding="utf-8") as f:
            f.write("\n".join(_summary_rows(per_value, key)) + "\n")
    except InvalidScenario as e:
        return _fail(EXIT_VALIDATION, str(e))
    except OSError as e:
        return _fail(EXIT_RUNTIME, str(e))
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        tokens = load_tokens(args.tokens)
        server = Server(scenario, tokens, mode=args.mode, port=args.port,
                        round_time=args.round_time)
    except (InvalidScenario, MaccError) as e:
        return _fail(EXIT_VALIDATION, str(e))
    except OSError as e:
        return _fail(EXIT_RUNTIME, str(e))
    try:
        trajectory, metrics = server.serve()
        rows = [metrics_csv_row(args.scenario, scenario.master_seed, metrics)]
        write_metrics_csv(args.out, rows)
        if args.log:
            trajectory.write_log(args.log)
    except OSError as e:
        return _fail(EXIT_RUNTIME, str(e))
    return EXIT_OK


def cmd_agent(args) -> int:
    host, _, port = args.connect.partition(":")
    try:
        token = resolve_token(args.token)
        client = AgentClient(host or "127.0.0.1",
                             int(port) if port else protocol.DEFAULT_PORT,
                             token, name=args.name, policy_override=args.policy)
        client.run()
    except AuthFailed as e:
        return _fail(EXIT_AUTH, str(e))
    except (MaccError, OSError, ValueError) as e:
        return _fail(EXIT_RUNTIME, str(e))
    return EXIT_OK


def cmd_train_mech(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        weights = WelfareWeights(*(float(v) for v in args.weights.split(",")))
        population, sigma, step, iters = args.es.split(",")
        es = ESConfig(population=int(population), sigma_es=float(sigma),
                      step_size=float(step), iterations=int(iters),
                      base_seed=args.es_seed).validate()
    except (InvalidScenario, ValueError, TypeError) as e:
        return _fail(EXIT_VALIDATION, str(e))
    except MaccError as e:
        return _fail(EXIT_VALIDATION, str(e))
    try:
        result = train_mechanism(scenario, weights, es)
    except InvalidScenario as e:
        return _fail(EXIT_VALIDATION, str(e))
    try:
        os.makedirs(args.out, exist_ok=True)
        write_theta_json(os.path.join(args.out, "theta.json"), result.theta)
        write_curve_csv(os.path.join(args.out, "curve.csv"), result)
    except OSError as e:
        return _fail(EXIT_RUNTIME, str(e))
    return EXIT_OK


def cmd_report(args) -> int:
    from . import report

    try:
        written: list[str] = []
        for path in args.paths:
            written.extend(report.render_path(path))
    except (OSError, ValueError, MaccError) as e:
        return _fail(EXIT_RUNTIME, str(e))
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macc",
        description="Run incentive-driven exploration communities and study "
                    "their institutional designs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="run one seeded simulation")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--out", default="metrics.csv")
    p.add_argument("--log", default=None, help="write the trajectory log here")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("sweep", help="run seeds x values and summarize")
    p.add_argument("scenario")
    p.add_argument("--seeds", required=True, help="a..b inclusive, or a single seed")
    p.add_argument("--vary", default=None, help="key=v1,v2,... (institution or agent field)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="host a networked session")
    p.add_argument("scenario")
    p.add_argument("--port", type=int, default=protocol.DEFAULT_PORT)
    p.add_argument("--mode", choices=("refereed", "open"), default="refereed")
    p.add_argument("--tokens", required=True, help="token file, one per roster slot")
    p.add_argument("--round-time", type=float, default=2.0)
    p.add_argument("--out", default="metrics.csv")
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("agent", help="join a server and play a policy")
    p.add_argument("--connect", default=f"127.0.0.1:{protocol.DEFAULT_PORT}")
    p.add_argument("--policy", default=None,
                   help="override the server-assigned policy")
    p.add_argument("--token", default=None, help="defaults to $MACC_TOKEN")
    p.add_argument("--name", default="")
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("train-mech", help="optimize the neural mechanism")
    p.add_argument("scenario")
    p.add_argument("--weights", default="1,1,1,0.1",
                   help="w_best,w_redund,w_repro,w_cost")
    p.add_argument("--es", default="64,0.05,0.1,30",
                   help="population,sigma,step,iterations")
    p.add_argument("--es-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="directory for theta.json and curve.csv")
    p.set_defaults(func=cmd_train_mech)

    p = sub.add_parser("report", help="render figures from produced CSV/log files")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
