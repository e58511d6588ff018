"""Command-line entry point.

Commands: serve, run-scenario, run-ca, gen-ca, falsify, plot.  Exit codes:
0 on success, 2 for usage or validation problems, 3 for protocol or session
failures.  All outputs are deterministic functions of the inputs and --seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import covering, falsify as fz, scenario, supervisor, wire

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PROTOCOL = 3


@dataclass
class CommandOutcome:
    """What a command did: its exit code and every file it wrote."""

    exit_code: int = EXIT_OK
    artifacts: list[str] = field(default_factory=list)


class CommandError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_USAGE):
        self.exit_code = exit_code
        super().__init__(message)


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise CommandError(f"bad endpoint {text!r}; expected host:port")
    return host, int(port)


def _load_scenario_file(path: str):
    if not os.path.exists(path):
        raise CommandError(f"scenario file not found: {path}")
    try:
        return scenario.load_scenario(path)
    except scenario.ScenarioFormatError as exc:
        raise CommandError(f"invalid scenario: {exc}")


# --------------------------------------------------------------------------
# serve


def cmd_serve(args: argparse.Namespace) -> CommandOutcome:
    try:
        server = supervisor.SupervisorServer(host=args.host, port=args.port, seed=args.seed)
    except OSError as exc:
        raise CommandError(f"cannot listen on {args.host}:{args.port}: {exc}")
    print(f"supervisor listening on {server.host}:{server.port}")
    server.serve_forever()
    return CommandOutcome()


# --------------------------------------------------------------------------
# run-scenario


def cmd_run_scenario(args: argparse.Namespace) -> CommandOutcome:
    env, config = _load_scenario_file(args.scenario)
    violations = scenario.validate_environment(env)
    if violations:
        for v in violations:
            print(f"validation: {v}", file=sys.stderr)
        raise CommandError(f"scenario has {len(violations)} validation problem(s)")

    if args.embedded:
        try:
            result = supervisor.run_embedded(env, config, seed=args.seed)
        except supervisor.SetupError as exc:
            raise CommandError(str(exc))
        trajectory = result.trajectory
    else:
        endpoint = (
            _parse_endpoint(args.endpoint)
            if args.endpoint
            else (config.server_ip, config.server_port)
        )
        try:
            trajectory = wire.client_session(endpoint, env, config)
        except wire.ProtocolSessionError as exc:
            raise CommandError(str(exc), EXIT_PROTOCOL)

    print(f"simulated {config.sim_duration_ms} ms, {trajectory.n_rows} trace rows")
    outcome = CommandOutcome()
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            fh.write(supervisor.trajectory_to_csv(trajectory))
        outcome.artifacts.append(args.trace_out)
        print(f"trace written to {args.trace_out}")
    return outcome


# --------------------------------------------------------------------------
# run-ca


def cmd_run_ca(args: argparse.Namespace) -> CommandOutcome:
    if not os.path.exists(args.bindings):
        raise CommandError(f"bindings file not found: {args.bindings}")
    with open(args.bindings, "r", encoding="utf-8") as fh:
        binding = json.load(fh)
    if not isinstance(binding, dict):
        raise CommandError("bindings file must map parameter names to scenario paths")

    env, config = _load_scenario_file(args.scenario)
    template = {
        "environment": scenario.environment_to_json(env),
        "config": scenario.config_to_json(config),
    }
    try:
        table = covering.load_experiment_data(args.csv, header_line_count=args.header_lines)
    except (OSError, covering.CsvFormatError) as exc:
        raise CommandError(f"cannot load test CSV: {exc}")

    os.makedirs(args.out_dir, exist_ok=True)
    outcome = CommandOutcome()
    sim_results: dict[int, supervisor.SimulationResult] = {}

    def runner_for(index: int):
        def runner(doc: dict):
            row_env = scenario.environment_from_json(doc["environment"])
            row_config = scenario.config_from_json(doc["config"])
            result = supervisor.run_embedded(row_env, row_config, seed=args.seed)
            sim_results[index] = result
            return result.trajectory

        return runner

    result = covering.SuiteResult()
    indices = list(range(len(table.rows)))

    def run_row(index: int):
        one_row = covering.TestTable(table.parameter_names, [table.rows[index]])
        row_result = covering.run_test_suite(one_row, template, binding, runner_for(index))
        return index, row_result

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        for index, row_result in pool.map(run_row, indices):
            if 0 in row_result.trajectories:
                result.trajectories[index] = row_result.trajectories[0]
            if 0 in row_result.failures:
                result.failures[index] = row_result.failures[0]

    summary = {"rows": []}
    for index in indices:
        entry: dict = {"index": index, "case": covering.get_experiment_all_fields(table, index)}
        if index in result.failures:
            entry["status"] = "failed"
            entry["error"] = result.failures[index]
        else:
            trajectory = result.trajectories[index]
            trace_path = os.path.join(args.out_dir, f"trace_{index:03d}.csv")
            with open(trace_path, "w", encoding="utf-8") as fh:
                fh.write(supervisor.trajectory_to_csv(trajectory))
            outcome.artifacts.append(trace_path)
            sim = sim_results[index]
            entry["status"] = "ok"
            entry["trace"] = os.path.basename(trace_path)
            entry["min_vehicle_gap_m"] = (
                None if math.isinf(sim.min_vehicle_gap) else sim.min_vehicle_gap
            )
            entry["collision"] = bool(sim.contacts)
        summary["rows"].append(entry)

    summary_path = os.path.join(args.out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    outcome.artifacts.append(summary_path)
    ok = sum(1 for e in summary["rows"] if e["status"] == "ok")
    print(f"{ok}/{len(indices)} test cases succeeded; summary at {summary_path}")
    return outcome


# --------------------------------------------------------------------------
# gen-ca


def cmd_gen_ca(args: argparse.Namespace) -> CommandOutcome:
    if args.strength < 1:
        raise CommandError(f"strength must be >= 1, got {args.strength}")
    try:
        params = covering.load_param_specs(args.params)
    except (OSError, ValueError) as exc:
        raise CommandError(f"cannot load parameter file: {exc}")
    if args.strength > len(params):
        raise CommandError(
            f"strength {args.strength} exceeds the {len(params)} declared parameters"
        )
    table = covering.generate_covering_array(params, args.strength, seed=args.seed)
    uncovered = covering.verify_coverage(table, params, args.strength)
    if uncovered:
        raise CommandError(f"internal error: generator left {len(uncovered)} tuples uncovered")
    covering.write_experiment_data(table, args.out)
    print(f"{len(table.rows)} test cases with full {args.strength}-way coverage -> {args.out}")
    return CommandOutcome(artifacts=[args.out])


# --------------------------------------------------------------------------
# falsify


def cmd_falsify(args: argparse.Namespace) -> CommandOutcome:
    if not os.path.exists(args.study):
        raise CommandError(f"study file not found: {args.study}")
    try:
        study = fz.load_study(args.study)
    except (ValueError, OSError, scenario.ScenarioFormatError) as exc:
        raise CommandError(f"invalid study: {exc}")
    if args.seed is not None:
        study.config.seed = args.seed

    results = fz.run_study(study)
    fz.save_results(results, args.out)

    best = min(results, key=lambda r: r.best_robustness)
    if best.falsified:
        print(f"FALSIFIED rob={best.best_robustness!r} sample={best.best_sample}")
    else:
        print(f"NOT FALSIFIED best={best.best_robustness!r}")
    total = sum(r.n_simulations_used for r in results)
    print(f"{len(results)} run(s), {total} simulations; results at {args.out}")
    return CommandOutcome(artifacts=[args.out])


# --------------------------------------------------------------------------
# plot

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def render_svg(trajectory, pairs: list[tuple[str, str]]) -> str:
    """One polyline per requested x:y column pair, margins at 5% of extents."""
    names = scenario.column_names(trajectory.column_labels)
    col = {name: i for i, name in enumerate(names)}
    for x_name, y_name in pairs:
        for name in (x_name, y_name):
            if name not in col:
                raise CommandError(f"unknown trace column {name!r}; have {', '.join(names)}")
    if trajectory.n_rows == 0:
        raise CommandError("trace has no rows to plot")

    xs_all, ys_all = [], []
    series = []
    for x_name, y_name in pairs:
        xs = [float(v) for v in trajectory.rows[:, col[x_name]]]
        ys = [float(v) for v in trajectory.rows[:, col[y_name]]]
        series.append((xs, ys))
        xs_all.extend(xs)
        ys_all.extend(ys)

    def padded(lo: float, hi: float) -> tuple[float, float]:
        span = hi - lo
        pad = 0.05 * span if span > 0 else max(0.5, 0.05 * abs(hi) if hi else 0.5)
        return lo - pad, hi + pad

    x_lo, x_hi = padded(min(xs_all), max(xs_all))
    y_lo, y_hi = padded(min(ys_all), max(ys_all))

    width, height = 640.0, 480.0

    def to_px(x: float, y: float) -> tuple[float, float]:
        px = (x - x_lo) / (x_hi - x_lo) * width
        py = height - (y - y_lo) / (y_hi - y_lo) * height
        return px, py

    lines = [
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}" '
        f'data-extent-x="{x_lo!r} {x_hi!r}" data-extent-y="{y_lo!r} {y_hi!r}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    for k, ((xs, ys), (x_name, y_name)) in enumerate(zip(series, pairs)):
        color = _PALETTE[k % len(_PALETTE)]
        points = " ".join(
            f"{px:.3f},{py:.3f}" for px, py in (to_px(x, y) for x, y in zip(xs, ys))
        )
        lines.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'data-x="{x_name}" data-y="{y_name}" points="{points}"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def cmd_plot(args: argparse.Namespace) -> CommandOutcome:
    if not os.path.exists(args.trace):
        raise CommandError(f"trace file not found: {args.trace}")
    with open(args.trace, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        trajectory = supervisor.trajectory_from_csv(text)
    except ValueError as exc:
        raise CommandError(f"cannot parse trace CSV: {exc}")

    pairs = []
    for spec in args.columns:
        x_name, sep, y_name = spec.partition(":")
        if not sep or not x_name or not y_name:
            raise CommandError(f"bad column pair {spec!r}; expected xcol:ycol")
        pairs.append((x_name, y_name))
    svg = render_svg(trajectory, pairs)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(f"{len(pairs)} series plotted to {args.out}")
    return CommandOutcome(artifacts=[args.out])


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avtestbed",
        description="Scenario simulation, combinatorial testing, and falsification tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="start a simulation supervisor server")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, default=10021, help="TCP port (default 10021)")
    p.add_argument("--seed", type=int, default=0, help="kernel seed for served simulations")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run-scenario", help="execute one scenario and collect its trace")
    p.add_argument("scenario", help="scenario JSON document")
    p.add_argument("--endpoint", help="supervisor host:port (default: from the scenario config)")
    p.add_argument("--embedded", action="store_true", help="run in-process without sockets")
    p.add_argument("--trace-out", help="write the trace as CSV to this path")
    p.add_argument("--seed", type=int, default=0, help="kernel seed")
    p.set_defaults(func=cmd_run_scenario)

    p = sub.add_parser("run-ca", help="run every test case of a covering-array CSV")
    p.add_argument("csv", help="test table CSV")
    p.add_argument("scenario", help="scenario template JSON document")
    p.add_argument("bindings", help="JSON mapping of parameter name to scenario path")
    p.add_argument("--out-dir", default="ca_out", help="directory for traces and summary")
    p.add_argument("--header-lines", type=int, default=6, help="comment lines before the name row")
    p.add_argument("--jobs", type=int, default=1, help="concurrent test executions")
    p.add_argument("--seed", type=int, default=0, help="kernel seed")
    p.set_defaults(func=cmd_run_ca)

    p = sub.add_parser("gen-ca", help="generate a t-way covering array")
    p.add_argument("params", help="parameter system JSON file")
    p.add_argument("--strength", "-t", type=int, required=True, help="interaction strength t")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.set_defaults(func=cmd_gen_ca)

    p = sub.add_parser("falsify", help="robustness-guided search over a study file")
    p.add_argument("study", help="falsification study JSON file")
    p.add_argument("--out", default="results.json", help="results output path")
    p.add_argument("--seed", type=int, default=None, help="override the study seed")
    p.set_defaults(func=cmd_falsify)

    p = sub.add_parser("plot", help="render trace columns as an SVG path plot")
    p.add_argument("trace", help="trace CSV file")
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument(
        "--columns",
        nargs="+",
        required=True,
        metavar="XCOL:YCOL",
        help="one or more column pairs, e.g. vehicle0_position_x:vehicle0_position_y",
    )
    p.set_defaults(func=cmd_plot)
    return parser


def run_command(argv: list[str] | None = None) -> CommandOutcome:
    """Parse and execute one command, reporting what it wrote."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CommandOutcome(exit_code=exc.exit_code)


def main(argv: list[str] | None = None) -> int:
    return run_command(argv).exit_code


if __name__ == "__main__":
    sys.exit(main())
