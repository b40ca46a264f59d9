"""Command line entry point ``nhflow``.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration or
integration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from .diagnostics import Report, order_test_one_step
from .potentials import ConfigurationError
from .scenarios import (
    ScenarioConfig,
    bundled_configs,
    build,
    emit_csv,
    emit_summary,
    load_config,
    run_scenario,
    summary_document,
)
from .system import RankDegeneracyError

log = logging.getLogger("nhflow")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _prefix(config: ScenarioConfig) -> str:
    return config.outputs.csv_prefix or config.name


def _write_trajectories(result, out_dir: Path) -> list[Path]:
    prefix = _prefix(result.config)
    return [emit_csv(traj, out_dir / f"{prefix}_{kind}.csv") for kind, traj in result.trajectories.items()]


def cmd_simulate(config: ScenarioConfig, args) -> int:
    result = run_scenario(config, args.substeps, with_checks=False)
    for path in _write_trajectories(result, args.out_dir):
        print(path)
    for err in result.errors:
        print(f"error: {err['item']}: {err['error']}", file=sys.stderr)
    return EXIT_ERROR if result.errors else EXIT_OK


def _print_reports(reports: list[Report]):
    for rep in reports:
        status = rep.to_dict()["status"].upper()
        print(f"{status:6s} {rep.check}")


def cmd_check(config: ScenarioConfig, args) -> int:
    result = run_scenario(config, args.substeps)
    _write_trajectories(result, args.out_dir)
    path = emit_summary(result.reports, args.out_dir / config.summary_name, result)
    _print_reports(result.reports)
    for err in result.errors:
        print(f"error: {err['item']}: {err['error']}", file=sys.stderr)
    print(path)
    return result.exit_code


def cmd_order_test(config: ScenarioConfig, args) -> int:
    b = build(config, args.substeps)
    eps_list = args.eps
    if eps_list is None:
        declared = [c for c in config.checks if c.type == "order_test"]
        eps_list = declared[0].eps_list if declared else [b.params.epsilon / 2**k for k in range(4)]
    rep = order_test_one_step(b.sys, b.scheme, b.potential, b.params.gamma, b.x0, b.t0, eps_list,
                              substeps=b.settings.substeps_per_period)
    path = emit_summary([rep], args.out_dir / f"{config.name}_order_test.json")
    _print_reports([rep])
    print(f"slope {rep.metrics['slope']}")
    print(path)
    return EXIT_FAIL if rep.passed is False else EXIT_OK


_SWEEP_PATHS = {"gamma": "params.gamma", "epsilon": "params.epsilon"}


def _sweep_item(payload):
    config_json, value, param, out_dir, substeps = payload
    config = ScenarioConfig.model_validate_json(config_json)
    config = config.with_overrides(**{_SWEEP_PATHS[param]: value, "outputs.csv_prefix": f"{config.name}_{param}_{value:g}"})
    try:
        result = run_scenario(config, substeps)
    except (ConfigurationError, RankDegeneracyError, ValueError, ArithmeticError) as exc:
        return {"value": value, "exit_code": EXIT_ERROR, "errors": [{"item": "scenario", "error": str(exc)}], "checks": []}
    _write_trajectories(result, out_dir)
    doc = summary_document(result)
    return {"value": value, "exit_code": result.exit_code, "errors": doc["errors"], "checks": doc["checks"]}


def cmd_sweep(config: ScenarioConfig, args) -> int:
    payloads = [(config.model_dump_json(), float(v), args.param, args.out_dir, args.substeps) for v in args.values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            items = list(pool.map(_sweep_item, payloads))
    else:
        items = [_sweep_item(p) for p in payloads]
    doc = {"scenario": config.name, "param": args.param, "items": items}
    path = args.out_dir / f"{config.name}_sweep_{args.param}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n")
    for it in items:
        statuses = ", ".join(f"{c['check']}={c['status']}" for c in it["checks"])
        print(f"{args.param}={it['value']:g}: exit {it['exit_code']} {statuses}")
    print(path)
    codes = [it["exit_code"] for it in items]
    return max(codes) if codes else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nhflow", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log integration progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help=f"scenario file or bundled name ({', '.join(bundled_configs())})")
        p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for CSV and summary files")
        p.add_argument("--seed", type=int, default=None, help="reserved; every component is deterministic")
        p.add_argument("--substeps", type=int, default=None, help="RK4 steps per sampling period (>= 20)")
        return p

    common(sub.add_parser("simulate", help="integrate and write trajectory CSVs")).set_defaults(fn=cmd_simulate)
    common(sub.add_parser("check", help="integrate, run declared checks, write a summary")).set_defaults(fn=cmd_check)
    p = common(sub.add_parser("order-test", help="one-period order-of-accuracy test"))
    p.add_argument("--eps", type=float, nargs="+", default=None, help="decreasing geometric epsilon list")
    p.set_defaults(fn=cmd_order_test)
    p = common(sub.add_parser("sweep", help="repeat `check` over a parameter grid"))
    p.add_argument("--param", choices=sorted(_SWEEP_PATHS), required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config)
        if args.substeps is not None and args.substeps < 20:
            raise ConfigurationError("--substeps must be at least 20")
        return args.fn(config, args)
    except (ConfigurationError, RankDegeneracyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
