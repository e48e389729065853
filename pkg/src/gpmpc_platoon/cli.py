"""Command-line entry point: generate-data, train, simulate, compare, plot.

Exit codes: 0 success, 1 other I/O error, 2 configuration error,
3 missing input artifact, 4 controller failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import gp_regression as gpr
from . import svg_plot
from .config import ConfigError, RunConfig, load_config
from .hv_model import (
    arx_gp_rollout,
    arx_rollout,
    build_discrepancy_dataset,
    merge_datasets,
    one_step_predictions,
    read_truth_log,
    rmse,
    simulate_truth_hv,
    synthetic_av_trace,
    write_truth_log,
)
from .sim_harness import SCENARIOS, SimLog, compare, comparison_json, compute_metrics, run, table_text

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_CONTROLLER = 4

MODEL_FILE = "gp_model.txt"


class MissingArtifact(FileNotFoundError):
    pass


class ControllerFailure(RuntimeError):
    pass


# -- paths ------------------------------------------------------------------


def _out(cfg: RunConfig, *parts) -> Path:
    return Path(cfg.output.dir, *parts)


def _log_names(cfg: RunConfig) -> list[tuple[str, int, int]]:
    """(file stem, AV-trace seed, truth seed) for every train/test log."""
    base = 1000 * cfg.data.seed
    out = [(f"train_{i:02d}", base + i, base + 500 + i) for i in range(cfg.data.n_train)]
    out += [(f"test_{i:02d}", base + 100 + i, base + 600 + i) for i in range(cfg.data.n_test)]
    return out


def write_manifest(cfg: RunConfig, command: str, argv_tail: list[str]) -> Path:
    path = _out(cfg, "manifests", f"{command}.ini")
    path.parent.mkdir(parents=True, exist_ok=True)
    header = f"# command: {' '.join([command] + argv_tail)}\n"
    path.write_text(header + cfg.to_ini())
    return path


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise MissingArtifact(f"{what} not found: {path}")
    return path


def _scenario_names(cfg: RunConfig) -> list[str]:
    return list(SCENARIOS) if cfg.scenario.name == "all" else [cfg.scenario.name]


# -- commands ---------------------------------------------------------------


def cmd_generate_data(cfg: RunConfig) -> list[Path]:
    d = cfg.data
    dt = cfg.mpc.dt
    folder = _out(cfg, "data")
    folder.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, av_seed, truth_seed in _log_names(cfg):
        av = synthetic_av_trace(d.duration, dt, av_seed, levels=d.levels, hold=(d.hold_min, d.hold_max))
        hv = simulate_truth_hv(cfg.truth_spec(truth_seed), av)
        times = np.arange(av.shape[0]) * dt
        path = folder / f"{stem}.csv"
        write_truth_log(path, times, hv, av)
        written.append(path)
    return written


def _load_logs(cfg: RunConfig, prefix: str) -> list[np.ndarray]:
    logs = []
    for stem, _, _ in _log_names(cfg):
        if stem.startswith(prefix):
            path = _require(_out(cfg, "data", f"{stem}.csv"), "truth log")
            logs.append(read_truth_log(path)[:, 1:])
    return logs


def train_report(cfg: RunConfig, model, test_logs: list[np.ndarray]) -> dict:
    """Free-run and one-step RMSE of ARX and ARX+GP on held-out logs."""
    coeffs = cfg.arx_coefficients()
    free_arx, free_gp, truth = [], [], []
    one_arx, one_gp, one_truth = [], [], []
    for log in test_logs:
        v_hv, v_av = log[:, 0], log[:, 1]
        free_arx.append(arx_rollout(coeffs, v_av, v_hv[0]))
        free_gp.append(arx_gp_rollout(coeffs, model, v_av, v_hv[0]))
        truth.append(v_hv)
        p_arx, meas = one_step_predictions(coeffs, log)
        p_gp, _ = one_step_predictions(coeffs, log, model)
        one_arx.append(p_arx)
        one_gp.append(p_gp)
        one_truth.append(meas)
    cat = np.concatenate
    return {
        "arx_rmse": rmse(cat(free_arx), cat(truth)),
        "arx_gp_rmse": rmse(cat(free_gp), cat(truth)),
        "arx_one_step_rmse": rmse(cat(one_arx), cat(one_truth)),
        "arx_gp_one_step_rmse": rmse(cat(one_gp), cat(one_truth)),
        "training_points": len(model.dataset),
        "signal_variance": model.kernel.signal_variance,
        "length_scales": list(model.kernel.length_scales),
        "noise_variance": model.noise_variance,
        "log_marginal_likelihood": gpr.log_marginal_likelihood(model),
    }


def cmd_train(cfg: RunConfig):
    coeffs = cfg.arx_coefficients()
    train_logs = _load_logs(cfg, "train_")
    test_logs = _load_logs(cfg, "test_")
    sets = [build_discrepancy_dataset(log, coeffs, cfg.gp.stride) for log in train_logs]
    dataset = merge_datasets(sets, cfg.gp.max_points)
    model = gpr.fit(dataset, restarts=cfg.gp.restarts, seed=cfg.gp.seed)
    folder = _out(cfg, "model")
    folder.mkdir(parents=True, exist_ok=True)
    gpr.save(model, folder / MODEL_FILE)
    report = train_report(cfg, model, test_logs)
    lines = [f"{k} = {v if isinstance(v, (int, list)) else format(v, '.17g')}" for k, v in report.items()]
    (folder / "train_report.txt").write_text("\n".join(lines) + "\n")
    (folder / "train_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return model, report


def _load_model(cfg: RunConfig):
    path = _require(_out(cfg, "model", MODEL_FILE), "trained GP model (run 'train' first)")
    return gpr.load(path)


def _write_run(folder: Path, stem: str, log: SimLog, cfg: RunConfig, variant: str) -> None:
    log.to_csv(folder / f"{stem}.csv")
    metrics = compute_metrics(log, cfg.mpc_config(variant))
    (folder / f"{stem}_metrics.txt").write_text(metrics.to_text())
    (folder / f"{stem}_metrics.json").write_text(metrics.to_json())
    svg_plot.write(folder / f"{stem}.svg", log, cfg.mpc.delta, f"{log.scenario} / {variant}")


def cmd_simulate(cfg: RunConfig, variant: str) -> list[SimLog]:
    model = _load_model(cfg)
    folder = _out(cfg, "sim")
    folder.mkdir(parents=True, exist_ok=True)
    logs = []
    for name in _scenario_names(cfg):
        mcfg = cfg.mpc_config(variant)
        log = run(
            cfg.scenario_obj(name), mcfg, cfg.arx_coefficients(),
            model if variant == "gp" else None, model, cfg.scenario.sample_truth,
        )
        _write_run(folder, f"{name}_{variant}", log, cfg, variant)
        logs.append(log)
    failed = [f"{log.scenario}: {log.failure}" for log in logs if log.failure]
    if failed:
        raise ControllerFailure("; ".join(failed))
    return logs


def cmd_compare(cfg: RunConfig):
    model = _load_model(cfg)
    folder = _out(cfg, "compare")
    folder.mkdir(parents=True, exist_ok=True)
    comps = []
    for name in _scenario_names(cfg):
        comp = compare(cfg.scenario_obj(name), cfg.mpc_config(), cfg.arx_coefficients(), model, model)
        _write_run(folder, f"{name}_nominal", comp.nominal_log, cfg, "nominal")
        _write_run(folder, f"{name}_gp", comp.gp_log, cfg, "gp")
        comps.append(comp)
    (folder / "table.txt").write_text(table_text(comps))
    (folder / "comparison.json").write_text(comparison_json(comps))
    failed = [f"{c.scenario}/{lg.variant}: {lg.failure}" for c in comps for lg in (c.nominal_log, c.gp_log)
              if lg.failure]
    if failed:
        raise ControllerFailure("; ".join(failed))
    return comps


def cmd_plot(cfg: RunConfig, log_path, out_path=None) -> Path:
    log_path = _require(Path(log_path), "simulation log")
    log = SimLog.from_csv(log_path, dt=cfg.mpc.dt)
    out = Path(out_path) if out_path else log_path.with_suffix(".svg")
    svg_plot.write(out, log, cfg.mpc.delta, log_path.stem)
    return out


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="INI config file (a manifest works too)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("--output-dir", help="shorthand for --set output.dir=PATH")

    p = argparse.ArgumentParser(prog="gpmpc", description="GP-based MPC for a mixed vehicle platoon")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate-data", parents=[common], help="write synthetic train/test truth logs")
    sub.add_parser("train", parents=[common], help="fit the discrepancy GP and report test RMSE")
    sp = sub.add_parser("simulate", parents=[common], help="closed-loop run of one controller")
    sp.add_argument("--variant", choices=("gp", "nominal"), default="gp")
    sp.add_argument("--scenario", choices=sorted(SCENARIOS) + ["all"], help="shorthand for scenario.name")
    cp = sub.add_parser("compare", parents=[common], help="nominal vs GP-MPC on the same truth")
    cp.add_argument("--scenario", choices=sorted(SCENARIOS) + ["all"], help="shorthand for scenario.name")
    pp = sub.add_parser("plot", parents=[common], help="render a simulation CSV as SVG")
    pp.add_argument("log", help="simulation CSV")
    pp.add_argument("-o", "--out", help="SVG path (default: next to the log)")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append(f"output.dir={args.output_dir}")
    if getattr(args, "scenario", None):
        overrides.append(f"scenario.name={args.scenario}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "generate-data":
            write_manifest(cfg, "generate-data", [])
            paths = cmd_generate_data(cfg)
            print(f"wrote {len(paths)} truth logs to {_out(cfg, 'data')}")
        elif args.command == "train":
            write_manifest(cfg, "train", [])
            _, report = cmd_train(cfg)
            print(f"ARX RMSE {report['arx_rmse']:.6f} m/s, ARX+GP RMSE {report['arx_gp_rmse']:.6f} m/s")
        elif args.command == "simulate":
            write_manifest(cfg, f"simulate-{args.variant}", ["--variant", args.variant])
            for log in cmd_simulate(cfg, args.variant):
                m = compute_metrics(log, cfg.mpc_config(args.variant))
                print(f"{log.scenario}/{args.variant}: cost {m.total_cost:.2f}, min distance {m.min_distance:.4f} m")
        elif args.command == "compare":
            write_manifest(cfg, "compare", [])
            comps = cmd_compare(cfg)
            sys.stdout.write(table_text(comps))
        elif args.command == "plot":
            write_manifest(cfg, "plot", [args.log] + (["-o", args.out] if args.out else []))
            print(f"wrote {cmd_plot(cfg, args.log, args.out)}")
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ControllerFailure as exc:
        print(f"controller failure: {exc}", file=sys.stderr)
        return EXIT_CONTROLLER
    except (gpr.GpInputError, ValueError) as exc:
        # malformed artifacts (bad CSV header, corrupt model file)
        print(f"invalid artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
