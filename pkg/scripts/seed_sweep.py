"""Repeat the train-and-compare pipeline over several data seeds.

Prints one line per seed with the held-out RMSEs and, for each scenario,
cost / min distance / violation count of both controllers.

Usage: python scripts/seed_sweep.py [--seeds 0 1 2] [--out out/sweep] [--set ...]
"""

import argparse
import time

from gpmpc_platoon import cli
from gpmpc_platoon.config import load_config
from gpmpc_platoon.sim_harness import compare


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="out/sweep")
    ap.add_argument("--set", dest="overrides", action="append", default=[])
    args = ap.parse_args()

    for seed in args.seeds:
        cfg = load_config(None, [f"output.dir={args.out}/seed{seed}", f"data.seed={seed}", *args.overrides])
        t0 = time.perf_counter()
        cli.cmd_generate_data(cfg)
        model, report = cli.cmd_train(cfg)
        line = f"seed {seed}: rmse {report['arx_rmse']:.3f} -> {report['arx_gp_rmse']:.3f}"
        for name in ("constant", "braking"):
            c = compare(cfg.scenario_obj(name), cfg.mpc_config(), cfg.arx_coefficients(), model, model)
            line += (f" | {name} nom {c.nominal.total_cost:.1f}/{c.nominal.min_distance:.4f}/"
                     f"{c.nominal.constraint_violations} gp {c.gp.total_cost:.1f}/{c.gp.min_distance:.4f}/"
                     f"{c.gp.constraint_violations}")
        print(line + f" ({time.perf_counter() - t0:.0f} s)", flush=True)


if __name__ == "__main__":
    main()
