"""Generate data, train the GP and compare both controllers on both scenarios.

Usage: python scripts/reproduce_table.py [OUTPUT_DIR] [--set section.key=value ...]
"""

import argparse
import json
import time

from gpmpc_platoon import cli
from gpmpc_platoon.config import load_config


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("output_dir", nargs="?", default="out/table")
    ap.add_argument("--set", dest="overrides", action="append", default=[])
    args = ap.parse_args()

    cfg = load_config(None, [f"output.dir={args.output_dir}", "scenario.name=all", *args.overrides])
    for name in ("generate-data", "train", "compare"):
        cli.write_manifest(cfg, name, [])
    t0 = time.perf_counter()
    cli.cmd_generate_data(cfg)
    _, report = cli.cmd_train(cfg)
    print(f"held-out free-run RMSE: ARX {report['arx_rmse']:.4f}  ARX+GP {report['arx_gp_rmse']:.4f} m/s")
    comps = cli.cmd_compare(cfg)
    print(open(f"{args.output_dir}/compare/table.txt").read(), end="")
    for c in comps:
        print(c.scenario, json.dumps(c.deltas(), sort_keys=True))
    print(f"done in {time.perf_counter() - t0:.1f} s; outputs under {args.output_dir}")


if __name__ == "__main__":
    main()
