import time

import numpy as np
import pytest

from gpmpc_platoon import cli
from gpmpc_platoon.config import load_config
from gpmpc_platoon.sim_harness import compare


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    """Default-config synthetic data and trained GP, built once per session."""
    out = tmp_path_factory.mktemp("pipeline")
    cfg = load_config(None, [f"output.dir={out}"], env={})
    cli.cmd_generate_data(cfg)
    model, report = cli.cmd_train(cfg)
    return cfg, model, report


@pytest.fixture(scope="session")
def comparisons(pipeline):
    """Nominal vs GP-MPC on both scenarios with wall-clock timings."""
    cfg, model, _ = pipeline
    out = {}
    for name in ("constant", "braking"):
        t0 = time.perf_counter()
        comp = compare(cfg.scenario_obj(name), cfg.mpc_config(), cfg.arx_coefficients(), model, model)
        out[name] = (comp, time.perf_counter() - t0)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
