import pytest

from gpmpc_platoon.config import OUTPUT_ENV, ConfigError, RunConfig, load_config
from gpmpc_platoon.hv_model import DEFAULT_ARX


def test_default_values():
    cfg = load_config(env={})
    m = cfg.mpc
    assert (m.horizon, m.dt, m.q1, m.q2, m.r, m.delta, m.p_def) == (10, 0.1, 5.0, 5.0, 10.0, 20.0, 0.95)
    assert (m.a_min, m.a_max) == (-5.0, 5.0)
    assert cfg.arx_coefficients() == DEFAULT_ARX
    assert (cfg.data.n_train, cfg.data.n_test) == (6, 3)
    assert cfg.scenario_obj("braking").reference_schedule == ((0.0, 20.0), (15.0, 10.0))


def test_file_then_env_then_overrides(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[mpc]\nhorizon = 8\n[output]\ndir = from_file\n")
    cfg = load_config(path, env={})
    assert cfg.mpc.horizon == 8 and cfg.output.dir == "from_file"
    cfg = load_config(path, env={OUTPUT_ENV: "from_env"})
    assert cfg.output.dir == "from_env"
    cfg = load_config(path, ["output.dir=from_flag", "mpc.horizon=12"], env={OUTPUT_ENV: "from_env"})
    assert cfg.output.dir == "from_flag" and cfg.mpc.horizon == 12


def test_manifest_round_trip(tmp_path):
    cfg = load_config(
        overrides=["scenario.reference_schedule=0:12, 4.5:8", "data.levels=5 9", "scenario.sample_truth=yes"],
        env={},
    )
    path = tmp_path / "manifest.ini"
    path.write_text("# command: compare\n" + cfg.to_ini())
    assert load_config(path, env={}) == cfg


@pytest.mark.parametrize(
    "override",
    ["mpc.horizn=3", "nosuch.key=1", "mpc.horizon=ten", "mpc.horizon", "horizon=3", "scenario.sample_truth=maybe"],
)
def test_bad_overrides(override):
    with pytest.raises(ConfigError):
        load_config(overrides=[override], env={})


@pytest.mark.parametrize(
    "override",
    [
        "mpc.p_def=0.4",
        "mpc.horizon=0",
        "scenario.name=highway",
        "arx.sample_time=0.2",
        "data.n_train=0",
        "gp.max_points=1",
        "truth.noise_std=-1",
        "meta.version=2",
        "arx.c=1 2 3",
    ],
)
def test_semantic_validation(override):
    with pytest.raises(ConfigError):
        load_config(overrides=[override], env={})


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[mpc]\nhorizon = 5\nweights = 3\n")
    with pytest.raises(ConfigError, match="mpc.weights"):
        load_config(path, env={})


def test_malformed_or_missing_file(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("horizon = 5\n")
    with pytest.raises(ConfigError):
        load_config(path, env={})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini", env={})


def test_all_scenarios_accepted():
    assert load_config(overrides=["scenario.name=all"], env={}).scenario.name == "all"


def test_derived_objects():
    cfg = RunConfig()
    assert cfg.mpc_config("nominal").variant == "nominal"
    assert cfg.mpc_config().policy.quantile == pytest.approx(1.644854, abs=1e-6)
    assert cfg.truth_spec(7).seed == 7
