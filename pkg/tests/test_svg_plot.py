import re
import xml.etree.ElementTree as ET

from gpmpc_platoon.hv_model import DEFAULT_ARX
from gpmpc_platoon.mpc_controller import MpcConfig
from gpmpc_platoon.sim_harness import SimLog, constant_scenario, run
from gpmpc_platoon import svg_plot

SVG_NS = "{http://www.w3.org/2000/svg}"


def short_log(duration=2.0):
    return run(constant_scenario(duration=duration), MpcConfig(variant="nominal"), DEFAULT_ARX)


def test_well_formed_three_panels():
    text = svg_plot.render(short_log(), 20.0, "demo")
    root = ET.fromstring(text)
    assert root.tag == SVG_NS + "svg"
    assert int(root.get("width")) == svg_plot.WIDTH
    assert len(root.findall(f".//{SVG_NS}polyline")) >= 7
    for label in ("velocity", "distance", "acceleration"):
        assert label in text.lower()


def test_identical_input_gives_identical_bytes(tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    svg_plot.write(a, short_log(), 20.0, "x")
    svg_plot.write(b, short_log(), 20.0, "x")
    assert a.read_bytes() == b.read_bytes()


def test_empty_and_single_row_logs():
    empty = svg_plot.render(SimLog("constant", "nominal", 2, 0.1), 20.0)
    assert "no data" in empty
    ET.fromstring(empty)
    one = svg_plot.render(short_log(0.1), 20.0)
    ET.fromstring(one)
    assert not re.search(r"\bnan\b|\binf\b", one.lower())
