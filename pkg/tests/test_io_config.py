import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bihermitian import config, io
from bihermitian.grid import ConfigError, FlatBundle


def test_field_roundtrip(tmp_path, small_grid, rng):
    v = rng.standard_normal(small_grid.shape + (4, 4))
    io.write_field(tmp_path / "w", v, "form2", small_grid, FlatBundle(-1, 0))
    raw = (tmp_path / "w.bin").read_bytes()
    assert len(raw) == v.size * 8
    assert np.array_equal(np.frombuffer(raw, "<f8"), v.ravel())
    back, meta = io.read_field(tmp_path / "w.json")
    assert np.array_equal(back, v)
    assert meta == {"kind": "form2", "bundle": {"p1": -1, "p2": 0, "power": 1},
                    "grid": {"n_s": 8, "n_eta": 9, "n_xi1": 8, "n_xi2": 8}, "lambda": 0.5}


def test_field_dump_rejects_bad_input(tmp_path, small_grid):
    with pytest.raises(io.DumpError):
        io.write_field(tmp_path / "x", np.zeros(small_grid.shape), "form7", small_grid, None)
    with pytest.raises(io.DumpError):
        io.write_field(tmp_path / "x", np.zeros(small_grid.shape + (4,)), "scalar", small_grid, None)
    io.write_field(tmp_path / "x", np.zeros(small_grid.shape), "scalar", small_grid, None)
    (tmp_path / "x.bin").write_bytes(b"\0" * 16)
    with pytest.raises(io.DumpError):
        io.read_field(tmp_path / "x.bin")


@given(st.recursive(st.floats(allow_nan=True, allow_infinity=True) | st.integers() | st.text(max_size=5),
                    lambda c: st.lists(c, max_size=4) | st.dictionaries(st.text(max_size=4), c, max_size=4),
                    max_leaves=20))
@settings(max_examples=60, deadline=None)
def test_dumps_is_strict_and_stable(obj):
    text = io.dumps(obj)
    json.loads(text)  # strict JSON: no NaN tokens
    assert io.dumps(obj) == text


def test_svg_is_wellformed():
    svg = io.svg_lines([("a", [1, 2, 3], [1e-1, 1e-2, 1e-3])], title="t", logy=True)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "polyline" in svg


def test_config_defaults_and_echo():
    cfg = config.parse({})
    d = cfg.to_dict()
    assert d["surface"]["lambda"] == 0.5
    assert d["bundle"] == {"p1": -1, "p2": 0, "power": 1}
    assert d["deform"]["N"] == 6
    assert d["deform"]["solver"]["log_path"] is None
    json.dumps(d)


@pytest.mark.parametrize("raw,msg", [
    ({"grid": {"n_s": 16, "nx": 3}}, "unknown key"),
    ({"surfce": {}}, "unknown key"),
    ({"deform": {"N": "six"}}, "expected int"),
    ({"deform": {"tolerances": {"gualtieri": 1e-6, "bogus": 1}}}, "unknown key"),
    ({"deform": {"solver": {"rel_tol": -1.0}}}, "deform.solver"),
    ({"deform": {"adjoint": "fancy"}}, "adjoint"),
    ({"surface": {"a1": 0.4, "a2": 0.5}}, "a1 = a2"),
    ({"surface": {"lambda": 0.5, "a1": 0.5}}, "either"),
    ({"refine": 1}, "expected bool"),
    ({"bundle": {"p1": -1}}, "p1 and p2"),
    ({"flow": {"compare_times": [0.1]}}, "compare_times"),
    ([], "expected an object"),
])
def test_config_rejections(raw, msg):
    with pytest.raises(ConfigError, match=msg):
        config.parse(raw)


def test_load_reports_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        config.load(p)
    with pytest.raises(ConfigError, match="cannot read"):
        config.load(tmp_path / "missing.json")
