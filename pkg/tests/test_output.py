import json
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from georay.geodesic import ALPHA_FORM, trace
from georay.metric import builtin_metric
from georay.output import csv_text, emit_csv, emit_svg, fmt, report_json, svg_text
from georay.wavefront import huygens_tangency_check, level_set, trace_fan


@settings(max_examples=200)
@given(v=st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip(v):
    assert float(fmt(v)) == v
    assert "," not in fmt(v)


def test_single_trace_csv(flat, tmp_path):
    tr = trace(flat, [0, 0], [1, 0], ALPHA_FORM, 0.5, max_r=1.0)
    assert len(tr) == 3
    path = tmp_path / "t.csv"
    emit_csv(tr, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == "ray,k,r,S,x1,x2,u1,u2"
    assert lines[2] == "0,1,0.5,0.5,0.5,0,1,0"


def test_fan_csv_line_count(flat, tmp_path):
    fan = trace_fan(flat, [0, 0], 8, ALPHA_FORM, 0.1, max_S=1.0)
    assert all(len(tr) == 11 for tr in fan.traces)
    path = tmp_path / "f.csv"
    emit_csv(fan.traces, path)
    rows = path.read_text().splitlines()
    assert len(rows) == 89
    keys = [tuple(map(int, r.split(",")[:2])) for r in rows[1:]]
    assert keys == sorted(keys)
    parsed = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    np.testing.assert_array_equal(parsed[11:22, 4:6], fan.traces[1].x)


def test_csv_is_byte_stable(lens, tmp_path):
    fan = trace_fan(lens, [-1, 0], 40, ALPHA_FORM, 1e-2, max_S=0.5)
    again = trace_fan(lens, [-1, 0], 40, ALPHA_FORM, 1e-2, max_S=0.5, threads=4)
    emit_csv(fan.traces, tmp_path / "a.csv")
    emit_csv(again.traces, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_csv_rejects_empty():
    with pytest.raises(ValueError):
        csv_text([])


def test_flat_svg(flat, tmp_path):
    fan = trace_fan(flat, [0, 0], 8, ALPHA_FORM, 0.1, max_S=1.0)
    text = svg_text(fan.traces)
    assert text.count("<polyline") == 8
    starts = {m.split()[0] for m in re.findall(r'points="([^"]+)"', text)}
    assert starts == {"0.000000,0.000000"}
    # viewBox covers [-1, 1]^2 plus a 5% margin
    vb = [float(v) for v in re.search(r'viewBox="([^"]+)"', text).group(1).split()]
    np.testing.assert_allclose(vb, [-1.1, -1.1, 2.2, 2.2], atol=1e-6)
    emit_svg(fan.traces, tmp_path / "a.svg")
    emit_svg(fan.traces, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_svg_with_level_sets_and_discs(halfplane):
    fan = trace_fan(halfplane, [0.0, 1.0], 64, ALPHA_FORM, 2e-3, max_S=0.8)
    levels = [level_set(fan, S) for S in (0.25, 0.5, 0.75)]
    # nested closed curves around the source
    radii = [np.linalg.norm(ls.points - [0.0, 1.0], axis=1) for ls in levels]
    assert all(ls.closed for ls in levels)
    assert np.all(radii[0] < radii[1]) and np.all(radii[1] < radii[2])
    discs = huygens_tangency_check(fan, 0.5, 0.52).discs
    text = svg_text(fan.traces, levels, discs)
    assert text.count("<circle") == 64
    assert text.count("<polyline") == 64 + 3


def test_svg_needs_two_dimensions(tmp_path):
    m = builtin_metric("euclidean", {"dim": 3})
    tr = trace(m, [0, 0, 0], [1, 0, 0], ALPHA_FORM, 0.5, max_r=1.0)
    with pytest.raises(ValueError, match="dim"):
        emit_svg(tr, tmp_path / "x.svg")


def test_report_json_sorted():
    text = report_json({"b": np.float64(1.5), "a": [np.int64(2), np.array([1.0, 2.0])], "c": {"z": 1, "y": float("inf")}})
    assert list(json.loads(text)) == ["a", "b", "c"]
    assert json.loads(text)["c"]["y"] == "inf"
    assert text == report_json({"c": {"y": float("inf"), "z": 1}, "a": [2, [1.0, 2.0]], "b": 1.5})
