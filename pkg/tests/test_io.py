import json
import math

import numpy as np

from degenlab.io import emit_plot_data, fmt, write_csv, write_json


def test_fmt_seventeen_digits():
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(1 / 3)) == 1 / 3
    assert fmt(np.float64(2.5)) == "2.5"
    assert fmt(math.inf) == "inf" and fmt(-math.inf) == "-inf" and fmt(math.nan) == "nan"
    assert fmt(True) == "1" and fmt(7) == "7"


def test_plot_data_rows(tmp_path):
    p = tmp_path / "osc.dat"
    emit_plot_data([(0.1, 2.0), (0.05, 1.0), (0.025, 0.5), (0.0125, 0.25)], p, "r osc")
    lines = p.read_text().splitlines()
    assert lines[0] == "# r osc"
    assert len(lines) == 5
    assert all(len(line.split()) == 2 for line in lines[1:])


def test_plot_data_empty(tmp_path):
    p = tmp_path / "empty.dat"
    emit_plot_data([], p, "r osc")
    assert p.read_text() == "# r osc\n"


def test_json_is_strict(tmp_path):
    text = write_json(tmp_path / "a.json", {"b": math.inf, "a": [1.0, math.nan], "c": np.float64(0.5)})
    obj = json.loads(text)
    assert obj == {"a": [1.0, "nan"], "b": "inf", "c": 0.5}
    assert list(obj) == ["a", "b", "c"]
    assert (tmp_path / "a.json").read_text() == text


def test_csv_layout(tmp_path):
    p = tmp_path / "t.csv"
    write_csv(p, ("x", "y"), [(0.1, "a"), (2, math.inf)])
    assert p.read_text() == "x,y\n0.10000000000000001,a\n2,inf\n"
    assert not list(tmp_path.glob(".tmp-*"))
