import csv

import pytest

from fnosmt import report
from fnosmt.harness import FROZEN_ONLY, SOUND, ResultRow, TrainRow


def _row(model, prop, method, verdict, sev=None, confirmed=None, L=1, N=8):
    return ResultRow(model, N, 2, L, prop, method, verdict, SOUND if method != "z3-frozen" else FROZEN_ONLY,
                     sev, 0.5, confirmed)


ROWS = [
    _row("L1-N8-s42", "mass", "z3-exact", "counterexample", 0.6),
    _row("L1-N8-s42", "mass", "grad", "counterexample", 0.4),
    _row("L1-N8-s42", "mass", "mc", "counterexample", 0.2),
    _row("L1-N8-s42", "positivity", "z3-exact", "proof"),
    _row("L2-N8-s42", "positivity", "z3-exact", "timeout", L=2),
    _row("L1-N32-s7", "mass", "z3-frozen", "counterexample", 0.02, False, N=32),
    _row("L1-N64-s7", "mass", "z3-frozen", "counterexample", 0.3, True, N=64),
    _row("L1-N64-s7", "positivity", "z3-frozen", "proof", N=64),
]


def test_empty_results(tmp_path):
    report.write_rows([], tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        assert next(csv.reader(fh)) == ResultRow.header()
    assert report.read_rows(tmp_path / "r.csv") == []
    assert report.make_plots([], [], tmp_path / "plots") == []
    assert not (tmp_path / "plots").exists()


def test_csv_roundtrip(tmp_path):
    report.write_rows(ROWS, tmp_path / "r.csv")
    assert report.read_rows(tmp_path / "r.csv") == ROWS
    train = [TrainRow("L1-N8-s42", 42, 8, 2, 1, 85, 0.01, 0.02)]
    report.write_train_rows(train, tmp_path / "t.csv")
    assert report.read_train_rows(tmp_path / "t.csv") == train


def test_summary_counts():
    counts = report.summary_counts(ROWS)
    assert counts[("Exact, L=1", "mass")]["CE"] == 1
    assert counts[("Exact, L=1", "positivity")]["Proof"] == 1
    assert counts[("Exact, L=2", "positivity")]["TO"] == 1
    assert counts[("Frozen", "mass")] == {"Proof": 0, "CE": 1, "UC": 1, "TO": 0, "ERR": 0}
    text = report.render_summary(ROWS)
    header = text.splitlines()[0].split()
    assert header[2:] == ["Proof", "CE", "UC", "TO"]
    assert "frozen surrogate only" in text
    assert report.z3_wins(ROWS) == (1, 1)


def test_plots(tmp_path):
    pytest.importorskip("matplotlib")
    train = [TrainRow("L1-N8-s42", 42, 8, 2, 1, 85, 0.01, 0.02)]
    paths = report.make_plots(ROWS, train, tmp_path)
    names = {p.name for p in paths}
    assert {"severity_mass.png", "solve_time.png", "mse.png"} <= names
    assert all(p.stat().st_size > 0 for p in paths)
