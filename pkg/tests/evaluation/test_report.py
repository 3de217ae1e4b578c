import pytest

from assemblynet.errors import DataError
from assemblynet.evaluation.report import COLUMNS, ReportRow, read_report, summarize, write_report


def test_summarize():
    row = summarize("fine", "test", [0.8, 0.9, 1.0], p_vs_baseline=0.03125)
    assert row.mean_dice == pytest.approx(0.9)
    assert row.std_dice == pytest.approx(0.1)
    assert row.p_vs_baseline == 0.03125
    assert summarize("fine", "test", [0.7]).std_dice == 0.0
    with pytest.raises(DataError):
        summarize("fine", "test", [])


def test_cells_format():
    row = ReportRow("fine", "test", 0.5, 0.25)
    assert row.cells() == ["fine", "test", "0.500000", "0.250000", "", ""]


def test_write_and_read(tmp_path):
    rows = [summarize("fine", "test", [0.8, 0.9]), ReportRow("coarse", "rescan", 0.7, 0.0, 0.5, 12.0)]
    path = write_report(tmp_path / "out" / "report.csv", rows)
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(COLUMNS)
    assert "\r" not in text
    back = read_report(path)
    assert back[0]["method"] == "fine"
    assert back[0]["mean_dice"] == "0.850000"
    assert back[0]["p_vs_baseline"] == ""
    assert back[1]["wall_seconds"] == "12.000000"


def test_read_rejects_other_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("method,score\nfine,1\n")
    with pytest.raises(DataError):
        read_report(path)
