import json
import warnings

import numpy as np
import pytest

from dfpmetro import DfpError
from dfpmetro.tableio import read_table, table_from_records, table_records, write_rows, write_table
from dfpmetro.tomo import beamsplitter_povm, ideal_povm, synth_dfp


@pytest.mark.parametrize("suffix", [".csv", ".json"])
def test_round_trip(tmp_path, suffix):
    table = synth_dfp(beamsplitter_povm(0.6, 0.35))
    path = tmp_path / f"t{suffix}"
    write_table(path, table, {"source": "bs"})
    back = read_table(path)
    assert back.outcomes == table.outcomes
    np.testing.assert_allclose(back.q, table.q, atol=1e-15)


def test_csv_comments_and_whitespace(tmp_path):
    path = tmp_path / "t.csv"
    lines = ["# measured 2024", "fiducial, outcome, probability"]
    for rec in table_records(synth_dfp(ideal_povm("da"))):
        lines.append(f"{rec['fiducial']}, {rec['outcome']}, {rec['probability']!r}")
    path.write_text("\n".join(lines) + "\n")
    assert read_table(path).outcomes == ("D", "A")


def test_json_records_object(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"records": table_records(synth_dfp(ideal_povm("hv")))}))
    np.testing.assert_allclose(read_table(path).q[0], [1, 0])


def _records(kind="da"):
    return table_records(synth_dfp(ideal_povm(kind)))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda r: r.pop(),
        lambda r: r.append(dict(r[0])),
        lambda r: r[0].update(fiducial="Q"),
        lambda r: r[0].update(probability="abc"),
        lambda r: r[0].update(probability=float("nan")),
        lambda r: r[0].pop("outcome"),
    ],
)
def test_malformed_records(mutate):
    recs = _records()
    mutate(recs)
    with pytest.raises(DfpError):
        table_from_records(recs)


def test_bad_files(tmp_path):
    with pytest.raises(DfpError):
        read_table(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DfpError):
        read_table(bad)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DfpError):
        read_table(bad)
    bad.write_text("[]")
    with pytest.raises(DfpError):
        read_table(bad)


def test_negative_readings_clamped_with_warning():
    recs = _records()
    recs[4]["probability"], recs[5]["probability"] = 1.01, -0.01
    recs[0]["probability"] = 0.51
    with pytest.warns(UserWarning, match="renormalised"):
        table = table_from_records(recs, atol=1e-6)
    assert np.min(table.q) >= 0
    np.testing.assert_allclose(table.q.sum(axis=1), 1, atol=1e-15)
    assert table.raw[2, 1] == -0.01
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        table_from_records(_records(), atol=1e-6)


def test_write_rows_formats(tmp_path):
    cols = ("a", "b", "c")
    rows = [(0.1, np.inf, True), (np.float64(1 / 3), np.nan, False)]
    text = write_rows(None, cols, rows, {"k": 1}, {"note": [1, 2]})
    lines = text.splitlines()
    assert lines[0] == '# config: {"k": 1}'
    assert lines[1] == "# note: [1, 2]"
    assert lines[2] == "a,b,c"
    assert lines[3] == "0.1,inf,1"
    assert float(lines[4].split(",")[0]) == 1 / 3
    path = tmp_path / "r.json"
    write_rows(path, cols, rows, {"k": 1})
    doc = json.loads(path.read_text())
    assert doc["rows"][0] == [0.1, "inf", 1] and doc["config"] == {"k": 1}
    assert [p.name for p in tmp_path.iterdir()] == ["r.json"]
