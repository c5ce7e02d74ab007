import json

from kgrel.reports import read_csv, write_csv, write_json


def test_csv_cells_and_round_trip(tmp_path):
    path = tmp_path / "r.csv"
    records = [
        {"relation": "a,b", "value": 0.1234567, "flag": True, "missing": None},
        {"relation": "plain", "value": float("nan"), "flag": False, "missing": 3},
    ]
    write_csv(path, records, {"ks": [1, 10], "filtered": True})
    text = path.read_text()
    assert text.splitlines()[:3] == ["# ks=1 10", "# filtered=true", "relation,value,flag,missing"]
    assert '"a,b",0.123457,true,' in text
    config, rows = read_csv(path)
    assert config == {"ks": "1 10", "filtered": "true"}
    assert rows[0]["relation"] == "a,b" and rows[1]["value"] == ""


def test_csv_explicit_columns_and_empty(tmp_path):
    path = tmp_path / "r.csv"
    write_csv(path, [], columns=["x", "y"])
    assert path.read_text() == "x,y\n"
    write_csv(path, [{"y": 2, "x": 1, "z": 9}], columns=["x", "y"])
    assert path.read_text() == "x,y\n1,2\n"


def test_json_nan_becomes_null(tmp_path):
    path = tmp_path / "r.json"
    write_json(path, [{"v": float("nan"), "w": [1.5, float("nan")]}], {"k": 1}, extra={"n": 2})
    payload = json.loads(path.read_text())
    assert payload == {"config": {"k": 1}, "rows": [{"v": None, "w": [1.5, None]}], "extra": {"n": 2}}
