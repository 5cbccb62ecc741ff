import csv
import io
import json
import subprocess
import sys

import pytest

from nbwalk import cli


def run(*argv):
    proc = subprocess.run([sys.executable, "-m", "nbwalk", *argv], capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


def table(text):
    lines = text.splitlines()
    assert lines[0].startswith("# ")
    header = json.loads(lines[0][2:])
    return header, list(csv.reader(io.StringIO("\n".join(lines[1:]))))


def test_counts_table(capsys):
    assert cli.main(["counts", "--dim", "2", "--n", "2", "--no-timestamp"]) == 0
    header, rows = table(capsys.readouterr().out)
    assert rows[0] == ["x1", "x2", "count"]
    assert sum(int(r[2]) for r in rows[1:]) == 12
    assert ["0", "0", "0"] not in rows
    assert {tuple(r) for r in rows[1:]} >= {("2", "0", "1"), ("1", "1", "2")}
    assert header["schema"] == 1 and header["result"]["total"] == 12
    assert "timestamp" not in header


def test_counts_directed(capsys):
    assert cli.main(["counts", "--dim", "2", "--n", "3", "--directed", "--no-timestamp"]) == 0
    _, rows = table(capsys.readouterr().out)
    assert rows[0][:3] == ["x1", "x2", "direction"]


def test_counts_zero_steps(capsys):
    assert cli.main(["counts", "--dim", "3", "--n", "0", "--format", "json", "--no-timestamp"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["rows"] == [[0, 0, 0, 1]]


def test_usage_errors():
    assert run("counts", "--dim", "0", "--n", "1")[0] == 2
    assert run("counts", "--dim", "2", "--n", "-1")[0] == 2
    assert run("spectrum", "--dim", "2", "--k", "1,2,3")[0] == 2
    assert run("mixing", "--family", "hamming", "--xi", "0.1")[0] == 2


def test_cap_exit():
    code, _, err = run("counts", "--dim", "3", "--n", "30", "--cap", "100")
    assert code == 3 and "cap" in err


def test_spectrum_points(capsys):
    assert cli.main(["spectrum", "--dim", "2", "--k", "pi/2,pi/2", "--k", "0,0", "--no-timestamp"]) == 0
    header, rows = table(capsys.readouterr().out)
    assert header["result"]["points"] == 2
    cols = rows[0]
    origin = dict(zip(cols, rows[2]))
    assert float(origin["lambda_plus_re"]) == pytest.approx(3)
    assert float(origin["lambda_minus_re"]) == pytest.approx(1)
    mid = dict(zip(cols, rows[1]))
    assert float(mid["abs_lambda_plus"]) == pytest.approx(3 ** 0.5)


def test_spectrum_grid(capsys):
    assert cli.main(["spectrum", "--dim", "2", "--grid", "4", "--format", "json", "--no-timestamp"]) == 0
    assert len(json.loads(capsys.readouterr().out)["rows"]) == 16


def test_mixing_exit_codes():
    code, out, err = run("mixing", "--family", "hamming", "--r", "3", "--d", "2", "--xi", "0.01", "--no-timestamp")
    assert code == 1 and "t_mix=10 > 9" in err
    assert run("mixing", "--family", "nn", "--r", "5", "--d", "2", "--xi", "0.01")[0] == 0
    assert run("mixing", "--family", "nn", "--r", "8", "--d", "3", "--xi", "0.01", "--horizon", "3")[0] == 3


def test_mixing_unmet_hypotheses_reported(capsys):
    code = cli.main(["mixing", "--family", "hypercube", "--m", "2", "--xi", "0.1", "--format", "json", "--no-timestamp"])
    doc = json.loads(capsys.readouterr().out)
    assert code == 0 and doc["result"]["status"] == "hypotheses-unmet"


def test_byte_identical_replay(tmp_path):
    argv = ["sample", "--dim", "2", "--n", "40", "--count", "3000", "--seed", "9", "--no-timestamp"]
    a = run(*argv, "--dump-paths", str(tmp_path / "a.txt"))
    b = run(*argv, "--dump-paths", str(tmp_path / "b.txt"))
    assert a[0] == 0
    ha, ra = table(a[1])
    hb, rb = table(b[1])
    assert ra == rb and ha["result"] == hb["result"]
    assert run(*argv)[1] == run(*argv)[1]
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert len((tmp_path / "a.txt").read_text().splitlines()) == 3000


def test_timestamp_default(capsys):
    cli.main(["greens", "--dim", "2", "--z", "0.2", "--k", "0,0", "--format", "json"])
    doc = json.loads(capsys.readouterr().out)
    assert "timestamp" in doc and doc["schema"] == 1 and doc["version"]


def test_greens_series(capsys):
    assert cli.main(["greens", "--dim", "2", "--z", "0.2", "--k", "0,0", "--terms", "4", "--no-timestamp"]) == 0
    header, rows = table(capsys.readouterr().out)
    assert [float(r[1]) for r in rows[1:]] == [1, 4, 12, 36, 108]
    assert header["result"]["value"]["re"] == pytest.approx(3)


def test_greens_pole_is_usage_error():
    # z = 1/3 is a root of 1 + 3 z^2 - 4 z at k = 0
    assert run("greens", "--dim", "2", "--z", "1/3", "--k", "0,0")[0] == 2


def test_output_file(tmp_path, capsys):
    target = tmp_path / "out.json"
    assert cli.main(["counts", "--dim", "1", "--n", "3", "--format", "json", "--output", str(target)]) == 0
    assert capsys.readouterr().out == ""
    assert json.loads(target.read_text())["result"]["total"] == 2


def test_audit_subset():
    code, out, _ = run("audit", "--quick", "--only", "greens_identities", "--only", "second_moment", "--no-timestamp")
    header, rows = table(out)
    assert code == 0 and header["result"]["passed"]
    assert [r[0] for r in rows[1:]] == ["greens_identities", "second_moment"]
