import json
import subprocess
import sys

import pytest

from bmv.cli import main


@pytest.fixture
def instance(tmp_path):
    path = tmp_path / "inst.json"
    assert main(["gen", "--seed", "7", "--n", "3", "-o", str(path)]) == 0
    return path


@pytest.fixture
def degenerate(tmp_path):
    path = tmp_path / "deg.json"
    eye = [[[1.0, 0.0] if i == j else [0.0, 0.0] for j in range(3)] for i in range(3)]
    A = [[[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, 0.0], [0.5, 0.0]], [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]]
    B = [row[:] for row in eye]
    B[2][2] = [2.0, 0.0]
    path.write_text(json.dumps({"n": 3, "A": A, "B": B}))
    return path


class TestCommands:
    def test_gen_round_trips_through_inspect(self, instance, capsys):
        capsys.readouterr()
        assert main(["inspect", str(instance)]) == 0
        info = json.loads(capsys.readouterr().out)
        assert info["n"] == 3 and info["distinct_b"] and not info["commuting"]

    def test_gen_is_seeded(self, tmp_path, instance):
        again = tmp_path / "again.json"
        main(["gen", "--seed", "7", "--n", "3", "-o", str(again)])
        assert again.read_bytes() == instance.read_bytes()

    def test_branch_points_schema(self, instance, capsys):
        capsys.readouterr()
        assert main(["branch-points", str(instance)]) == 0
        bps = json.loads(capsys.readouterr().out)
        assert len(bps) == 6
        assert all(set(bp) == {"z", "order", "genuine"} and len(bp["z"]) == 2 for bp in bps)

    def test_build_writes_json_and_csv(self, instance, tmp_path):
        out, csv = tmp_path / "m.json", tmp_path / "m.csv"
        assert main(["build", str(instance), "-o", str(out), "--csv", str(csv), "--nodes-per-interval", "8"]) == 0
        data = json.loads(out.read_text())
        assert {"atoms", "density", "meta"} <= data.keys()
        assert {"R", "N", "epsilon"} <= data["meta"].keys()
        assert csv.read_text().splitlines()[0] == "s,omega"
        assert len(data["density"]) == 16

    def test_oracle_and_plot_data(self, instance, tmp_path):
        oc, lc, dc = tmp_path / "o.csv", tmp_path / "l.csv", tmp_path / "d.csv"
        assert main(["oracle", str(instance), "-o", str(oc), "--s", "1.0,1.2"]) == 0
        assert oc.read_text().splitlines()[0] == "s,omega_oracle"
        assert main(["plot-data", str(instance), "-o", str(lc), "--density-output", str(dc), "--t-grid", "0,1"]) == 0
        rows = lc.read_text().splitlines()
        assert rows[0] == "t,f,L" and len(rows) == 3
        assert dc.read_text().startswith("s,omega")

    def test_proof_check(self, instance, capsys):
        capsys.readouterr()
        assert main(["proof-check", str(instance), "--t", "0.7"]) == 0
        res = json.loads(capsys.readouterr().out)
        assert res[0]["diamond"] < 1e-8


class TestExitCodes:
    def test_verify_commuting(self, tmp_path):
        path = tmp_path / "c.json"
        main(["gen", "--seed", "2", "--n", "3", "--commuting", "-o", str(path)])
        assert main(["verify", str(path), "-o", str(tmp_path / "r.json")]) == 0
        assert json.loads((tmp_path / "r.json").read_text())["pass"] is True

    def test_degenerate_without_epsilon(self, degenerate, capsys):
        assert main(["build", str(degenerate)]) == 2
        err = capsys.readouterr().err
        assert "perturb_B" in err and "Assumption" in err

    def test_degenerate_with_epsilon(self, degenerate, tmp_path):
        assert main(["verify", str(degenerate), "--epsilon", "0.01", "-o", str(tmp_path / "r.json")]) == 0

    def test_malformed_input(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"n": 2, "A": [[1]]}')
        assert main(["inspect", str(bad)]) == 2

    def test_non_hermitian(self, tmp_path):
        path = tmp_path / "nh.json"
        path.write_text(json.dumps({"n": 2, "A": [[[0, 0], [0, 1]], [[0, 1], [0, 0]]], "B": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}))
        assert main(["inspect", str(path)]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["inspect", str(tmp_path / "nope.json")]) == 2

    def test_bad_radius_factor(self, instance):
        with pytest.raises(SystemExit) as info:
            main(["build", str(instance), "--radius-factor", "1.2"])
        assert info.value.code == 2


def test_module_entry_point(instance):
    proc = subprocess.run([sys.executable, "-m", "bmv", "inspect", str(instance)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n"] == 3
