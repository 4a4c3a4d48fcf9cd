"""Command-line interface: exit codes, artifacts, and determinism."""

import json

import numpy as np

from relaxbc import cli
from relaxbc import fixtures
from relaxbc.model import system_to_dict


def _run(argv):
    return cli.main(argv)


def _read(path):
    with open(path) as fh:
        return json.load(fh)


class TestValidate:
    def test_pass_and_report(self, sys2x2_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert _run(["validate", sys2x2_file, "--out", str(out)]) == 0
        report = _read(out / "validate.json")
        assert report["passed"] is True
        assert all(report["checks"].values())
        assert report["indices"] == {
            "n0": 0, "n_plus": 2, "n10": 0, "n1_plus": 1
        }
        assert "config_hash" in report["provenance"]
        assert "pass" in capsys.readouterr().out

    def test_rank_deficient_boundary_fails(self, tmp_path):
        doc = system_to_dict(fixtures.example_system())
        doc["B"] = [[1.0, 0.0], [2.0, 0.0]]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "out"
        assert _run(["validate", str(path), "--out", str(out)]) == 1
        report = _read(out / "validate.json")
        assert report["passed"] is False

    def test_ragged_matrix_is_config_error(self, tmp_path):
        doc = system_to_dict(fixtures.example_system())
        doc["A"][0][0] = [3.0]  # ragged row
        path = tmp_path / "ragged.json"
        path.write_text(json.dumps(doc))
        assert _run(["validate", str(path), "--out", str(tmp_path)]) == 2

    def test_unreadable_file_is_config_error(self, tmp_path):
        assert _run(
            ["validate", str(tmp_path / "missing.json"),
             "--out", str(tmp_path)]
        ) == 2


class TestGkc:
    def test_artifacts_and_pass(self, sys2x2_file, tmp_path):
        out = tmp_path / "out"
        assert _run(
            ["gkc", sys2x2_file, "--out", str(out), "--resolution", "8",
             "--rim-points", "0"]
        ) == 0
        report = _read(out / "gkc.json")
        assert report["passed"] is True
        assert report["min_ratio"] > 1e-6
        assert (out / "gkc_samples.csv").exists()

    def test_bad_resolution_is_config_error(self, sys2x2_file, tmp_path):
        assert _run(
            ["gkc", sys2x2_file, "--out", str(tmp_path), "--resolution", "0"]
        ) == 2


class TestReduce:
    def test_worked_coefficients(self, sys2x2_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert _run(
            ["reduce", sys2x2_file, "--out", str(out), "--resolution", "8",
             "--rim-points", "0"]
        ) == 0
        report = _read(out / "reduce.json")
        coeff = np.asarray(report["reduced_bc"]["coefficient"])
        b_o = np.asarray(report["reduced_bc"]["B_o"])
        # row-equivalent to ubar(0) = g + h/3
        ratio = b_o.ravel()[1] / b_o.ravel()[0]
        assert abs(ratio - 1.0 / 3.0) < 1e-9
        assert coeff.shape == (1, 1)
        assert "0.948683" in capsys.readouterr().out

    def test_deterministic_reports(self, sys2x2_file, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = ["reduce", sys2x2_file, "--resolution", "8",
                "--rim-points", "0", "--seed", "42"]
        assert _run(args + ["--out", str(out1)]) == 0
        assert _run(args + ["--out", str(out2)]) == 0
        assert (out1 / "reduce.json").read_bytes() == (
            out2 / "reduce.json"
        ).read_bytes()


class TestSimulate:
    def test_artifacts(self, sys2x2_file, scen2x2_file, tmp_path):
        out = tmp_path / "out"
        assert _run(
            ["simulate", sys2x2_file, "--scenario", scen2x2_file,
             "--eps", "1e-2", "--dx-max", "2e-3", "--out", str(out)]
        ) == 0
        report = _read(out / "simulate.json")
        assert report["eps"] == 1e-2
        assert (out / "simulate_snapshot.csv").exists()
        assert (out / "simulate_boundary.csv").exists()

    def test_nonpositive_eps_is_config_error(
        self, sys2x2_file, scen2x2_file, tmp_path
    ):
        assert _run(
            ["simulate", sys2x2_file, "--scenario", scen2x2_file,
             "--eps=-1e-3", "--out", str(tmp_path)]
        ) == 2


class TestConverge:
    def _scenario(self, tmp_path, **overrides):
        doc = {
            "boundary": [{"kind": "sin"}, {"kind": "cos"}],
            "u0": [
                {"kind": "gauss_ramp", "amplitude": 1.0 / 3.0, "width": 0.5}
            ],
            "T": 0.5,
            "x_max": 2.0,
            "epsilons": [1e-2, 3e-3],
            "grid": {"dx_max": 2e-3, "equilibrium_dx": 1e-3},
        }
        doc.update(overrides)
        p = tmp_path / "scen.json"
        p.write_text(json.dumps(doc))
        return str(p)

    def test_pass_and_artifacts(self, sys2x2_file, tmp_path):
        scen = self._scenario(tmp_path)
        out = tmp_path / "out"
        assert _run(
            ["converge", sys2x2_file, "--scenario", scen, "--out", str(out),
             "--resolution", "8", "--rim-points", "0"]
        ) == 0
        report = _read(out / "converge.json")
        assert report["passed"] is True
        assert report["slope"] >= 0.45
        assert (out / "converge.csv").exists()
        # timings must not leak into the machine report
        assert all(
            "seconds" not in e for e in report["details"]["per_eps"]
        )

    def test_negative_control_fails_threshold(self, sys2x2_file, tmp_path):
        scen = self._scenario(tmp_path)
        out = tmp_path / "out"
        assert _run(
            ["converge", sys2x2_file, "--scenario", scen, "--out", str(out),
             "--resolution", "8", "--rim-points", "0", "--negative-control"]
        ) == 1
        report = _read(out / "converge.json")
        assert report["negative_control"] is True
        assert report["passed"] is False

    def test_empty_epsilons_is_config_error(self, sys2x2_file, tmp_path):
        scen = self._scenario(tmp_path, epsilons=[])
        assert _run(
            ["converge", sys2x2_file, "--scenario", scen,
             "--out", str(tmp_path)]
        ) == 2
