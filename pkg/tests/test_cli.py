import csv
import json

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from conftest import example_11
from cvxorder import cli
from cvxorder.errors import SolverFailure
from cvxorder.measure import new_discrete, read_csv, write_csv


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def uniform_pair(tmp_path):
    mu, nu = tmp_path / "mu.csv", tmp_path / "nu.csv"
    assert cli.main(["gen", "--family", "unif-box", "--n", "100", "--seed", "7", "--out", str(mu)]) == 0
    assert cli.main(["gen", "--family", "unif-gauss-conv", "--n", "100", "--seed", "8", "--out", str(nu)]) == 0
    return mu, nu


class TestGen:
    def test_unit_box(self, tmp_path, capsys):
        out = tmp_path / "mu.csv"
        args = ["gen", "--family", "unif-box", "--n", "100", "--d", "2", "--seed", "7"]
        assert cli.main([*args, "--out", str(out)]) == 0
        m = read_csv(out)
        assert m.n == 100 and m.dim == 2
        assert m.points.min() >= 0 and m.points.max() <= 1
        summary = json.loads(capsys.readouterr().out)
        assert summary["n"] == 100 and len(summary["barycenter"]) == 2

    @pytest.mark.parametrize(
        "extra", [["--family", "unif-gauss-conv"], ["--family", "gaussian", "--mean", "1,1", "--cov", "3,-2;-2,4"]]
    )
    def test_deterministic(self, tmp_path, extra):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            assert cli.main(["gen", *extra, "--n", "50", "--seed", "3", "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()
        c = tmp_path / "c.csv"
        cli.main(["gen", *extra, "--n", "50", "--seed", "4", "--out", str(c)])
        assert a.read_bytes() != c.read_bytes()

    def test_round_trip(self, tmp_path):
        out = tmp_path / "g.csv"
        cli.main(["gen", "--family", "gaussian", "--n", "20", "--d", "3", "--seed", "1", "--out", str(out)])
        m = read_csv(out)
        write_csv(m, tmp_path / "again.csv")
        assert read_csv(tmp_path / "again.csv") == m
        assert (tmp_path / "again.csv").read_bytes() == out.read_bytes()

    def test_bad_covariance(self, tmp_path):
        args = ["gen", "--family", "gaussian", "--mean", "0,0", "--cov", "1,2;2,1", "--n", "5", "--out"]
        assert cli.main([*args, str(tmp_path / "x.csv")]) == cli.EXIT_INVALID

    def test_unknown_family(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["gen", "--family", "cauchy", "--n", "5", "--out", str(tmp_path / "x.csv")])
        assert exc.value.code == cli.EXIT_INVALID


class TestTestCommand:
    def _example_files(self, tmp_path, n=1):
        mu, nu = example_11(n)
        write_csv(mu, tmp_path / "mu.csv")
        write_csv(nu, tmp_path / "nu.csv")
        return str(tmp_path / "mu.csv"), str(tmp_path / "nu.csv")

    def test_reject_path(self, tmp_path):
        mu, nu = self._example_files(tmp_path)
        out = tmp_path / "r.json"
        regime = ["--regime", "bounded", "--diameter", "1e-5", "--k1", "100", "--k2", "100"]
        code = cli.main(["test", "--mu", mu, "--nu", nu, *regime, "--out", str(out)])
        doc = json.loads(out.read_text())
        assert code == cli.EXIT_REJECT
        assert doc["decision"] == "Reject"
        assert doc["statistic"] == pytest.approx(0.5, abs=1e-12)
        assert doc["schema"] == "cvxorder/1"

    def test_default_regime_is_conservative(self, tmp_path, capsys):
        mu, nu = self._example_files(tmp_path)
        assert cli.main(["test", "--mu", mu, "--nu", nu]) == cli.EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["statistic"] == pytest.approx(0.5, abs=1e-12)
        assert doc["decision"] == "Accept" and doc["statistic"] < doc["t_alpha"]

    def test_identical_files_accept(self, uniform_pair, capsys):
        mu, _ = uniform_pair
        assert cli.main(["test", "--mu", str(mu), "--nu", str(mu), "--regime", "bounded"]) == cli.EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["statistic"] <= 1e-8 and doc["decision"] == "Accept"

    def test_dimension_mismatch(self, tmp_path):
        write_csv(new_discrete([[0.0]], [1.0]), tmp_path / "a.csv")
        write_csv(new_discrete([[0.0, 0.0]], [1.0]), tmp_path / "b.csv")
        assert cli.main(["test", "--mu", str(tmp_path / "a.csv"), "--nu", str(tmp_path / "b.csv")]) == 2

    def test_missing_and_malformed_files(self, tmp_path):
        mu, _ = self._example_files(tmp_path)
        assert cli.main(["test", "--mu", mu, "--nu", str(tmp_path / "missing.csv")]) == 2
        (tmp_path / "bad.csv").write_text("x1,weight\n0,-1\n")
        assert cli.main(["test", "--mu", mu, "--nu", str(tmp_path / "bad.csv")]) == 2

    @pytest.mark.parametrize(
        "flags", [["--alpha", "2"], ["--regime", "bounded", "--diameter", "-1"], ["--kappa", "0"], ["--eps-decay", "3"]]
    )
    def test_invalid_flags(self, tmp_path, flags):
        mu, nu = self._example_files(tmp_path)
        assert cli.main(["test", "--mu", mu, "--nu", nu, *flags]) == 2

    def test_unknown_regime_is_usage_error(self, tmp_path):
        mu, nu = self._example_files(tmp_path)
        with pytest.raises(SystemExit) as exc:
            cli.main(["test", "--mu", mu, "--nu", nu, "--regime", "gaussian"])
        assert exc.value.code == 2

    def test_solver_failure_exit_code(self, tmp_path, monkeypatch):
        mu, nu = self._example_files(tmp_path)

        def boom(*args, **kwargs):
            raise SolverFailure("injected")

        monkeypatch.setattr("cvxorder.hypothesis.project_backward", boom)
        assert cli.main(["test", "--mu", mu, "--nu", nu]) == cli.EXIT_ERROR


class TestProject:
    def test_uniform_pair_outputs(self, uniform_pair, tmp_path):
        mu, nu = uniform_pair
        prefix = tmp_path / "proj"
        assert cli.main(["project", "--mu", str(mu), "--nu", str(nu), "--out", str(prefix)]) == 0
        projected = read_csv(tmp_path / "proj.projected.csv")
        assert projected.n == 100
        hull = ConvexHull(read_csv(nu).points)
        slack = projected.points @ hull.equations[:, :-1].T + hull.equations[:, -1]
        assert slack.max() <= 1e-8
        trace = _rows(tmp_path / "proj.trace.csv")
        assert trace[0] == ["k", "objective", "gap", "step", "epsilon"]
        objs = [float(r[1]) for r in trace[1:]]
        assert all(b <= a + 1e-12 for a, b in zip(objs, objs[1:]))
        doc = json.loads((tmp_path / "proj.json").read_text())
        assert doc["schema"] == "cvxorder/1"
        assert doc["distance"] == pytest.approx(np.sqrt(objs[-1]), rel=1e-12)

    def test_identical_measures(self, uniform_pair, tmp_path):
        mu, _ = uniform_pair
        assert cli.main(["project", "--mu", str(mu), "--nu", str(mu), "--out", str(tmp_path / "same")]) == 0
        np.testing.assert_allclose(read_csv(tmp_path / "same.projected.csv").points, read_csv(mu).points, atol=1e-8)


class TestExperiment:
    def test_fig1_deterministic(self, tmp_path):
        args = ["experiment", "fig1-distance-vs-n", "--ns", "20,40", "--reps", "2", "--max-iter", "30"]
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for p in paths:
            assert cli.main([*args, "--out", str(p)]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()
        rows = _rows(paths[0])
        assert rows[0] == ["n", "seed", "statistic", "iterations", "converged"]
        assert [r[0] for r in rows[1:]] == ["20", "20", "40", "40"]

    def test_fig1_parallel_matches_serial(self, tmp_path):
        args = ["experiment", "fig1-distance-vs-n", "--ns", "20,30", "--reps", "2", "--seed", "9", "--max-iter", "30"]
        cli.main([*args, "--out", str(tmp_path / "s.csv")])
        cli.main([*args, "--jobs", "2", "--out", str(tmp_path / "p.csv")])
        assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "p.csv").read_bytes()

    def test_fig3_small(self, tmp_path):
        out = tmp_path / "f3.csv"
        assert cli.main(["experiment", "fig3-gaussian-fw", "--n", "60", "--max-iter", "8", "--out", str(out)]) == 0
        rows = _rows(out)
        assert rows[0] == ["k", "objective", "gap", "step", "epsilon"]
        assert 1 < len(rows) <= 10

    def test_unknown_experiment(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["experiment", "fig2", "--out", str(tmp_path / "x.csv")])
        assert exc.value.code == 2


def test_cell_seeds_are_distinct():
    seeds = {cli.cell_seed(0, n, r) for n in cli.FIG1_SIZES for r in range(5)}
    assert len(seeds) == 30
