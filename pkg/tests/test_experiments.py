import json
import math

import numpy as np
import pytest

from mcflab.cli import main
from mcflab.explicit import ParameterError
from mcflab.experiments import (
    ExperimentSpec,
    ResolutionError,
    run_convergence,
    run_estimate_suite,
    run_experiment,
    run_identity_suite,
    run_ode_suite,
    run_sharpness_area,
    run_sharpness_gradient,
    write_bundle,
)


class TestConvergence:
    def test_small_ladder_passes(self):
        bundle = run_convergence(levels=(100, 200))
        assert bundle.passed
        orders = bundle.tables["orders"]
        assert 1.7 <= orders[0] <= 2.3

    def test_translating_pair(self):
        bundle = run_convergence(problem="translating-pair", levels=(100, 200))
        assert bundle.passed

    def test_explicit_scheme_orders(self):
        bundle = run_convergence(levels=(40, 80), scheme="explicit")
        assert 1.5 <= bundle.tables["orders"][0] <= 2.5

    def test_level_validation(self):
        with pytest.raises(ParameterError):
            run_convergence(levels=(100, 300))
        with pytest.raises(ParameterError):
            run_convergence(levels=(100,))


class TestSharpnessGradient:
    def test_lam_1p5_quick(self):
        bundle = run_sharpness_gradient(1.5, points_per_probe=8)
        assert bundle.passed, [r.name for r in bundle.reports if not r.passed]
        chain = bundle.context["ordering_chain"]
        lam = 1.5
        assert (chain["w(-probe,1)"] < chain["upper(-probe,1)"] <= -lam
                < lam <= chain["lower(probe,1)"] < chain["w(probe,1)"])
        quot = next(r for r in bundle.reports if r.name == "difference-quotient")
        assert quot.measured >= 0.95 * lam * math.exp(lam * lam)

    def test_resolution_refusal(self):
        with pytest.raises(ResolutionError, match="exp"):
            run_sharpness_gradient(2.0, points_per_probe=4)

    def test_lam_validation(self):
        with pytest.raises(ParameterError):
            run_sharpness_gradient(0.9)

    def test_graded_grid_variant(self):
        bundle = run_sharpness_gradient(1.5, points_per_probe=8, graded=True)
        assert bundle.context["graded"]
        assert bundle.passed, [r.name for r in bundle.reports if not r.passed]


class TestSharpnessArea:
    def test_k2_low_resolution(self):
        bundle = run_sharpness_area(2, nodes_per_pi=256)
        assert bundle.passed, [r.name for r in bundle.reports if not r.passed]
        length = next(r for r in bundle.reports if r.name == "length-lower-bound")
        assert length.measured >= 0.95 * 12.0
        mids = [r for r in bundle.reports if r.name.startswith("midpoint-crossing")]
        assert len(mids) == 4

    def test_k_validation(self):
        with pytest.raises(ParameterError):
            run_sharpness_area(5)
        with pytest.raises(ResolutionError):
            run_sharpness_area(2, nodes_per_pi=100)


class TestEstimateSuite:
    def test_small_suite_passes(self):
        bundle = run_estimate_suite(n=1, seed=7, count=3, nodes=201)
        assert bundle.passed
        names = [r.name for r in bundle.reports]
        assert "flow-000-gradient-explicit" in names
        assert "area-constant-fit" in names
        # flat member: margins maximal among flows
        flat = next(r for r in bundle.reports if r.name == "flow-000-gradient-explicit")
        assert flat.context["amp"] == 0.0

    def test_deterministic_reports(self):
        a = run_estimate_suite(n=1, seed=3, count=2, nodes=101)
        b = run_estimate_suite(n=1, seed=3, count=2, nodes=101)
        from mcflab.estimates import reports_to_csv
        assert reports_to_csv(a.reports) == reports_to_csv(b.reports)
        assert a.to_json() == b.to_json()

    def test_jobs_do_not_change_output(self):
        a = run_estimate_suite(n=1, seed=5, count=3, nodes=101, jobs=1)
        b = run_estimate_suite(n=1, seed=5, count=3, nodes=101, jobs=3)
        assert a.to_json() == b.to_json()

    def test_seed_changes_output(self):
        a = run_estimate_suite(n=1, seed=1, count=2, nodes=101)
        b = run_estimate_suite(n=1, seed=2, count=2, nodes=101)
        assert a.to_json() != b.to_json()

    def test_2d_smoke(self):
        bundle = run_estimate_suite(n=2, seed=1, count=2, nodes=31)
        assert bundle.passed

    def test_fitted_constant_stability(self):
        a = run_estimate_suite(n=1, seed=100, count=6, nodes=201)
        b = run_estimate_suite(n=1, seed=200, count=6, nodes=201)
        ca = next(r for r in a.reports if r.name == "area-constant-fit").measured
        cb = next(r for r in b.reports if r.name == "area-constant-fit").measured
        assert abs(ca - cb) <= 0.1 * max(ca, cb)

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            run_estimate_suite(n=3, seed=0, count=1)


class TestOdeSuite:
    def test_small_run(self):
        bundle = run_ode_suite(seed=1, count=20, steps=10**4)
        assert bundle.passed
        assert bundle.context["rejection_rate"] == bundle.context["rejected"] / 20
        viol = next(r for r in bundle.reports if r.name == "ode-violations")
        assert viol.measured == 0.0
        assert viol.context["checked"] == 20 - bundle.context["rejected"]


class TestIdentitySuite:
    def test_reduced_levels(self):
        bundle = run_identity_suite(
            heat_levels=((513, 0.02), (1025, 0.01)),
            energy_levels=((50, 4e-4, 0.05), (100, 1e-4, 0.025)))
        assert bundle.passed, [r.name for r in bundle.reports if not r.passed]
        assert bundle.tables["res_v"][0] > bundle.tables["res_v"][1]


class TestSpecAndBundleIO:
    def test_spec_validation(self):
        with pytest.raises(ParameterError):
            ExperimentSpec("unknown-kind")
        with pytest.raises(ParameterError):
            ExperimentSpec("sharpness-gradient", {"lam": 0.5})
        with pytest.raises(ParameterError):
            ExperimentSpec("convergence", {"levels": (100, 150)})

    def test_run_experiment_writes_bundle(self, tmp_path):
        spec = ExperimentSpec("convergence", {"levels": (100, 200)},
                              str(tmp_path / "run"))
        bundle = run_experiment(spec)
        assert bundle.passed
        report = json.loads((tmp_path / "run" / "report.json").read_text())
        assert report["pass"] is True
        assert (tmp_path / "run" / "report.csv").exists()

    def test_from_config(self, tmp_path):
        cfg = tmp_path / "exp.json"
        cfg.write_text(json.dumps({
            "kind": "convergence",
            "parameters": {"levels": [100, 200]},
            "output": str(tmp_path / "out"),
        }))
        spec = ExperimentSpec.from_config(cfg)
        assert spec.kind == "convergence"
        bundle = run_experiment(spec)
        assert (tmp_path / "out" / "report.json").exists()
        assert bundle.passed

    def test_series_csv_written_for_trajectory_runs(self, tmp_path):
        bundle = run_sharpness_gradient(1.5, points_per_probe=8)
        write_bundle(bundle, tmp_path / "sg", export_trajectory=True)
        assert (tmp_path / "sg" / "series.csv").exists()
        assert (tmp_path / "sg" / "trajectory.csv").exists()
        assert (tmp_path / "sg" / "trajectory.mcfg").exists()
        header = (tmp_path / "sg" / "series.csv").read_text().splitlines()[0]
        assert header.startswith("x,u_t0.0")


class TestCli:
    def test_convergence_command(self, tmp_path, capsys):
        code = main(["convergence", "--levels", "100,200",
                     "--output", str(tmp_path / "c")])
        assert code == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        assert (tmp_path / "c" / "report.csv").exists()

    def test_estimate_suite_deterministic_csv(self, tmp_path):
        for name in ("r1", "r2"):
            code = main(["estimate-suite", "--n", "1", "--count", "2",
                         "--seed", "9", "--nodes", "101",
                         "--output", str(tmp_path / name)])
            assert code == 0
        b1 = (tmp_path / "r1" / "report.csv").read_bytes()
        b2 = (tmp_path / "r2" / "report.csv").read_bytes()
        assert b1 == b2

    def test_report_roundtrip(self, tmp_path, capsys):
        main(["convergence", "--levels", "100,200", "--output", str(tmp_path / "c")])
        capsys.readouterr()
        code = main(["report", "--run", str(tmp_path / "c"), "--format", "csv"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0].startswith("name,measured,bound")
        code = main(["report", "--run", str(tmp_path / "c"), "--format", "json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["name"] == "convergence-grim-reaper"

    def test_simulate_with_config(self, tmp_path, capsys):
        cfg = tmp_path / "exp.json"
        cfg.write_text(json.dumps({
            "kind": "convergence",
            "parameters": {"levels": [100, 200]},
            "output": str(tmp_path / "sim"),
        }))
        assert main(["simulate", "--config", str(cfg)]) == 0
        assert (tmp_path / "sim" / "report.json").exists()

    def test_failing_run_exits_nonzero(self, monkeypatch, capsys):
        from mcflab.estimates import EstimateReport
        from mcflab.experiments import RunBundle
        import mcflab.cli as cli

        failing = RunBundle("stub", reports=[EstimateReport("bad", 2.0, 1.0)])

        monkeypatch.setattr(cli, "run_experiment", lambda spec, **kw: failing)
        code = main(["convergence", "--levels", "100,200"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out
