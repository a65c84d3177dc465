import json
import os

import numpy as np
import pytest

from czmap.cli import main
from czmap.errors import ScenarioError
from czmap.report import read_reports
from czmap.runner import run_scenario
from czmap.scenario import fixture_path, load_scenario

BAD_SYMMETRY = """
[manifold twisted]
coordinates = x1, x2
lower = -1, -1
upper = 1, 1
resolution = 9, 9
metric.1.1 = 1
metric.1.2 = x1
metric.2.1 = x2
metric.2.2 = 1
r1_half = inf

[manifold target]
coordinates = y1, y2
lower = -2, -2
upper = 2, 2
resolution = 5, 5
metric.1.1 = 1
metric.1.2 = 0
metric.2.2 = 1
r1_half = inf

[map m]
source = twisted
target = target
component.1 = x1
component.2 = x2
lipschitz = 1

[run]
mode = global
p = 2
basepoint = 0, 0
"""


class TestLoader:
    def test_shipped_fixtures_all_load(self):
        for name in ("flat-identity", "sphere-immersion", "sphere-global",
                     "cylinder-immersion", "graph-immersion", "hyperbolic-map",
                     "flat-to-sphere", "sine-search", "saddle-search",
                     "lemma-battery", "ball-estimate"):
            scenario = load_scenario(fixture_path(name))
            assert scenario.name == name

    def test_explicit_metric_derivative_oracles(self, tmp_path):
        text = """
[manifold curved]
coordinates = x, y
lower = -1, 0.5
upper = 1, 2
resolution = 9, 9
metric.1.1 = 1/(y*y)
metric.1.2 = 0
metric.2.2 = 1/(y*y)
metric_derivative.1.1.1 = 0
metric_derivative.1.1.2 = -2/(y*y*y)
metric_derivative.2.2.1 = 0
metric_derivative.2.2.2 = -2/(y*y*y)
r1_half = 0.2

[manifold flat]
coordinates = u, v
lower = -2, -2
upper = 2, 2
resolution = 5, 5
metric.1.1 = 1
metric.1.2 = 0
metric.2.2 = 1
r1_half = inf

[map f]
source = curved
target = flat
component.1 = x
component.2 = log(y)
lipschitz = 2

[run]
mode = global
p = 2
basepoint = 0, 0
"""
        path = tmp_path / "deriv.scn"
        path.write_text(text)
        scenario = load_scenario(str(path))
        chart = scenario.manifolds["curved"].build_chart()
        import numpy as np
        pt = np.array([0.3, 1.25])
        dg = chart.metric_derivative(pt)
        assert dg[0, 0, 1] == pytest.approx(-2.0 / 1.25 ** 3)
        assert (0, 0, 1) in chart.derivative_oracles

    def test_fixture_env_var_overrides_directory(self, tmp_path, monkeypatch):
        from czmap.scenario import fixture_dir
        monkeypatch.setenv("CZMAP_FIXTURES", str(tmp_path))
        assert fixture_dir() == str(tmp_path)

    def test_sphere_scenario_is_isometric_at_declared_resolution(self):
        from czmap.maps import immersion_check
        scenario = load_scenario(fixture_path("sphere-immersion"))
        _, _, map_model = scenario.build_models()
        assert immersion_check(map_model).isometry_defect <= 1e-8

    def test_symmetry_violation_detected(self, tmp_path):
        path = tmp_path / "bad.scn"
        path.write_text(BAD_SYMMETRY)
        with pytest.raises(ScenarioError) as err:
            load_scenario(str(path))
        assert any(i.invariant == "SymmetryViolation" for i in err.value.issues)

    def test_all_issues_collected_with_lines(self, tmp_path):
        text = BAD_SYMMETRY.replace("p = 2", "p = 0.5").replace(
            "lipschitz = 1", "lipschitz = -2")
        path = tmp_path / "bad2.scn"
        path.write_text(text)
        with pytest.raises(ScenarioError) as err:
            load_scenario(str(path))
        kinds = {i.invariant for i in err.value.issues}
        assert "SymmetryViolation" in kinds
        assert "UnsupportedExponent" in kinds
        assert "Lipschitz" in kinds
        assert all(i.line >= 0 and i.path.endswith("bad2.scn")
                   for i in err.value.issues)

    def test_missing_file(self):
        with pytest.raises(ScenarioError):
            load_scenario("/nonexistent/path.scn")

    def test_located_expression_error(self, tmp_path):
        text = BAD_SYMMETRY.replace("metric.2.1 = x2", "metric.2.1 = x1") \
                           .replace("component.1 = x1", "component.1 = x1 +* 2")
        path = tmp_path / "bad3.scn"
        path.write_text(text)
        with pytest.raises(ScenarioError) as err:
            load_scenario(str(path))
        issue = next(i for i in err.value.issues if i.invariant == "Expression")
        assert "component.1 = x1 +* 2" in BAD_SYMMETRY.replace(
            "component.1 = x1", "component.1 = x1 +* 2")
        assert issue.line > 0


class TestRunner:
    def test_flat_identity_report_contents(self):
        scenario = load_scenario(fixture_path("flat-identity"))
        reports = run_scenario(scenario)
        assert len(reports) == 2  # two grid levels
        for rep in reports:
            assert rep.passed
            assert rep.terms["lhs_hess"] == 0.0
            assert rep.ratio == 0.0
        assert reports[1].checks["ratio_drift_ok"]

    def test_ball_mode_scenario(self):
        scenario = load_scenario(fixture_path("ball-estimate"))
        reports = run_scenario(scenario)
        assert len(reports) == 1
        rep = reports[0]
        assert rep.passed
        assert rep.mode == "ball"
        for key in ("lhs_hess", "t_laplacian", "t_du", "t_du_2p_sq", "t_dist"):
            assert key in rep.terms
        assert np.isfinite(rep.ratio) and rep.ratio > 0

    def test_run_and_report_writes_files(self, tmp_path):
        from czmap.runner import run_and_report
        scenario = load_scenario(fixture_path("flat-identity"))
        scenario.run.resolution_ladder = [29]
        reports, jsonl, tsv = run_and_report(scenario,
                                             str(tmp_path / "out" / "rep"))
        assert len(reports) == 1
        assert os.path.exists(jsonl) and os.path.exists(tsv)

    def test_failed_run_reports_error_and_nonzero_exit(self, tmp_path):
        # ball mode without its parameters is an engine error, not a crash
        scenario = load_scenario(fixture_path("flat-identity"))
        scenario.run.mode = "ball"
        reports = run_scenario(scenario)
        assert any(r.error for r in reports)
        assert not all(r.passed for r in reports)

    def test_estimated_radius_resolution(self, tmp_path):
        from czmap.runner import resolve_radii
        text = open(fixture_path("hyperbolic-map")).read().replace(
            "r1_half = 0.25", "r1_half = estimate").replace(
            "lower = -0.2, 1.3", "lower = -0.45, 1.05").replace(
            "upper = 0.2, 1.7", "upper = 0.45, 1.95").replace(
            "lower = -0.25, 0.2", "lower = -0.5, 0").replace(
            "upper = 0.25, 0.6", "upper = 0.5, 0.75").replace(
            "lipschitz = 1.7", "lipschitz = 2").replace(
            "resolution = 33, 33", "resolution = 49, 49")
        path = tmp_path / "est.scn"
        path.write_text(text)
        scenario = load_scenario(str(path))
        _, _, map_model = scenario.build_models()
        radii = resolve_radii(scenario, map_model.source_chart,
                              map_model.target_chart)
        assert radii.source == "estimated"
        assert 0.0 < radii.r1M < 0.45
        assert np.isinf(radii.r1N)

    def test_lemma_battery_scenario(self):
        scenario = load_scenario(fixture_path("lemma-battery"))
        reports = run_scenario(scenario)
        assert len(reports) == 9  # three exponents, three scales
        for rep in reports:
            assert rep.passed
            assert rep.checks["identities_pass"]
            assert np.isfinite(rep.terms["c_emp"]) and rep.terms["c_emp"] > 0

    def test_uniform_continuity_key_flags_extrapolation(self, tmp_path):
        text = open(fixture_path("flat-identity")).read().replace(
            "r1_half = inf", "r1_half = 10").replace(
            "resolution_ladder = 29, 57", "resolution_ladder = 29")
        path = tmp_path / "uc.scn"
        path.write_text(text + "\n")
        scenario = load_scenario(str(path))
        scenario.run.uc_radius = 0.2
        reports = run_scenario(scenario)
        assert reports[0].passed
        assert reports[0].extra["extrapolated"] is True

    def test_sphere_intro_values(self):
        import math
        scenario = load_scenario(fixture_path("sphere-immersion"))
        reports = run_scenario(scenario)
        rep = reports[0]
        assert rep.passed
        assert rep.terms["norm_ii"] == pytest.approx(math.sqrt(8 * math.pi),
                                                     abs=1e-2)
        assert rep.terms["norm_h"] == pytest.approx(2 * math.sqrt(4 * math.pi),
                                                    abs=1e-2)

    def test_reports_are_deterministic(self, tmp_path):
        from czmap.report import write_reports
        scenario = load_scenario(fixture_path("sphere-immersion"))
        paths = []
        for tag in ("a", "b"):
            reports = run_scenario(scenario)
            for rep in reports:
                rep.timing_seconds = 0.0
            jsonl, tsv = write_reports(reports, str(tmp_path / tag / "rep"))
            paths.append((jsonl, tsv))
        a = open(paths[0][0], "rb").read()
        b = open(paths[1][0], "rb").read()
        assert a == b
        assert open(paths[0][1], "rb").read() == open(paths[1][1], "rb").read()


class TestCli:
    def test_validate_ok(self, capsys):
        assert main(["validate", "--scenario", "flat-identity"]) == 0
        assert "ok" in capsys.readouterr().out

    def test_validate_bad_exits_nonzero(self, tmp_path, capsys):
        path = tmp_path / "bad.scn"
        path.write_text(BAD_SYMMETRY)
        assert main(["validate", "--scenario", str(path)]) == 1
        assert "SymmetryViolation" in capsys.readouterr().err

    def test_run_writes_reports_and_exits_zero(self, tmp_path, capsys):
        out = str(tmp_path / "rep")
        code = main(["run", "--scenario", "flat-identity", "--resolution",
                     "29", "--out", out])
        assert code == 0
        records = read_reports(out + ".jsonl")
        assert len(records) == 1
        assert records[0]["passed"] is True
        assert os.path.exists(out + ".tsv")
        with open(out + ".tsv") as fh:
            header = fh.readline().strip().split("\t")
        assert header[:4] == ["scenario", "mode", "p", "resolution"]

    def test_report_subcommand_prints(self, tmp_path, capsys):
        out = str(tmp_path / "rep")
        main(["run", "--scenario", "flat-identity", "--resolution", "29",
              "--out", out])
        capsys.readouterr()
        assert main(["report", out + ".jsonl"]) == 0
        assert "flat-identity" in capsys.readouterr().out

    def test_mode_override(self, capsys):
        code = main(["run", "--scenario", "sphere-immersion", "--mode",
                     "corollaryA", "--p", "2"])
        assert code == 0
        assert "corollaryA" in capsys.readouterr().out

    def test_radius_subcommand_flat_sentinel(self, tmp_path, capsys):
        text = """
[manifold plane]
coordinates = x1, x2
lower = -2, -2
upper = 2, 2
resolution = 41, 41
metric.1.1 = 1
metric.1.2 = 0
metric.2.2 = 1
base_point = 0, 0
r1_half = inf

[run]
mode = global
p = 2
basepoint = 0, 0
"""
        # a map section is not needed for the radius estimator
        path = tmp_path / "plane.scn"
        path.write_text(text + """
[manifold t2]
coordinates = y1, y2
lower = -2, -2
upper = 2, 2
resolution = 5, 5
metric.1.1 = 1
metric.1.2 = 0
metric.2.2 = 1
r1_half = inf

[map id]
source = plane
target = t2
component.1 = x1
component.2 = x2
lipschitz = 1
""")
        assert main(["radius", "--scenario", str(path)]) == 0
        out = capsys.readouterr().out
        assert ">=" in out
