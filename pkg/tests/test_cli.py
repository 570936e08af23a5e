import csv
import json
import logging

import numpy as np
import pytest

from afm2lifshitz import __version__
from afm2lifshitz.afm2lifshitz_args import ArgumentParser
from afm2lifshitz.afm2lifshitz_calibration import electrostatic_basis
from afm2lifshitz.afm2lifshitz_commands import EXIT_ACCEPTED, EXIT_ERROR, EXIT_REJECTED, StageError, stage
from afm2lifshitz.afm2lifshitz_lifshitz import SpherePlateGeometry, force_curve, ideal_metal_force
from afm2lifshitz.afm2lifshitz_report import ReportGenerator
from afm2lifshitz.afm2lifshitz_utils import NM, PN
from afm2lifshitz.main import main

RADIUS_UM = 101.3
SETS = 25


@pytest.fixture(autouse=True)
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)


def read_rows(path):
    with open(path, encoding="utf-8") as f:
        return list(csv.DictReader(line for line in f if not line.startswith("#")))


@pytest.fixture
def workspace(tmp_path):
    """Run directory with flat histograms, a synthetic campaign and a config"""
    (tmp_path / "flat.csv").write_text("h_nm,v\n0,1\n", encoding="utf-8")

    rng = np.random.default_rng(42)
    z_nm = np.arange(99.0, 141.5, 0.5)
    truth = ideal_metal_force(SpherePlateGeometry(RADIUS_UM * 1e-6), z_nm * 1e-9) / 1e-12
    forces = truth[:, None] + rng.normal(0.0, 5.0, (z_nm.size, SETS))
    lines = ["z_nm," + ",".join(f"set{i + 1}" for i in range(SETS))]
    lines += [f"{float(z)!r}," + ",".join(repr(float(v)) for v in row) for z, row in zip(z_nm, forces)]
    (tmp_path / "campaign.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    config = {
        "grid": {"zmin_nm": 100.0, "zmax_nm": 140.0, "n": 41},
        "smoothing_window": 10,
        "theory_points": 6,
        "xi_grid": {"min": 1e12, "max": 1e17, "n": 11},
        "sphere_histogram": "flat.csv",
        "plate_histogram": "flat.csv",
        "materials": {
            "ideal": "ideal_metal",
            "drude": {"kind": "drude", "omega_p_eV": 9.0, "gamma_eV": 0.035},
        },
        "sphere": "ideal",
        "plate": "ideal",
        "variants": [
            {"name": "ideal", "sphere": "ideal", "plate": "ideal", "experimental": True},
            {"name": "drude", "sphere": "drude", "plate": "drude", "experimental": False},
        ],
        "comparison_window_nm": [100.0, 140.0],
        "campaign": "campaign.csv",
    }
    (tmp_path / "run.json").write_text(json.dumps(config), encoding="utf-8")
    return tmp_path


def run(workspace, *argv):
    return main([*argv, "--config", str(workspace / "run.json"), "--out", str(workspace / "out"), "--quiet"])


def update_config(workspace, **settings):
    config = json.loads((workspace / "run.json").read_text(encoding="utf-8"))
    config.update(settings)
    (workspace / "run.json").write_text(json.dumps(config), encoding="utf-8")


class TestArguments:
    def test_command_required(self):
        with pytest.raises(SystemExit):
            ArgumentParser().parse_args([])

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            ArgumentParser().parse_args(["--version"])
        assert excinfo.value.code == 0
        assert __version__ in capsys.readouterr().out

    @pytest.mark.parametrize(
        "argv",
        [
            ["stats", "--beta", "1.5"],
            ["stats", "--grid", "300,100,10"],
            ["stats", "--workers", "-1"],
            ["stats", "--config", "/nonexistent/run.json"],
            ["stats", "--debug", "--warning"],
            ["stats", "--console", "--quiet"],
            ["fit"],
        ],
    )
    def test_rejected_flags(self, argv):
        with pytest.raises(SystemExit):
            ArgumentParser().parse_args(argv)

    def test_common_options_after_command(self):
        args = ArgumentParser().parse_args(["force", "--variant", "drude", "--workers", "0", "--paper-compat"])
        assert args.command == "force"
        assert args.variant == "drude"
        assert args.workers == 0
        assert args.paper_compat is True
        assert args.metadata is None

    def test_repeatable_material(self):
        args = ArgumentParser().parse_args(["permittivity", "--material", "gold", "--material", "doped_si"])
        assert args.material == ["gold", "doped_si"]

    def test_logging_config(self):
        parser = ArgumentParser()
        assert parser.get_logging_config(parser.parse_args(["stats", "--debug", "--console"])) == {
            "level": "debug",
            "console": True,
            "quiet": False,
        }
        assert parser.get_logging_config(parser.parse_args(["stats", "-w", "-q"]))["quiet"]

    def test_system_defaults(self, tmp_path):
        parser = ArgumentParser()
        defaults = parser.get_system_defaults(parser.parse_args(["stats", "--out", str(tmp_path)]))
        assert defaults == {"out_dir": tmp_path, "log_file": tmp_path / "afm2lifshitz.log"}


class TestReport:
    def test_csv_formatting(self, tmp_path):
        report = ReportGenerator(tmp_path, digits=4)
        path = report.write_csv("table.csv", ("z_nm", "F_pN", "inside"), [(100.0, -275.81234, True), (7, 0.0, False)])
        assert path.read_text(encoding="utf-8") == "z_nm,F_pN,inside\n100.00,-275.8,1\n7.00,0,0\n"
        assert report.summary() == "table.csv"

    def test_metadata_headers(self, tmp_path):
        report = ReportGenerator(tmp_path, metadata=True)
        text = report.write_csv("table.csv", ("a",), [(1.0,)]).read_text(encoding="utf-8")
        assert text.startswith("# generator: afm2lifshitz ")
        data = json.loads(report.write_json("summary.json", {"value": np.float64(2.5)}).read_text(encoding="utf-8"))
        assert data["value"] == 2.5
        assert "created" in data["metadata"]

    def test_separations_keep_two_decimals(self, tmp_path):
        report = ReportGenerator(tmp_path, digits=4)
        rows = [(100.07, 1.234567), (100.24, 2.0), (349.97, 3.0)]
        path = report.write_csv("table.csv", ("z_rel_nm", "value"), rows)
        assert path.read_text(encoding="utf-8").splitlines()[1:] == ["100.07,1.235", "100.24,2", "349.97,3"]

    def test_staged_files_appear_together(self, tmp_path):
        report = ReportGenerator(tmp_path)
        with report.staged():
            report.write_csv("a.csv", ("z_nm",), [(1.0,)])
            report.write_json("b.json", {"value": 1})
            assert not (tmp_path / "a.csv").exists()
        assert sorted(p.name for p in tmp_path.iterdir()) == ["a.csv", "b.json"]
        assert report.summary() == "a.csv, b.json"

    def test_staged_failure_leaves_nothing_behind(self, tmp_path):
        report = ReportGenerator(tmp_path)
        with pytest.raises(RuntimeError):
            with report.staged():
                report.write_csv("a.csv", ("z_nm",), [(1.0,)])
                raise RuntimeError("band computation failed")
        assert list(tmp_path.iterdir()) == []
        assert report.summary() is None

    def test_bad_row_leaves_nothing_behind(self, tmp_path):
        report = ReportGenerator(tmp_path)
        with pytest.raises(ValueError):
            report.write_csv("table.csv", ("a", "b"), [(1.0,)])
        assert list(tmp_path.iterdir()) == []
        assert report.summary() is None


def test_stage_wraps_cause():
    with pytest.raises(StageError) as excinfo:
        with stage("alignment"):
            raise ValueError("grid point outside measured range")
    assert str(excinfo.value) == "[alignment] ValueError: grid point outside measured range"
    assert isinstance(excinfo.value.cause, ValueError)


class TestCommands:
    def test_permittivity(self, workspace):
        assert run(workspace, "permittivity", "--material", "drude") == EXIT_ACCEPTED
        rows = read_rows(workspace / "out" / "permittivity_drude.csv")
        assert len(rows) == 11
        eps = [float(r["eps"]) for r in rows]
        assert eps == sorted(eps, reverse=True)

    def test_permittivity_of_doped_silicon_and_vacuum(self, workspace):
        update_config(
            workspace,
            materials={"doped": "doped_si", "dielectric": "dielectric_si", "vacuum": "vacuum"},
            sphere="doped",
            plate="vacuum",
        )
        argv = ("permittivity", "--material", "doped", "--material", "dielectric", "--material", "vacuum")
        assert run(workspace, *argv) == EXIT_ACCEPTED
        out = workspace / "out"
        vacuum = [float(r["eps"]) for r in read_rows(out / "permittivity_vacuum.csv")]
        assert vacuum == [1.0] * 11
        doped = [float(r["eps"]) for r in read_rows(out / "permittivity_doped.csv")]
        dielectric = [float(r["eps"]) for r in read_rows(out / "permittivity_dielectric.csv")]
        assert doped == sorted(doped, reverse=True)
        assert all(d >= e for d, e in zip(doped, dielectric))
        assert doped[0] > 10 * dielectric[0]

    def test_force_on_pitch_grid(self, workspace):
        update_config(workspace, grid_pitch_nm=2.5)
        assert run(workspace, "force", "--variant", "ideal", "--grid", "100,110") == EXIT_ACCEPTED
        rows = read_rows(workspace / "out" / "force_ideal.csv")
        assert [r["z_nm"] for r in rows] == ["100.00", "102.50", "105.00", "107.50", "110.00"]

    def test_force(self, workspace):
        assert run(workspace, "force", "--variant", "ideal", "--grid", "100,140,5") == EXIT_ACCEPTED
        rows = read_rows(workspace / "out" / "force_ideal.csv")
        assert [float(r["z_nm"]) for r in rows] == [100, 110, 120, 130, 140]
        geom = SpherePlateGeometry(RADIUS_UM * 1e-6)
        assert float(rows[0]["F_pN"]) == pytest.approx(ideal_metal_force(geom, 100e-9) / 1e-12, rel=1e-3)

    def test_force_sensitivity(self, workspace):
        code = run(workspace, "force", "--variant", "drude", "--grid", "100,140,3", "--sensitivity")
        assert code == EXIT_ACCEPTED
        rows = read_rows(workspace / "out" / "drude_sensitivity_drude.csv")
        assert len(rows) == 3
        assert all(float(r["change_percent"]) > 0 for r in rows)

    def test_unknown_variant(self, workspace):
        assert run(workspace, "force", "--variant", "platinum") == EXIT_ERROR
        assert "unknown variant" in (workspace / "out" / "afm2lifshitz.log").read_text(encoding="utf-8")

    def test_roughness(self, workspace):
        assert run(workspace, "roughness") == EXIT_ACCEPTED
        rows = read_rows(workspace / "out" / "roughness.csv")
        assert len(rows) == 41
        assert float(rows[0]["ratio_additive"]) == pytest.approx(1.0, abs=1e-9)
        summary = json.loads((workspace / "out" / "roughness_summary.json").read_text(encoding="utf-8"))
        assert summary["sphere"]["zero_level_nm"] == 0.0

    def test_stats(self, workspace):
        assert run(workspace, "stats") == EXIT_ACCEPTED
        out = workspace / "out"
        assert len(read_rows(out / "mean_force.csv")) == 41
        assert [float(r["z_nm"]) for r in read_rows(out / "error_bars.csv")] == [100, 110, 120, 130, 140]
        budget = json.loads((out / "error_budget.json").read_text(encoding="utf-8"))
        assert budget["sets"] == SETS
        assert len(budget["normality"]) == 3
        point = budget["points"]["100.00"]
        assert point["total_pN"] >= point["random_pN"]
        assert point["theory_total_percent"] > 0

    def test_compare_rejects_drude_metal(self, workspace):
        assert run(workspace, "compare") == EXIT_REJECTED
        out = workspace / "out"
        summary = json.loads((out / "compare_summary.json").read_text(encoding="utf-8"))
        verdicts = {v["name"]: v for v in summary["variants"]}
        assert verdicts["ideal"]["consistent95"] and verdicts["ideal"]["consistent70"]
        assert not verdicts["drude"]["consistent70"]
        assert summary["exit_code"] == EXIT_REJECTED
        assert summary["points"] == 41
        assert len(read_rows(out / "compare_ideal.csv")) == 41

    def test_compare_accepts_consistent_variant(self, workspace):
        config = json.loads((workspace / "run.json").read_text(encoding="utf-8"))
        config["variants"] = config["variants"][:1]
        (workspace / "run.json").write_text(json.dumps(config), encoding="utf-8")
        assert run(workspace, "compare") == EXIT_ACCEPTED

    def test_alignment_failure_names_stage(self, workspace):
        assert run(workspace, "stats", "--grid", "90,140,51") == EXIT_ERROR
        log = (workspace / "out" / "afm2lifshitz.log").read_text(encoding="utf-8")
        assert "[alignment]" in log
        assert not (workspace / "out" / "mean_force.csv").exists()

    def test_write_config(self, workspace):
        target = workspace / "effective.json"
        assert run(workspace, "stats", "--beta", "0.9", "--write-config", str(target)) == EXIT_ACCEPTED
        assert json.loads(target.read_text(encoding="utf-8"))["beta"] == 0.9

    def test_calibrate(self, workspace):
        radius = RADIUS_UM * 1e-6
        z0, v0 = 32.1e-9, -0.114
        lines = ["z_nm,V_volt,F_pN"]
        for z_rel in np.linspace(570e-9, 1470e-9, 10):
            x = electrostatic_basis(radius, z_rel + z0, warn=False)
            for v in (-0.6, -0.35, -0.1, 0.15, 0.4):
                lines.append(f"{float(z_rel / 1e-9)!r},{v!r},{float(x * (v - v0) ** 2 / 1e-12)!r}")
        (workspace / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        config = json.loads((workspace / "run.json").read_text(encoding="utf-8"))
        config["sweep"] = "sweep.csv"
        (workspace / "run.json").write_text(json.dumps(config), encoding="utf-8")

        assert run(workspace, "calibrate") == EXIT_ACCEPTED
        result = json.loads((workspace / "out" / "calibration.json").read_text(encoding="utf-8"))
        assert result["separation_model"]["z0_nm"] == pytest.approx(32.1, abs=0.05)
        assert result["separation_model"]["v0_volt"] == pytest.approx(v0, abs=1e-6)
        assert result["v0_independence"]["dof"] == 9
        assert len(read_rows(workspace / "out" / "parabola_fits.csv")) == 10

    def test_calibrate_without_sweep(self, workspace):
        assert run(workspace, "calibrate") == EXIT_ERROR

    def test_config_error_reported_on_stderr(self, workspace, capsys):
        (workspace / "run.json").write_text("{not json", encoding="utf-8")
        assert run(workspace, "stats") == EXIT_ERROR
        err = capsys.readouterr().err
        assert "ERROR: Critical error:" in err
        assert "invalid JSON" in err

    def test_failed_compare_publishes_no_reports(self, workspace, monkeypatch):
        write_json = ReportGenerator.write_json

        def failing_write_json(report, name, data):
            if name == "compare_summary.json":
                raise OSError("No space left on device")
            return write_json(report, name, data)

        monkeypatch.setattr(ReportGenerator, "write_json", failing_write_json)
        assert run(workspace, "compare") == EXIT_ERROR
        assert sorted(p.name for p in (workspace / "out").iterdir()) == ["afm2lifshitz.log"]

    @pytest.mark.slow
    def test_compare_separates_conductive_from_dielectric_silicon(self, workspace, geometry, au_si_pair):
        gold, silicon = au_si_pair
        truth = force_curve(geometry, gold, silicon, np.geomspace(58.5, 101.5, 12) * NM).interpolator()
        rng = np.random.default_rng(7)
        z_nm = np.arange(59.0, 101.5, 0.5)
        forces = truth(z_nm * NM)[:, None] / PN + rng.normal(0.0, 0.5, (z_nm.size, SETS))
        lines = ["z_nm," + ",".join(f"set{i + 1}" for i in range(SETS))]
        lines += [f"{float(z)!r}," + ",".join(repr(float(v)) for v in row) for z, row in zip(z_nm, forces)]
        (workspace / "campaign.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        update_config(
            workspace,
            grid={"zmin_nm": 60.0, "zmax_nm": 100.0, "n": 41},
            theory_points=12,
            radius_uncertainty_um=0.0,
            dz_nm=0.01,
            delta1=1e-4,
            systematic_errors_pN=[0.01],
            materials={"gold": "gold", "doped_si": "doped_si", "dielectric_si": "dielectric_si"},
            sphere="gold",
            plate="doped_si",
            variants=[
                {"name": "conductive", "sphere": "gold", "plate": "doped_si", "experimental": True},
                {"name": "dielectric", "sphere": "gold", "plate": "dielectric_si", "experimental": False},
            ],
            comparison_window_nm=[60.0, 100.0],
        )

        assert run(workspace, "compare") == EXIT_REJECTED
        summary = json.loads((workspace / "out" / "compare_summary.json").read_text(encoding="utf-8"))
        verdicts = {v["name"]: v for v in summary["variants"]}
        assert verdicts["conductive"]["consistent95"] and verdicts["conductive"]["consistent70"]
        assert not verdicts["dielectric"]["consistent70"]
