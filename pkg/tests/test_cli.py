import shutil
from pathlib import Path

import numpy as np
import pytest

from lubemon.bearing import save_coefficient_table
from lubemon.cli import main
from lubemon.config import generic_turbine_path


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, turbine_table):
    """Machine config with a prebuilt coefficient table cached next to it."""
    d = tmp_path_factory.mktemp("cli")
    machine = d / "machine.cfg"
    shutil.copy(generic_turbine_path(), machine)
    save_coefficient_table(turbine_table, d / "machine.coeffs.csv")
    return d


def write_scenario(path, machine, *, duration=8.0, discard=5.0, noise_um=1.0,
                   seed=3, lines=None):
    body = f"""
[scenario]
machine = {machine}
duration_s = {duration}
discard_s = {discard}
noise_um = {noise_um}
seed = {seed}

[flowrate.bearing1]
kind = constant
level = 0.85

[flowrate.bearing2]
kind = constant
level = 0.95
"""
    path.write_text(lines or body)
    return path


class TestExitCodes:
    def test_missing_machine_config(self, tmp_path, capsys):
        rc = main(["coeffs", "--config", str(tmp_path / "absent.cfg"),
                   "--out", str(tmp_path / "t.csv")])
        assert rc == 2
        assert "absent.cfg" in capsys.readouterr().err

    def test_usage_error_is_exit_1(self, capsys):
        rc = main(["sweep", "--config", "x.cfg", "--levels", "",
                   "--out", "y"])
        assert rc == 1

    def test_unknown_flag_is_exit_1(self, capsys):
        rc = main(["coeffs", "--nope"])
        assert rc == 1

    def test_corrupt_measurements_exit_2(self, workdir, tmp_path, capsys):
        scen = write_scenario(tmp_path / "scen.cfg", workdir / "machine.cfg")
        bad = tmp_path / "meas.csv"
        bad.write_text("time_s,disp_b1_x_m\n0,0\n")
        rc = main(["identify", "--config", str(scen),
                   "--measurements", str(bad), "--out", str(tmp_path / "e.csv")])
        assert rc == 2


class TestSimulate:
    def test_sample_count_and_determinism(self, workdir, tmp_path):
        # 10 s at 1 kHz sampled inclusively -> 10 001 rows (plus the header)
        scen = tmp_path / "scen.cfg"
        scen.write_text(f"""
[scenario]
machine = {workdir / 'machine.cfg'}
duration_s = 10.0
discard_s = 0.0
noise_um = 1.0
seed = 5

[flowrate.bearing1]
kind = constant
level = 1.0

[flowrate.bearing2]
kind = constant
level = 1.0
""")
        out1 = tmp_path / "m1.csv"
        out2 = tmp_path / "m2.csv"
        assert main(["simulate", "--config", str(scen), "--out", str(out1)]) == 0
        assert main(["simulate", "--config", str(scen), "--out", str(out2)]) == 0
        lines = out1.read_text().splitlines()
        assert len(lines) == 10_002
        assert out1.read_bytes() == out2.read_bytes()
        assert (tmp_path / "m1.csv.manifest.json").is_file()

    def test_sigma_zero_gives_clean_signals(self, workdir, tmp_path):
        scen = write_scenario(tmp_path / "scen.cfg", workdir / "machine.cfg",
                              duration=5.3, discard=5.0)
        out_clean = tmp_path / "clean.csv"
        out_noisy = tmp_path / "noisy.csv"
        assert main(["simulate", "--config", str(scen), "--out",
                     str(out_noisy)]) == 0
        assert main(["simulate", "--config", str(scen), "--sigma-um", "0",
                     "--out", str(out_clean)]) == 0
        from lubemon.scenarios import load_measurements
        _, Zc = load_measurements(out_clean)
        _, Zn = load_measurements(out_noisy)
        # clean displacements are smooth orbits, noisy ones jitter at ~1 um
        assert np.abs(np.diff(Zn[:, 0]) - np.diff(Zc[:, 0])).std() > 1e-7


class TestIdentify:
    def test_end_to_end_summary(self, workdir, tmp_path, capsys):
        scen = write_scenario(tmp_path / "scen.cfg", workdir / "machine.cfg")
        meas = tmp_path / "meas.csv"
        assert main(["simulate", "--config", str(scen), "--out", str(meas)]) == 0
        out = tmp_path / "est.csv"
        rc = main(["identify", "--config", str(scen),
                   "--measurements", str(meas), "--out", str(out)])
        assert rc == 0
        text = capsys.readouterr().out
        assert "converged" in text
        lines = out.read_text().splitlines()
        assert lines[0].startswith("time_s,q1_ml_min")
        # summary carries both flowrates and their relative errors
        import json
        manifest = json.loads((tmp_path / "est.csv.manifest.json").read_text())
        assert manifest["summary"]["converged"]
        assert max(manifest["summary"]["errors_pct"]) < 6.0


class TestReport:
    def test_trace_plot_written(self, workdir, tmp_path):
        scen = write_scenario(tmp_path / "scen.cfg", workdir / "machine.cfg")
        meas = tmp_path / "meas.csv"
        est = tmp_path / "est.csv"
        assert main(["simulate", "--config", str(scen), "--out", str(meas)]) == 0
        assert main(["identify", "--config", str(scen), "--measurements",
                     str(meas), "--out", str(est)]) == 0
        plots = tmp_path / "plots"
        rc = main(["report", str(est), str(meas), "--out", str(plots)])
        assert rc == 0
        svgs = list(plots.glob("*.svg"))
        assert len(svgs) >= 2
        assert all(p.stat().st_size > 0 for p in svgs)

    def test_two_run_overlay(self, workdir, tmp_path):
        scen = write_scenario(tmp_path / "scen.cfg", workdir / "machine.cfg")
        meas = tmp_path / "meas.csv"
        est1 = tmp_path / "est1.csv"
        est2 = tmp_path / "est2.csv"
        assert main(["simulate", "--config", str(scen), "--out", str(meas)]) == 0
        assert main(["identify", "--config", str(scen), "--measurements",
                     str(meas), "--out", str(est1)]) == 0
        assert main(["identify", "--config", str(scen), "--measurements",
                     str(meas), "--out", str(est2)]) == 0
        plots = tmp_path / "plots2"
        assert main(["report", str(est1), str(est2), "--out", str(plots)]) == 0
        assert (plots / "flowrate_traces.svg").is_file()

    def test_corrupt_input_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("time_s,q1_ml_min,nope\n1,2,3\n")
        rc = main(["report", str(bad), "--out", str(tmp_path)])
        assert rc == 2


class TestLiveReplay:
    def test_short_live_replay(self, workdir, tmp_path, capsys):
        scen = write_scenario(tmp_path / "scen.cfg", workdir / "machine.cfg",
                              duration=5.4, discard=5.0)
        meas = tmp_path / "meas.csv"
        assert main(["simulate", "--config", str(scen), "--out", str(meas)]) == 0
        out = tmp_path / "est.csv"
        rc = main(["identify", "--config", str(scen), "--measurements",
                   str(meas), "--out", str(out), "--live"])
        assert rc == 0
        text = capsys.readouterr().out
        assert "live replay" in text
        assert out.is_file()


class TestComputedLoadSplit:
    def test_reactions_used(self, workdir, tmp_path):
        from lubemon.config import load_machine
        text = (workdir / "machine.cfg").read_text()
        alt = tmp_path / "machine_computed.cfg"
        alt.write_text(text.replace("load_split = equal",
                                    "load_split = computed"))
        machine = load_machine(alt)
        l1, l2 = machine.bearing_loads()
        assert l1[1] != l2[1]          # FEM reactions, not an even split
        assert abs(l1[1] + l2[1]) == pytest.approx(
            machine.rotor.total_mass() * machine.rotor.gravity, rel=1e-9)
