"""Command-line contracts: exit codes, file formats, determinism."""

import math

import numpy as np
import pytest

from lmcf.cli import main
from lmcf.config_io import ConfigError, PRESETS, load_setup, parse_config_text
from lmcf.fields import GridSpec
from lmcf.flow import checkpoint_load
from lmcf.monitors import MONITOR_HEADER, read_monitor_csv

QUICK_CONFIG = """
dim = 1
sizes = 16
kappa = 0
t_max = 0.6
conv_tol = 1e-8
checkpoint_every = 20
u0_preset = single_mode
u0_amplitude = 1e-3
u0_modes = 1
"""


@pytest.fixture()
def quick_config(tmp_path):
    path = tmp_path / "quick.cfg"
    path.write_text(QUICK_CONFIG)
    return str(path)


class TestConfigParsing:
    def test_roundtrip_defaults(self):
        setup = parse_config_text(QUICK_CONFIG)
        assert setup.cfg.grid == GridSpec(1, (16,))
        assert setup.cfg.cfl == 0.2
        assert setup.cfg.C0 == 100.0
        assert setup.u0_modes == (1,)

    @pytest.mark.parametrize(
        "text,match",
        [
            ("dim = 1\n", "missing required key"),
            (QUICK_CONFIG + "bogus_key = 3\n", "unknown key"),
            (QUICK_CONFIG + "kappa = 0\n", "duplicate key"),
            (QUICK_CONFIG.replace("sizes = 16", "sizes = fifteen"), "sizes"),
            (QUICK_CONFIG.replace("u0_preset = single_mode", "u0_preset = wavelet"),
             "unknown u0_preset"),
            ("this is not a config\n", "expected 'key = value'"),
        ],
    )
    def test_malformed(self, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config_text(text)

    def test_format_parse_roundtrip(self):
        from lmcf.config_io import format_config

        setup = parse_config_text(QUICK_CONFIG)
        again = parse_config_text(format_config(setup))
        assert again.cfg == setup.cfg
        assert again.u0_preset == setup.u0_preset
        assert again.u0_amplitude == setup.u0_amplitude
        assert again.u0_modes == setup.u0_modes

    def test_scalar_sizes_broadcast(self):
        text = QUICK_CONFIG.replace("dim = 1", "dim = 2")
        setup = parse_config_text(text)
        assert setup.cfg.grid == GridSpec(2, (16, 16))

    def test_presets_parse(self):
        for name in PRESETS:
            setup = load_setup(name)
            assert setup.cfg.t_max > 0

    def test_unknown_config_argument(self):
        with pytest.raises(ConfigError, match="neither a config file nor a preset"):
            load_setup("no_such_preset_or_file")


class TestRunCommand:
    def test_run_quick_config(self, quick_config, tmp_path):
        out = tmp_path / "out"
        assert main(["run", quick_config, "-o", str(out)]) == 0
        records = read_monitor_csv(out / "monitors.csv")
        header = (out / "monitors.csv").read_text().splitlines()[0]
        assert header == MONITOR_HEADER
        assert (out / "final.lmcf").exists()
        assert "outcome = converged" in (out / "summary.txt").read_text()
        assert records[-1].max_du < 1e-8

    def test_monitor_invariants(self, quick_config, tmp_path):
        out = tmp_path / "out"
        main(["run", quick_config, "-o", str(out)])
        records = read_monitor_csv(out / "monitors.csv")
        ts = [r.t for r in records]
        assert all(b > a for a, b in zip(ts, ts[1:]))
        for r in records:
            assert r.psi_max >= 0.0
            assert r.volume >= 1.0 - 1e-10
            assert r.theta_min <= r.theta_max
            assert max(abs(r.theta_min), abs(r.theta_max)) < math.pi / 2
            assert r.dt > 0.0

    def test_malformed_config_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("dim = 1\nwhat even is this\n")
        assert main(["run", str(bad), "-o", str(tmp_path / "o")]) == 1
        assert "lmcf:" in capsys.readouterr().err

    def test_missing_config_exits_1(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.cfg"), "-o", str(tmp_path / "o")]) == 1
        assert "neither" in capsys.readouterr().err

    def test_invalid_initial_data_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "zero_mode.cfg"
        cfg.write_text(QUICK_CONFIG.replace("u0_modes = 1", "u0_modes = 0"))
        assert main(["run", str(cfg), "-o", str(tmp_path / "o")]) == 1
        assert "nonzero" in capsys.readouterr().err

    def test_rerun_is_bit_identical(self, quick_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", quick_config, "-o", str(out1)])
        main(["run", quick_config, "-o", str(out2)])
        for name in ("monitors.csv", "final.lmcf", "summary.txt"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_blowup_exit_code(self, tmp_path):
        cfg = tmp_path / "explode.cfg"
        cfg.write_text(QUICK_CONFIG.replace("u0_amplitude = 1e-3", "u0_amplitude = 0.05")
                       .replace("u0_modes = 1", "u0_modes = 8"))
        with pytest.warns(UserWarning):
            code = main(["run", str(cfg), "-o", str(tmp_path / "o")])
        assert code == 3


class TestSweepCommand:
    def test_epsilon_sweep_all_converge(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(QUICK_CONFIG.replace("conv_tol = 1e-8", "conv_tol = 1e-6"))
        out = tmp_path / "sweep"
        with pytest.warns(UserWarning):  # the 1e-1 run leaves the certified region
            code = main(["sweep", str(cfg), "--param", "epsilon",
                         "--values", "1e-3,1e-2,1e-1", "-o", str(out)])
        assert code == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[0] == "value,outcome,final_psi_max,fitted_rate"
        assert len(rows) == 4
        assert all(row.split(",")[1] == "converged" for row in rows[1:])

    def test_grid_refinement_agrees(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(QUICK_CONFIG.replace("conv_tol = 1e-8", "conv_tol = 1e-6"))
        out = tmp_path / "sweep"
        code = main(["sweep", str(cfg), "--param", "N", "--values", "16,32",
                     "-o", str(out)])
        assert code == 0
        coarse, _ = checkpoint_load(out / "N_16" / "final.lmcf")
        fine, _ = checkpoint_load(out / "N_32" / "final.lmcf")
        assert np.max(np.abs(fine.u.values[::2] - coarse.u.values)) < 1e-8

    def test_invalid_value_marks_error_row(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(QUICK_CONFIG)
        out = tmp_path / "sweep"
        code = main(["sweep", str(cfg), "--param", "N", "--values", "15,16",
                     "-o", str(out)])
        assert code == 1  # the odd grid is a config error; the good value still runs
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[1].startswith("15,error,")
        assert rows[2].split(",")[1] == "converged"
        assert "sweep value 15" in capsys.readouterr().err

    def test_worst_exit_code_propagates(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(QUICK_CONFIG.replace("t_max = 0.6", "t_max = 0.001"))
        out = tmp_path / "sweep"
        code = main(["sweep", str(cfg), "--param", "epsilon",
                     "--values", "1e-3", "-o", str(out)])
        assert code == 2  # timed out


class TestResumeCommand:
    def test_resume_continues_run(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(QUICK_CONFIG.replace("t_max = 0.6", "t_max = 0.05")
                       .replace("conv_tol = 1e-8", "conv_tol = 1e-13"))
        out1 = tmp_path / "first"
        assert main(["run", str(cfg), "-o", str(out1)]) == 2
        out2 = tmp_path / "second"
        code = main(["resume", str(out1 / "final.lmcf"), "-o", str(out2),
                     "--t-max", "0.5", "--checkpoint-every", "20"])
        assert code == 0  # converges before 0.5 with default conv_tol
        records = read_monitor_csv(out2 / "monitors.csv")
        assert records[0].t >= 0.05 - 1e-12
        assert records[-1].max_du < 1e-8

    def test_resume_rejects_stale_t_max(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(QUICK_CONFIG.replace("t_max = 0.6", "t_max = 0.05")
                       .replace("conv_tol = 1e-8", "conv_tol = 1e-13"))
        out1 = tmp_path / "first"
        main(["run", str(cfg), "-o", str(out1)])
        assert main(["resume", str(out1 / "final.lmcf"), "-o", str(tmp_path / "x"),
                     "--t-max", "0.01"]) == 1
        assert "not beyond" in capsys.readouterr().err

    def test_resume_garbage_checkpoint(self, tmp_path, capsys):
        bad = tmp_path / "bad.lmcf"
        bad.write_bytes(b"garbage")
        assert main(["resume", str(bad), "-o", str(tmp_path / "o")]) == 1


class TestVerifyCommand:
    def test_variation_suite_passes(self, tmp_path, capsys):
        out = tmp_path / "verify"
        assert main(["verify", "variation", "-o", str(out)]) == 0
        summary = (out / "verify_summary.txt").read_text().splitlines()
        assert all(line.endswith(",pass") for line in summary)
        assert (out / "second_variation.report.txt").exists()

    def test_unknown_suite(self, tmp_path, capsys):
        assert main(["verify", "everything", "-o", str(tmp_path / "o")]) == 1
        assert "unknown suite" in capsys.readouterr().err
