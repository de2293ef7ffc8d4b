import os
import subprocess
import sys

import pytest

from tfqkd.cli import main

CURVE_FAST = """
[curve]
mc_pulses = 20000
protocols = pm, pmmdi
bounds = plob, srb, tgw
"""

CSV_HEADER = (
    "distance_km,eta,plob,srb,tgw,tf_gllp,pm,pmmdi,npp_mc,sns_mc,"
    "opt_mu_tf_gllp,opt_mu_pm,opt_mu_pmmdi"
)


def run_cli(args, capsys):
    rc = main(args)
    out = capsys.readouterr()
    return rc, out.out, out.err


class TestBoundsCommand:
    def test_plob_half(self, capsys):
        rc, out, _ = run_cli(["bounds", "--eta", "0.5", "--bounds", "plob"], capsys)
        assert rc == 0
        assert out == "plob\t1\n"

    def test_length_route_three_bounds(self, capsys):
        rc, out, _ = run_cli(
            ["bounds", "--length", "50", "--alpha", "0.2", "--bounds", "plob,srb,tgw"],
            capsys,
        )
        assert rc == 0
        lines = out.strip().split("\n")
        assert lines[0] == "plob\t0.152003"
        assert lines[1] == "srb\t0.548412"
        assert lines[2] == "tgw\t0.289507"

    def test_out_of_range_eta(self, capsys):
        rc, _, err = run_cli(["bounds", "--eta", "1.5", "--bounds", "plob"], capsys)
        assert rc == 2
        assert "transmittance" in err

    def test_eta_and_length_conflict(self):
        with pytest.raises(SystemExit) as exc:
            main(["bounds", "--eta", "0.5", "--length", "50"])
        assert exc.value.code == 2

    def test_unknown_bound_name(self, capsys):
        rc, _, err = run_cli(["bounds", "--eta", "0.5", "--bounds", "foo"], capsys)
        assert rc == 2
        assert "foo" in err


class TestRateCurveCommand:
    def test_header_and_rows(self, tmp_path, capsys):
        cfg = tmp_path / "curve.ini"
        cfg.write_text(CURVE_FAST)
        out_csv = tmp_path / "curve.csv"
        rc, out, _ = run_cli(
            ["rate-curve", "--config", str(cfg), "--start", "0", "--stop", "50",
             "--step", "25", "--seed", "3", "-o", str(out_csv)],
            capsys,
        )
        assert rc == 0
        assert "seed 3" in out
        lines = out_csv.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "1"
        assert first[2] == "inf"
        # unselected protocol columns stay empty
        assert first[5] == "" and first[8] == "" and first[9] == ""

    def test_empty_range_header_only(self, tmp_path, capsys):
        cfg = tmp_path / "curve.ini"
        cfg.write_text(CURVE_FAST)
        out_csv = tmp_path / "curve.csv"
        rc, _, _ = run_cli(
            ["rate-curve", "--config", str(cfg), "--start", "10", "--stop", "5",
             "--step", "5", "-o", str(out_csv)],
            capsys,
        )
        assert rc == 0
        assert out_csv.read_text() == CSV_HEADER + "\n"

    def test_missing_config_key_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "broken.ini"
        cfg.write_text("[curve]\nmc_pulses = 1000\nprotocols = pm\n")
        rc, _, err = run_cli(
            ["rate-curve", "--config", str(cfg), "-o", str(tmp_path / "x.csv")],
            capsys,
        )
        assert rc == 2
        assert "bounds" in err

    def test_unreadable_config_is_io_error(self, tmp_path, capsys):
        rc, _, _ = run_cli(
            ["rate-curve", "--config", str(tmp_path / "absent.ini"),
             "-o", str(tmp_path / "x.csv")],
            capsys,
        )
        assert rc == 1

    def test_unwritable_output_is_io_error(self, tmp_path, capsys):
        cfg = tmp_path / "curve.ini"
        cfg.write_text(CURVE_FAST)
        rc, _, _ = run_cli(
            ["rate-curve", "--config", str(cfg), "--start", "0", "--stop", "0",
             "--step", "5", "-o", str(tmp_path / "no_dir" / "x.csv")],
            capsys,
        )
        assert rc == 1

    def test_plot_renders_file(self, tmp_path, capsys):
        cfg = tmp_path / "curve.ini"
        cfg.write_text(CURVE_FAST)
        out_csv = tmp_path / "curve.csv"
        rc, _, _ = run_cli(
            ["rate-curve", "--config", str(cfg), "--start", "0", "--stop", "50",
             "--step", "50", "-o", str(out_csv), "--plot"],
            capsys,
        )
        assert rc == 0
        png = tmp_path / "curve.png"
        assert png.exists() and png.stat().st_size > 1000

    def test_pm_column_crosses_plob_column(self, tmp_path, capsys):
        cfg = tmp_path / "curve.ini"
        cfg.write_text("[curve]\nmc_pulses = 1000\nprotocols = pm\nbounds = plob, srb\n")
        out_csv = tmp_path / "curve.csv"
        rc, _, _ = run_cli(
            ["rate-curve", "--config", str(cfg), "--start", "0", "--stop", "600",
             "--step", "50", "-o", str(out_csv)],
            capsys,
        )
        assert rc == 0
        header, *rows = out_csv.read_text().splitlines()
        cols = header.split(",")
        i_pm, i_plob = cols.index("pm"), cols.index("plob")
        beats = [
            float(r.split(",")[i_pm]) > float(r.split(",")[i_plob])
            for r in rows
            if r.split(",")[i_plob] != "inf"
        ]
        assert not beats[0] and any(beats)
        assert all(beats[beats.index(True):])


class TestSimulateCommand:
    def test_zero_pulses_empty_report(self, capsys):
        rc, out, _ = run_cli(
            ["simulate", "--protocol", "tf", "--length", "100", "--pulses", "0",
             "--seed", "1"],
            capsys,
        )
        assert rc == 0
        assert "(no pulses)" in out
        assert "rate: 0" in out

    def test_report_structure(self, capsys):
        rc, out, _ = run_cli(
            ["simulate", "--protocol", "npp", "--length", "100",
             "--pulses", "400000", "--seed", "2"],
            capsys,
        )
        assert rc == 0
        assert out.startswith("protocol: npp\n")
        for field in ("gain:", "qber_z:", "phase_error_x:", "sifted_fraction:", "rate:"):
            assert field in out

    def test_invalid_protocol_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--protocol", "bb84", "--length", "10"])
        assert exc.value.code == 2

    def test_negative_pulses_rejected(self, capsys):
        rc, _, err = run_cli(
            ["simulate", "--protocol", "tf", "--length", "10", "--pulses", "-5"],
            capsys,
        )
        assert rc == 2


class TestTable1Command:
    def test_seven_rows_fixed_order(self, capsys):
        rc, out, _ = run_cli(["table1"], capsys)
        assert rc == 0
        lines = out.strip().split("\n")
        rows = [l for l in lines if " | " in l and not l.startswith("reference")]
        assert len(rows) == 7
        assert rows[0].startswith("Minder") and rows[-1].startswith("Zhong")

    def test_wang_beats_bound_flag(self, capsys):
        _, out, _ = run_cli(["table1"], capsys)
        wang = next(l for l in out.split("\n") if l.startswith("Wang"))
        assert wang.endswith("yes | yes")


class TestPhaseDemoCommand:
    def test_zero_drift_zero_epsilon_both_modes(self, capsys):
        rc, out, _ = run_cli(
            ["phase-demo", "--drift-rate", "0", "--duration-ms", "10", "--seed", "1"],
            capsys,
        )
        assert rc == 0
        assert out.count("epsilon: 0\n") == 2
        assert "mode: active_npp" in out and "mode: post_select" in out

    def test_expected_error_at_six_rad_per_ms(self, capsys):
        rc, out, _ = run_cli(
            ["phase-demo", "--drift-rate", "6.0", "--duration-ms", "2000",
             "--seed", "3", "--mode", "active_npp"],
            capsys,
        )
        assert rc == 0
        eps = float(next(l for l in out.split("\n") if l.startswith("epsilon")).split()[1])
        assert 0.015 <= eps <= 0.03

    def test_monotone_in_drift_rate(self, capsys):
        def eps_at(rate):
            _, out, _ = run_cli(
                ["phase-demo", "--drift-rate", rate, "--duration-ms", "500",
                 "--seed", "3", "--mode", "post_select"],
                capsys,
            )
            return float(
                next(l for l in out.split("\n") if l.startswith("epsilon")).split()[1]
            )

        assert eps_at("15.7") > eps_at("6.0")

    def test_invalid_mode_exit_2(self, capsys):
        rc, _, err = run_cli(
            ["phase-demo", "--mode", "wishful", "--duration-ms", "10"], capsys
        )
        assert rc == 2
        assert "mode" in err

    def test_length_lookup_uses_anchor_table(self, capsys):
        rc, out, _ = run_cli(
            ["phase-demo", "--length", "400", "--duration-ms", "10", "--seed", "1",
             "--mode", "post_select"],
            capsys,
        )
        assert rc == 0
        assert "drift_rate_rad_per_ms: 5.5" in out

    def test_plot_renders_file(self, tmp_path, capsys):
        out_txt = tmp_path / "demo.txt"
        rc, _, _ = run_cli(
            ["phase-demo", "--drift-rate", "2", "--duration-ms", "50", "--seed", "1",
             "-o", str(out_txt), "--plot", str(tmp_path / "demo.png")],
            capsys,
        )
        assert rc == 0
        assert (tmp_path / "demo.png").stat().st_size > 1000


class TestShowConfig:
    def test_round_trip_through_cli(self, tmp_path, capsys):
        rc, out, _ = run_cli(["show-config"], capsys)
        assert rc == 0
        cfg_path = tmp_path / "echo.ini"
        cfg_path.write_text(out)
        rc2, out2, _ = run_cli(["show-config", "--config", str(cfg_path)], capsys)
        assert rc2 == 0
        assert out2 == out


class TestSubprocessByteDeterminism:
    """Full-process runs, comparing raw bytes."""

    def run(self, args, env_extra=None):
        env = dict(os.environ)
        if env_extra:
            env.update(env_extra)
        return subprocess.run(
            [sys.executable, "-m", "tfqkd", *args],
            capture_output=True,
            env=env,
            check=True,
        ).stdout

    def test_simulate_byte_identical(self):
        args = ["simulate", "--protocol", "sns", "--length", "50",
                "--pulses", "200000", "--seed", "42"]
        assert self.run(args) == self.run(args)

    def test_seed_env_var_sets_default(self):
        by_env = self.run(
            ["simulate", "--protocol", "tf", "--length", "50", "--pulses", "100000"],
            env_extra={"TFQKD_SEED": "42"},
        )
        by_flag = self.run(
            ["simulate", "--protocol", "tf", "--length", "50", "--pulses", "100000",
             "--seed", "42"],
        )
        assert by_env == by_flag
