"""End-to-end command-line tests: exit codes, artifacts, reproducibility."""

import json

import pytest

from memarray.cli import main
from memarray.defaults import default_plan_path
from memarray.io import file_sha256, read_counts_csv


def run_cli(*argv):
    return main(list(argv))


HIGH_NOISE = """\
[noise]
base_noise_per_window = 0.5
fluorescence_amplitude = 0.1
fluorescence_decay_us = 2.0
dark_rate_hz = 15.0
"""


@pytest.fixture
def small_plan(tmp_path):
    """Two cells, two temporal modes: fast to simulate."""
    p = tmp_path / "small_plan.ini"
    p.write_text("""\
[plan]
tau_us = 10.0
t_spin_us = 15.5
n_temporal = 2
cell_order = 1, 2
mean_photon_number = 1.03
detection_window_ns = 351
input_shape = gaussian
input_fwhm_ns = 351
""")
    return p


class TestValidate:
    def test_shipped_plan_passes(self, capsys):
        assert run_cli("validate", "--plan", "60mode") == 0
        out = capsys.readouterr().out
        assert "0 violations" in out
        assert "141 events" in out

    def test_capacity_violation_exits_one(self, tmp_path, capsys):
        p = tmp_path / "over.ini"
        p.write_text(default_plan_path("60mode").read_text().replace(
            "n_temporal = 6", "n_temporal = 7\nmode_period_us = 1.0833"))
        assert run_cli("validate", "--plan", str(p)) == 1
        err = capsys.readouterr().err
        assert "capacity" in err

    def test_empty_plan_file_exits_two(self, tmp_path, capsys):
        p = tmp_path / "empty.ini"
        p.write_text("")
        assert run_cli("validate", "--plan", str(p)) == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_cell_exits_two(self, tmp_path, capsys):
        p = tmp_path / "plan.ini"
        p.write_text(default_plan_path("60mode").read_text().replace(
            "cell_order = 1, 2, 3, 4, 5, 6, 7, 8, 9, 10",
            "cell_order = 1, 2, 11"))
        assert run_cli("validate", "--plan", str(p)) == 2
        assert "11" in capsys.readouterr().err

    def test_timeline_export(self, tmp_path, capsys):
        out = tmp_path / "timeline.csv"
        assert run_cli("validate", "--plan", "250mode",
                       "--timeline", str(out)) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 1 + 250 + 20 + 250  # header+prep+io+cps


class TestRun:
    def test_zero_trials_is_usage_error(self, tmp_path, capsys):
        code = run_cli("run", "--plan", "60mode", "--noise", "storage",
                       "--trials", "0", "--out-dir", str(tmp_path))
        assert code == 2

    def test_sixty_mode_run_row_count(self, tmp_path):
        assert run_cli("run", "--plan", "60mode", "--noise", "storage",
                       "--trials", "50", "--seed", "9",
                       "--out-dir", str(tmp_path)) == 0
        csv_path = tmp_path / "counts_signal.csv"
        assert len(csv_path.read_text().splitlines()) == 61  # header + 60
        run = read_counts_csv(csv_path).to_trial_counts()
        assert run.n_trials == 50

    def test_manifest_inventory(self, tmp_path):
        run_cli("run", "--plan", "60mode", "--noise", "storage",
                "--trials", "20", "--seed", "4", "--out-dir", str(tmp_path))
        manifest = json.loads((tmp_path / "manifest_signal.json").read_text())
        counts = tmp_path / "counts_signal.csv"
        assert manifest["outputs"]["counts_signal.csv"] == file_sha256(counts)
        assert manifest["seed"] == 4 and manifest["trials"] == 20
        assert manifest["resolved"]["plan"]["storage"]["tau"] == 10.0
        assert "duration_seconds" in manifest

    def test_reruns_are_byte_identical(self, tmp_path, small_plan):
        noise = tmp_path / "noise.ini"
        noise.write_text(HIGH_NOISE)
        shas = []
        for sub, workers in (("a", "1"), ("b", "1"), ("c", "3")):
            out = tmp_path / sub
            assert run_cli("run", "--plan", str(small_plan), "--noise",
                           str(noise), "--trials", "400", "--seed", "77",
                           "--workers", workers, "--out-dir", str(out)) == 0
            shas.append(file_sha256(out / "counts_signal.csv"))
        assert shas[0] == shas[1] == shas[2]

    def test_seed_changes_bytes(self, tmp_path, small_plan):
        noise = tmp_path / "noise.ini"
        noise.write_text(HIGH_NOISE)
        shas = []
        for seed in ("1", "2"):
            out = tmp_path / f"s{seed}"
            run_cli("run", "--plan", str(small_plan), "--noise", str(noise),
                    "--trials", "400", "--seed", seed, "--out-dir", str(out))
            shas.append(file_sha256(out / "counts_signal.csv"))
        assert shas[0] != shas[1]

    def test_infeasible_plan_exits_one(self, tmp_path, capsys):
        p = tmp_path / "over.ini"
        p.write_text(default_plan_path("60mode").read_text().replace(
            "n_temporal = 6", "n_temporal = 7\nmode_period_us = 1.0833"))
        code = run_cli("run", "--plan", str(p), "--noise", "storage",
                       "--trials", "10", "--out-dir", str(tmp_path))
        assert code == 1
        assert "violation" in capsys.readouterr().err

    def test_crosstalk_needs_leakage(self, tmp_path, capsys):
        code = run_cli("run", "--plan", "crosstalk", "--noise", "storage",
                       "--mode", "crosstalk", "--trials", "10",
                       "--out-dir", str(tmp_path))
        assert code == 2
        assert "leakage" in capsys.readouterr().err

    def test_crosstalk_run_covers_all_pairs(self, tmp_path):
        assert run_cli("run", "--plan", "crosstalk", "--noise", "crosstalk",
                       "--mode", "crosstalk", "--trials", "30",
                       "--out-dir", str(tmp_path)) == 0
        scan = read_counts_csv(tmp_path / "counts_crosstalk.csv").to_scan()
        assert len(scan) == 100


class TestAnalyze:
    def make_runs(self, tmp_path, small_plan, trials="600"):
        noise = tmp_path / "noise.ini"
        noise.write_text(HIGH_NOISE)
        for mode in ("signal", "noise"):
            assert run_cli("run", "--plan", str(small_plan), "--noise",
                           str(noise), "--trials", trials, "--seed", "21",
                           "--mode", mode, "--out-dir", str(tmp_path)) == 0
        return (tmp_path / "counts_signal.csv", tmp_path / "counts_noise.csv")

    def test_full_statistics_pipeline(self, tmp_path, small_plan, capsys):
        sig, bkg = self.make_runs(tmp_path, small_plan)
        assert run_cli("analyze", "--signal", str(sig), "--noise", str(bkg),
                       "--plan", str(small_plan), "--device", "10cell",
                       "--out-dir", str(tmp_path / "stats")) == 0
        stats_dir = tmp_path / "stats"
        assert len((stats_dir / "mode_stats.csv").read_text().splitlines()) == 5
        assert len((stats_dir / "cumulative.csv").read_text().splitlines()) == 5
        assert len((stats_dir / "projections.csv").read_text().splitlines()) == 3

    def test_identical_inputs_give_unit_snr(self, tmp_path, small_plan):
        _, bkg = self.make_runs(tmp_path, small_plan)
        assert run_cli("analyze", "--signal", str(bkg), "--noise", str(bkg),
                       "--plan", str(small_plan), "--device", "10cell",
                       "--out-dir", str(tmp_path / "unit")) == 0
        rows = (tmp_path / "unit" / "mode_stats.csv").read_text().splitlines()
        header = rows[0].split(",")
        snr_col = header.index("snr")
        for row in rows[1:]:
            assert float(row.split(",")[snr_col]) == 1.0

    def test_mode_set_mismatch_exits_one(self, tmp_path, small_plan, capsys):
        sig, _ = self.make_runs(tmp_path, small_plan)
        noise_ini = tmp_path / "noise.ini"
        other_plan = tmp_path / "other_plan.ini"
        other_plan.write_text(small_plan.read_text().replace(
            "cell_order = 1, 2", "cell_order = 1, 3"))
        run_cli("run", "--plan", str(other_plan), "--noise", str(noise_ini),
                "--trials", "600", "--seed", "21", "--mode", "noise",
                "--out-dir", str(tmp_path / "other"))
        code = run_cli("analyze", "--signal", str(sig),
                       "--noise", str(tmp_path / "other" / "counts_noise.csv"),
                       "--plan", str(small_plan), "--device", "10cell",
                       "--out-dir", str(tmp_path / "bad"))
        assert code == 1
        assert "(3, 1)" in capsys.readouterr().err

    def test_signal_analysis_requires_plan(self, tmp_path, small_plan, capsys):
        sig, bkg = self.make_runs(tmp_path, small_plan)
        code = run_cli("analyze", "--signal", str(sig), "--noise", str(bkg),
                       "--out-dir", str(tmp_path / "x"))
        assert code == 2
        assert "--plan" in capsys.readouterr().err

    def test_crosstalk_pipeline(self, tmp_path, capsys):
        run_cli("run", "--plan", "crosstalk", "--noise", "crosstalk",
                "--mode", "crosstalk", "--trials", "2000", "--seed", "6",
                "--out-dir", str(tmp_path))
        run_cli("run", "--plan", "crosstalk", "--noise", "crosstalk",
                "--mode", "noise", "--trials", "2000", "--seed", "7",
                "--out-dir", str(tmp_path))
        assert run_cli("analyze",
                       "--signal", str(tmp_path / "counts_crosstalk.csv"),
                       "--noise", str(tmp_path / "counts_noise.csv"),
                       "--out-dir", str(tmp_path / "xt")) == 0
        matrix = (tmp_path / "xt" / "crosstalk_matrix.csv").read_text().splitlines()
        assert len(matrix) == 11  # header + 10 rows
        # unit diagonal for valid rows
        for k, row in enumerate(matrix[1:], start=1):
            cells = row.split(",")
            assert cells[0] == str(k)
            assert cells[k] in ("1", "nan")

    def test_scan_noise_kind_checked(self, tmp_path, capsys):
        run_cli("run", "--plan", "crosstalk", "--noise", "crosstalk",
                "--mode", "crosstalk", "--trials", "50", "--seed", "6",
                "--out-dir", str(tmp_path))
        scan_csv = tmp_path / "counts_crosstalk.csv"
        code = run_cli("analyze", "--signal", str(scan_csv),
                       "--noise", str(scan_csv),
                       "--out-dir", str(tmp_path / "xt"))
        assert code == 2
        assert "no-input" in capsys.readouterr().err


class TestUsage:
    def test_version_flag(self, capsys):
        assert run_cli("--version") == 0
        assert "memarray" in capsys.readouterr().out

    def test_missing_subcommand(self, capsys):
        assert run_cli() == 2

    def test_unknown_subcommand(self, capsys):
        assert run_cli("frobnicate") == 2
