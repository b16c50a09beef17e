"""Config parsing, CSV round-trip and manifest tests."""

import math

import pytest

from memarray.defaults import (
    default_device_path,
    default_noise_path,
    default_plan_path,
    load_default_device,
    load_default_noise,
    load_default_plan,
)
from memarray.device import PulseKind
from memarray.errors import ConfigError
from memarray.io import (
    COUNTS_HEADER,
    file_sha256,
    load_device,
    load_noise,
    load_plan,
    read_counts_csv,
    read_manifest,
    write_counts_csv,
    write_manifest,
    write_timeline_csv,
)
from memarray.sequence import SequencePlan, compile_plan
from memarray.simulate import NoiseParams, RunKind, TrialCounts


DEVICE_SNIPPET = """\
[array]
cell_spacing_um = 200.0
eta_detection_path = 0.14
dark_count_rate_hz = 15.0

[cell 1]
cell_id = 1
eta_mux = 0.9
eta_demux = 0.8
eta_fiber = 0.5
eta_transfer = 0.25
afc_calibration = 10:0.15, 25:0.05
position_um = 0.0
"""


class TestLoadDevice:
    def test_shipped_default(self):
        device = load_device(default_device_path())
        assert [c.cell_id for c in device.cells] == list(range(1, 11))
        assert device.cell_spacing == 200.0
        assert device.eta_detection_path == 0.14
        assert device.input_beam_diameter == 80.0

    def test_minimal_file(self, tmp_path):
        p = tmp_path / "dev.ini"
        p.write_text(DEVICE_SNIPPET)
        device = load_device(p)
        assert device.cell(1).afc_calibration == ((10.0, 0.15), (25.0, 0.05))

    def test_unknown_key_names_line(self, tmp_path):
        p = tmp_path / "dev.ini"
        p.write_text(DEVICE_SNIPPET + "frobnicate = 1\n")
        with pytest.raises(ConfigError) as err:
            load_device(p)
        assert err.value.key == "frobnicate"
        assert err.value.line == len(DEVICE_SNIPPET.splitlines()) + 1

    def test_missing_required_key(self, tmp_path):
        p = tmp_path / "dev.ini"
        p.write_text(DEVICE_SNIPPET.replace("eta_fiber = 0.5\n", ""))
        with pytest.raises(ConfigError, match="eta_fiber"):
            load_device(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_device(tmp_path / "nope.ini")

    def test_comment_only_file(self, tmp_path):
        p = tmp_path / "dev.ini"
        p.write_text("# nothing here\n")
        with pytest.raises(ConfigError, match="no sections"):
            load_device(p)

    def test_bad_number_names_line(self, tmp_path):
        p = tmp_path / "dev.ini"
        p.write_text(DEVICE_SNIPPET.replace("eta_mux = 0.9", "eta_mux = wat"))
        with pytest.raises(ConfigError) as err:
            load_device(p)
        assert err.value.key == "eta_mux"
        assert err.value.line is not None


class TestLoadPlan:
    def test_shipped_sixty_mode(self):
        plan = load_plan(default_plan_path("60mode"))
        cfg = plan.storage
        assert cfg.tau == 10.0 and cfg.t_spin == 15.5
        assert cfg.n_temporal == 6
        assert plan.cell_order == tuple(range(1, 11))
        assert cfg.input_shape.kind is PulseKind.GAUSSIAN
        assert cfg.input_shape.fwhm == 351.0
        assert cfg.eta_herald == 0.7 and cfg.g2_source == 100.0
        assert plan.mode_period is None  # compiler fills the comb window

    def test_shipped_crosstalk_plan_overrides_capture(self):
        plan = load_plan(default_plan_path("crosstalk"))
        assert plan.storage.n_temporal == 1
        assert plan.storage.input_shape.capture_override == 0.57
        assert plan.storage.mean_photon_number == 0.95

    def test_bad_shape_rejected(self, tmp_path):
        p = tmp_path / "plan.ini"
        p.write_text(default_plan_path("60mode").read_text().replace(
            "input_shape = gaussian", "input_shape = triangle"))
        with pytest.raises(ConfigError) as err:
            load_plan(p)
        assert err.value.key == "input_shape"

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "plan.ini"
        p.write_text(default_plan_path("60mode").read_text()
                     + "wibble = 3\n")
        with pytest.raises(ConfigError) as err:
            load_plan(p)
        assert err.value.key == "wibble"

    def test_needs_plan_section(self, tmp_path):
        p = tmp_path / "plan.ini"
        p.write_text("[storage]\ntau_us = 10\n")
        with pytest.raises(ConfigError, match=r"\[plan\]"):
            load_plan(p)


class TestLoadNoise:
    def test_storage_noise_has_no_leakage(self):
        noise, leak = load_noise(default_noise_path("storage"))
        assert leak is None
        assert noise.base_noise_per_window == 4.3e-5
        assert noise.fluorescence_amplitude == 8.0e-5
        assert noise.fluorescence_decay == 2.0
        assert noise.dark_rate == 15.0
        assert noise.offresonant_echo_leak == {}

    def test_crosstalk_noise_matrices(self):
        noise, leak = load_noise(default_noise_path("crosstalk"))
        assert leak is not None
        assert leak.cell_ids == tuple(range(1, 11))
        assert all(leak.leak(i, i) == 1.0 for i in range(1, 11))
        # distant pairs ride on the off-resonant table, not the leakage
        assert leak.leak(10, 1) == 0.0
        assert noise.offresonant_echo_leak[(10, 1)] == 2.9e-5
        assert (1, 1) not in noise.offresonant_echo_leak  # zero diagonal

    def test_dark_rate_falls_back_to_device(self, tmp_path):
        p = tmp_path / "noise.ini"
        p.write_text("[noise]\nbase_noise_per_window = 1e-5\n"
                     "fluorescence_amplitude = 0\n"
                     "fluorescence_decay_us = 2.0\n")
        noise, _ = load_noise(p, default_dark_rate=42.0)
        assert noise.dark_rate == 42.0
        with pytest.raises(ConfigError, match="dark_rate_hz"):
            load_noise(p)

    def test_ragged_matrix_rejected(self, tmp_path):
        p = tmp_path / "noise.ini"
        p.write_text("[noise]\nbase_noise_per_window = 0\n"
                     "fluorescence_amplitude = 0\n"
                     "fluorescence_decay_us = 2.0\ndark_rate_hz = 0\n"
                     "[leakage]\nrow_1 = 1, 0\nrow_2 = 0.1, 1, 0.3\n")
        with pytest.raises(ConfigError) as err:
            load_noise(p)
        assert err.value.key == "row_2"


class TestCountsRoundTrip:
    def test_single_run(self, tmp_path):
        run = TrialCounts(kind=RunKind.SIGNAL,
                          counts={(1, 2): 7, (1, 1): 11, (2, 1): 0},
                          n_trials=500)
        path = write_counts_csv(tmp_path / "counts.csv", run)
        back = read_counts_csv(path).to_trial_counts()
        assert back.kind is RunKind.SIGNAL
        assert back.counts == run.counts
        assert back.n_trials == 500

    def test_scan_round_trip(self, tmp_path):
        scan = {(i, j): TrialCounts(kind=RunKind.CROSSTALK,
                                    counts={(j, 1): 10 * i + j},
                                    n_trials=99, pair=(i, j))
                for i in (1, 2) for j in (1, 2)}
        path = write_counts_csv(tmp_path / "scan.csv", scan)
        back = read_counts_csv(path).to_scan()
        assert set(back) == set(scan)
        for pair in scan:
            assert back[pair].counts == scan[pair].counts
            assert back[pair].pair == pair

    def test_write_is_byte_stable(self, tmp_path):
        run = TrialCounts(kind=RunKind.NOISE, counts={(3, 1): 4, (1, 1): 2},
                          n_trials=10)
        a = write_counts_csv(tmp_path / "a.csv", run)
        b = write_counts_csv(tmp_path / "b.csv", run)
        assert a.read_bytes() == b.read_bytes()
        assert file_sha256(a) == file_sha256(b)

    def test_header_enforced(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ConfigError) as err:
            read_counts_csv(p)
        assert err.value.line == 1

    def test_scan_file_refuses_single_run_view(self, tmp_path):
        scan = {(1, 2): TrialCounts(kind=RunKind.CROSSTALK,
                                    counts={(2, 1): 3}, n_trials=5,
                                    pair=(1, 2))}
        path = write_counts_csv(tmp_path / "scan.csv", scan)
        with pytest.raises(ConfigError, match="cross-talk"):
            read_counts_csv(path).to_trial_counts()

    def test_bad_row_names_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(",".join(COUNTS_HEADER) + "\nsignal,1,1,1,many,10\n")
        with pytest.raises(ConfigError) as err:
            read_counts_csv(p)
        assert err.value.line == 2


class TestTimelineCsv:
    def test_event_rows(self, tmp_path):
        plan = load_default_plan("crosstalk")
        single = SequencePlan(storage=plan.storage, cell_order=(1,))
        tl = compile_plan(single)
        path = write_timeline_csv(tmp_path / "timeline.csv", tl)
        lines = path.read_text().splitlines()
        # header + prepare + input + two control pulses + echo window
        assert len(lines) == 6
        assert lines[0] == "channel,kind,cell_id,temporal_index,start_us,duration_us"
        assert any(line.startswith("DemuxAOD,EchoWindow,1,1,") for line in lines)


class TestManifest:
    def test_round_trip_with_rich_types(self, tmp_path):
        noise = NoiseParams(base_noise_per_window=1e-5,
                            fluorescence_amplitude=0.0,
                            fluorescence_decay=2.0, dark_rate=15.0)
        payload = {
            "seed": 42,
            "kind": RunKind.SIGNAL,
            "noise": noise,
            "outputs": [tmp_path / "counts.csv"],
            "nan_guard": math.pi,
        }
        path = write_manifest(tmp_path / "manifest.json", payload)
        back = read_manifest(path)
        assert back["seed"] == 42
        assert back["kind"] == "signal"
        assert back["noise"]["fluorescence_decay"] == 2.0
        assert back["outputs"] == [str(tmp_path / "counts.csv")]

    def test_manifest_is_byte_stable(self, tmp_path):
        payload = {"b": 1, "a": {"z": [3, 2], "y": RunKind.NOISE}}
        p1 = write_manifest(tmp_path / "m1.json", payload)
        p2 = write_manifest(tmp_path / "m2.json", payload)
        assert p1.read_bytes() == p2.read_bytes()

    def test_invalid_json_rejected(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            read_manifest(p)
