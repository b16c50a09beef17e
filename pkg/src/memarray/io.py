"""Configuration-file parsing, CSV emission/ingestion and run manifests.

Config files are INI-style structured text.  Parsing is strict: unknown keys
are rejected, and diagnostics carry the file, key and line number so the CLI
can point at the offending entry.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import enum
import hashlib
import json
import re
from pathlib import Path
from typing import Mapping

from .device import ArrayDevice, CellParams, PulseKind, PulseShape, StorageConfig
from .errors import ConfigError
from .sequence import SequencePlan, Timeline
from .simulate import LeakageMatrix, NoiseParams, RunKind, TrialCounts

_SECTION_RE = re.compile(r"^\s*\[(?P<name>[^]]+)\]")
_KEY_RE = re.compile(r"^\s*(?P<key>[^\s;#=:][^=:]*?)\s*[=:]")


# --------------------------------------------------------------------------
# low-level INI handling


def _key_lines(path: Path) -> dict[tuple[str, str], int]:
    """Map (section, key) -> 1-based line number, for diagnostics."""
    lines: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        m = _SECTION_RE.match(raw)
        if m:
            section = m.group("name").strip()
            continue
        if raw.lstrip().startswith(("#", ";")) or not raw.strip():
            continue
        m = _KEY_RE.match(raw)
        if m and section is not None:
            lines[(section, m.group("key").strip().lower())] = lineno
    return lines


def _load_ini(path) -> tuple[configparser.ConfigParser, dict[tuple[str, str], int], Path]:
    path = Path(path)
    if not path.exists():
        raise ConfigError("file not found", path=path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None)
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"missing section header: {exc.line!r}",
                          path=path, line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError(f"cannot parse file: {exc}", path=path, line=lineno) from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse file: {exc}", path=path) from exc
    if not parser.sections():
        raise ConfigError("no sections found (empty or comment-only file)", path=path)
    return parser, _key_lines(path), path


class _Section:
    """One INI section with strict key checking and typed accessors."""

    def __init__(self, name: str, items: Mapping[str, str],
                 lines: Mapping[tuple[str, str], int], path: Path):
        self.name = name
        self.items = dict(items)
        self.lines = lines
        self.path = path

    def _line(self, key: str) -> int | None:
        return self.lines.get((self.name, key))

    def check_keys(self, allowed: set[str], required: set[str]) -> None:
        for key in self.items:
            if key not in allowed:
                raise ConfigError(f"unknown key in [{self.name}]",
                                  path=self.path, key=key, line=self._line(key))
        for key in required:
            if key not in self.items:
                raise ConfigError(f"[{self.name}] is missing required key '{key}'",
                                  path=self.path, key=key)

    def raw(self, key: str, default=None):
        return self.items.get(key, default)

    def float(self, key: str, default=None) -> float:
        if key not in self.items:
            return default
        try:
            return float(self.items[key])
        except ValueError as exc:
            raise ConfigError(f"expected a number, got {self.items[key]!r}",
                              path=self.path, key=key, line=self._line(key)) from exc

    def int(self, key: str, default=None) -> int:
        if key not in self.items:
            return default
        try:
            return int(self.items[key])
        except ValueError as exc:
            raise ConfigError(f"expected an integer, got {self.items[key]!r}",
                              path=self.path, key=key, line=self._line(key)) from exc

    def float_list(self, key: str) -> list[float]:
        try:
            return [float(tok) for tok in self.items[key].split(",")]
        except ValueError as exc:
            raise ConfigError(f"expected comma-separated numbers, got "
                              f"{self.items[key]!r}",
                              path=self.path, key=key, line=self._line(key)) from exc

    def int_list(self, key: str) -> list[int]:
        try:
            return [int(tok) for tok in self.items[key].split(",")]
        except ValueError as exc:
            raise ConfigError(f"expected comma-separated integers, got "
                              f"{self.items[key]!r}",
                              path=self.path, key=key, line=self._line(key)) from exc

    def pair_list(self, key: str) -> list[tuple[float, float]]:
        """Parse 'a:b, c:d' pairs (calibration tables)."""
        pairs = []
        for tok in self.items[key].split(","):
            try:
                a, b = tok.split(":")
                pairs.append((float(a), float(b)))
            except ValueError as exc:
                raise ConfigError(f"expected 'tau:eta' pairs, got {self.items[key]!r}",
                                  path=self.path, key=key,
                                  line=self._line(key)) from exc
        return pairs


def _sections(parser, lines, path) -> dict[str, _Section]:
    return {name: _Section(name, parser[name], lines, path)
            for name in parser.sections()}


# --------------------------------------------------------------------------
# device file


_CELL_KEYS = {"cell_id", "eta_mux", "eta_demux", "eta_fiber", "eta_transfer",
              "afc_calibration", "position_um"}
_ARRAY_KEYS = {"cell_spacing_um", "input_beam_diameter_um",
               "control_beam_diameter_um", "eta_detection_path",
               "dark_count_rate_hz"}


def load_device(path) -> ArrayDevice:
    """Read an array device file ([array] section plus one [cell N] each)."""
    parser, lines, path = _load_ini(path)
    sections = _sections(parser, lines, path)
    if "array" not in sections:
        raise ConfigError("device file needs an [array] section", path=path)
    array = sections.pop("array")
    array.check_keys(_ARRAY_KEYS, {"cell_spacing_um", "eta_detection_path",
                                   "dark_count_rate_hz"})
    cells = []
    for name, sec in sections.items():
        if not name.lower().startswith("cell"):
            raise ConfigError(f"unexpected section [{name}] in device file",
                              path=path)
        sec.check_keys(_CELL_KEYS, _CELL_KEYS)
        try:
            cells.append(CellParams(
                cell_id=sec.int("cell_id"),
                eta_mux=sec.float("eta_mux"),
                eta_demux=sec.float("eta_demux"),
                eta_fiber=sec.float("eta_fiber"),
                eta_transfer=sec.float("eta_transfer"),
                afc_calibration=tuple(sec.pair_list("afc_calibration")),
                position=sec.float("position_um"),
            ))
        except ConfigError as exc:
            if exc.path is None:
                raise ConfigError(str(exc), path=path, key=name) from exc
            raise
    cells.sort(key=lambda c: c.cell_id)
    try:
        return ArrayDevice(
            cells=tuple(cells),
            cell_spacing=array.float("cell_spacing_um"),
            input_beam_diameter=array.float("input_beam_diameter_um", 80.0),
            control_beam_diameter=array.float("control_beam_diameter_um", 100.0),
            eta_detection_path=array.float("eta_detection_path"),
            dark_count_rate=array.float("dark_count_rate_hz"),
        )
    except ConfigError as exc:
        if exc.path is None:
            raise ConfigError(str(exc), path=path) from exc
        raise


# --------------------------------------------------------------------------
# plan file


_PLAN_KEYS = {"tau_us", "t_spin_us", "n_temporal", "mode_period_us",
              "cell_order", "mean_photon_number", "detection_window_ns",
              "input_shape", "input_fwhm_ns", "capture_override",
              "eta_herald", "g2_source"}


def load_plan(path) -> SequencePlan:
    """Read a storage plan file (single [plan] section)."""
    parser, lines, path = _load_ini(path)
    sections = _sections(parser, lines, path)
    if "plan" not in sections:
        raise ConfigError("plan file needs a [plan] section", path=path)
    sec = sections["plan"]
    extra = set(sections) - {"plan"}
    if extra:
        raise ConfigError(f"unexpected sections in plan file: {sorted(extra)}",
                          path=path)
    sec.check_keys(_PLAN_KEYS, {"tau_us", "t_spin_us", "n_temporal", "cell_order",
                                "mean_photon_number", "detection_window_ns",
                                "input_shape", "input_fwhm_ns"})
    kind_name = sec.raw("input_shape").strip().lower()
    try:
        kind = PulseKind(kind_name)
    except ValueError as exc:
        raise ConfigError(
            f"input_shape must be one of {[k.value for k in PulseKind]}, "
            f"got {kind_name!r}",
            path=path, key="input_shape", line=sec._line("input_shape")) from exc
    try:
        shape = PulseShape(kind, fwhm=sec.float("input_fwhm_ns"),
                           capture_override=sec.float("capture_override"))
        storage = StorageConfig(
            tau=sec.float("tau_us"),
            t_spin=sec.float("t_spin_us"),
            n_temporal=sec.int("n_temporal"),
            mean_photon_number=sec.float("mean_photon_number"),
            input_shape=shape,
            detection_window=sec.float("detection_window_ns"),
            eta_herald=sec.float("eta_herald", 0.7),
            g2_source=sec.float("g2_source", 100.0),
        )
        return SequencePlan(storage=storage,
                            cell_order=tuple(sec.int_list("cell_order")),
                            mode_period=sec.float("mode_period_us"))
    except ConfigError as exc:
        if exc.path is None:
            raise ConfigError(str(exc), path=path) from exc
        raise


# --------------------------------------------------------------------------
# noise file


_NOISE_KEYS = {"base_noise_per_window", "fluorescence_amplitude",
               "fluorescence_decay_us", "dark_rate_hz"}
_ROW_RE = re.compile(r"^row_(\d+)$")


def _matrix_rows(sec: _Section) -> tuple[tuple[int, ...], list[list[float]]]:
    ids = []
    for key in sec.items:
        m = _ROW_RE.match(key)
        if not m:
            raise ConfigError(f"expected row_<cell_id> keys in [{sec.name}]",
                              path=sec.path, key=key, line=sec._line(key))
        ids.append(int(m.group(1)))
    order = sorted(ids)
    rows = []
    for cid in order:
        row = sec.float_list(f"row_{cid}")
        if len(row) != len(order):
            raise ConfigError(
                f"[{sec.name}] row_{cid} has {len(row)} entries, expected "
                f"{len(order)} (one per cell)",
                path=sec.path, key=f"row_{cid}", line=sec._line(f"row_{cid}"))
        rows.append(row)
    return tuple(order), rows


def load_noise(path, default_dark_rate: float | None = None,
               ) -> tuple[NoiseParams, LeakageMatrix | None]:
    """Read a noise file: [noise] scalars plus optional [leakage] and
    [offresonant] matrices.

    dark_rate_hz may be omitted when the device file already supplies a
    detector dark-count rate; pass it as ``default_dark_rate``.
    """
    parser, lines, path = _load_ini(path)
    sections = _sections(parser, lines, path)
    if "noise" not in sections:
        raise ConfigError("noise file needs a [noise] section", path=path)
    extra = set(sections) - {"noise", "leakage", "offresonant"}
    if extra:
        raise ConfigError(f"unexpected sections in noise file: {sorted(extra)}",
                          path=path)
    sec = sections["noise"]
    sec.check_keys(_NOISE_KEYS, {"base_noise_per_window", "fluorescence_amplitude",
                                 "fluorescence_decay_us"})
    dark = sec.float("dark_rate_hz", default_dark_rate)
    if dark is None:
        raise ConfigError("dark_rate_hz missing and no device fallback given",
                          path=path, key="dark_rate_hz")

    leak = None
    if "leakage" in sections:
        ids, rows = _matrix_rows(sections["leakage"])
        leak = LeakageMatrix(cell_ids=ids,
                             values=tuple(tuple(r) for r in rows))

    offres: dict[tuple[int, int], float] = {}
    if "offresonant" in sections:
        ids, rows = _matrix_rows(sections["offresonant"])
        for i, cid in enumerate(ids):
            for j, cjd in enumerate(ids):
                if rows[i][j] != 0.0:
                    offres[(cid, cjd)] = rows[i][j]

    try:
        noise = NoiseParams(
            base_noise_per_window=sec.float("base_noise_per_window"),
            fluorescence_amplitude=sec.float("fluorescence_amplitude"),
            fluorescence_decay=sec.float("fluorescence_decay_us"),
            dark_rate=dark,
            offresonant_echo_leak=offres,
        )
    except ConfigError as exc:
        if exc.path is None:
            raise ConfigError(str(exc), path=path) from exc
        raise
    return noise, leak


# --------------------------------------------------------------------------
# CSV emission (all writers pin the line terminator so output bytes are
# platform-independent and reproducible)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _fmt(x: float) -> str:
    if x != x:  # NaN
        return "nan"
    if x in (float("inf"), float("-inf")):
        return "inf" if x > 0 else "-inf"
    return format(x, ".10g")


COUNTS_HEADER = ["run_kind", "input_cell", "output_cell", "temporal_index",
                 "total_counts", "n_trials"]


def write_counts_csv(path, result) -> Path:
    """Write a counts table.

    ``result`` is either a single TrialCounts (signal/noise run) or a mapping
    (input_cell, output_cell) -> TrialCounts from a cross-talk scan.
    Rows are written in canonical sorted order so identical runs produce
    byte-identical files.
    """
    path = Path(path)
    rows = []
    if isinstance(result, TrialCounts):
        for (cell, k), total in sorted(result.counts.items()):
            rows.append([result.kind.value, cell, cell, k, total, result.n_trials])
    else:
        for (i, j) in sorted(result):
            tc = result[(i, j)]
            for (_, k), total in sorted(tc.counts.items()):
                rows.append([tc.kind.value, i, j, k, total, tc.n_trials])
    with path.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(COUNTS_HEADER)
        w.writerows(rows)
    return path


class CountsFile:
    """Parsed counts CSV: run kind plus per-row tallies."""

    def __init__(self, kind: RunKind, rows):
        self.kind = kind
        self.rows = rows  # list of (input_cell, output_cell, k, total, n_trials)

    def to_trial_counts(self) -> TrialCounts:
        """Reassemble a signal/noise run (input == output on every row)."""
        if self.kind is RunKind.CROSSTALK:
            raise ConfigError("this is a cross-talk scan, not a single run")
        counts = {}
        n_trials = None
        for i, j, k, total, n in self.rows:
            if i != j:
                raise ConfigError(
                    f"signal/noise rows must have input_cell == output_cell, "
                    f"got ({i}, {j})")
            counts[(i, k)] = total
            n_trials = n if n_trials is None else n_trials
            if n != n_trials:
                raise ConfigError("inconsistent n_trials across rows")
        return TrialCounts(kind=self.kind, counts=counts, n_trials=n_trials)

    def to_scan(self) -> dict[tuple[int, int], TrialCounts]:
        if self.kind is not RunKind.CROSSTALK:
            raise ConfigError("not a cross-talk scan")
        counts: dict[tuple[int, int], dict] = {}
        trials: dict[tuple[int, int], int] = {}
        for i, j, k, total, n in self.rows:
            counts.setdefault((i, j), {})[(j, k)] = total
            trials[(i, j)] = n
        return {pair: TrialCounts(kind=RunKind.CROSSTALK, counts=tallies,
                                  n_trials=trials[pair], pair=pair)
                for pair, tallies in counts.items()}


def read_counts_csv(path) -> CountsFile:
    path = Path(path)
    if not path.exists():
        raise ConfigError("file not found", path=path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError("empty counts file", path=path) from None
        if header != COUNTS_HEADER:
            raise ConfigError(f"unexpected counts header {header}", path=path, line=1)
        kinds = set()
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                kinds.add(row[0])
                rows.append((int(row[1]), int(row[2]), int(row[3]),
                             int(row[4]), int(row[5])))
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"bad counts row: {row}", path=path,
                                  line=lineno) from exc
    if not rows:
        raise ConfigError("counts file has no data rows", path=path)
    if len(kinds) != 1:
        raise ConfigError(f"mixed run kinds in one file: {sorted(kinds)}", path=path)
    try:
        kind = RunKind(kinds.pop())
    except ValueError as exc:
        raise ConfigError(f"unknown run kind: {exc}", path=path) from exc
    return CountsFile(kind, rows)


def write_timeline_csv(path, timeline: Timeline) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["channel", "kind", "cell_id", "temporal_index",
                    "start_us", "duration_us"])
        for ev in timeline.events:
            w.writerow([ev.channel.value, ev.kind.value, ev.cell_id,
                        "" if ev.temporal_index is None else ev.temporal_index,
                        _fmt(ev.start), _fmt(ev.duration)])
    return path


def write_mode_stats_csv(path, stats) -> Path:
    """stats: mapping (spatial_mode, temporal_index) -> ModeStats."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["spatial_mode", "temporal_index", "c_signal", "c_signal_err",
                    "c_noise", "c_noise_err", "snr", "snr_err"])
        for (cell, k) in sorted(stats):
            s = stats[(cell, k)]
            w.writerow([cell, k, _fmt(s.c_signal), _fmt(s.err_signal),
                        _fmt(s.c_noise), _fmt(s.err_noise),
                        _fmt(s.snr), _fmt(s.snr_err)])
    return path


def write_cumulative_csv(path, modes, cum_signal, cum_signal_err,
                         cum_noise, cum_noise_err) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["mode_number", "spatial_mode", "temporal_index",
                    "c_signal_cum", "c_signal_cum_err",
                    "c_noise_cum", "c_noise_cum_err"])
        for n, ((cell, k), cs, cse, cb, cbe) in enumerate(
                zip(modes, cum_signal, cum_signal_err, cum_noise, cum_noise_err),
                start=1):
            w.writerow([n, cell, k, _fmt(cs), _fmt(cse), _fmt(cb), _fmt(cbe)])
    return path


def write_projections_csv(path, projections) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["spatial_mode", "c_signal_rescaled", "c_signal_rescaled_err",
                    "snr_adjusted", "snr_adjusted_err", "g2", "g2_err",
                    "fidelity", "fidelity_err"])
        for p in projections:
            w.writerow([p.cell_id, _fmt(p.c_signal_rescaled), _fmt(p.err_rescaled),
                        _fmt(p.snr_adjusted), _fmt(p.snr_adjusted_err),
                        _fmt(p.g2_inferred), _fmt(p.g2_err),
                        _fmt(p.fidelity), _fmt(p.fidelity_err)])
    return path


def write_crosstalk_csvs(matrix_path, err_path, summary_path, xtalk) -> list[Path]:
    """Write the cross-talk ratio matrix, its error matrix and a summary."""
    matrix_path, err_path, summary_path = map(Path, (matrix_path, err_path,
                                                     summary_path))
    ids = list(xtalk.cell_ids)
    header = ["input_cell"] + [str(j) for j in ids]
    for path, table in ((matrix_path, xtalk.c), (err_path, xtalk.c_err)):
        with path.open("w", newline="") as fh:
            w = _writer(fh)
            w.writerow(header)
            for i, cid in enumerate(ids):
                w.writerow([cid] + [_fmt(table[i][j]) for j in range(len(ids))])
    with summary_path.open("w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["quantity", "cell", "value"])
        w.writerow(["mean_offdiagonal", "", _fmt(xtalk.mean_offdiagonal)])
        for cid in ids:
            if cid in xtalk.noise_contribution:  # absent for invalid rows
                w.writerow(["noise_contribution", cid,
                            _fmt(xtalk.noise_contribution[cid])])
        for cid in xtalk.invalid_rows:
            w.writerow(["invalid_row", cid, ""])
    return [matrix_path, err_path, summary_path]


# --------------------------------------------------------------------------
# manifests


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_manifest(path, payload: dict) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError("manifest not found", path=path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc}", path=path,
                          line=exc.lineno) from exc
