"""End-to-end runs: simulate to a `.dlde` file, decode it back, analyze, report.

Simulation streams the laser pulse train through fixed-size blocks so memory
stays bounded for arbitrarily long acquisitions; dead-time filtering and the
globally sorted serialization carry small boundary buffers between blocks. The
block size is a constant of the implementation, not configuration: it is part
of the identity of the sampled random stream for a given seed.

Decoding has a sequential streaming path (bounded buffers, the default) and a
record-sliced parallel path. Both make identical per-trigger decisions, so
their outputs are bit-identical: slices start at timestamp-run boundaries and
each worker reads forward far enough to cover every owned trigger's candidate
window. Orphan accounting across slice edges is reconciled exactly from the
workers' claim reports.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import CorrelationConfig, RunConfig, SimConfig, fwhm_to_sigma
from .correlation import (
    FitError,
    FwhmFit,
    Histogram1D,
    JsiReport,
    build_jsi,
    fit_fwhm,
    g2_histogram,
    select_coincidences,
    spectrum_1d,
    subtract_accidental,
)
from .detector_sim import (
    DeadTimeFilter,
    DetectTally,
    JITTER_CLIP_SIGMAS,
    detect,
    encode_groups,
    groups_to_pulses,
)
from .event_format import (
    DEFAULT_CHUNK_RECORDS,
    EventFileHeader,
    EventReader,
    EventWriter,
    PULSE_DTYPE,
    _validate_chunk,
    read_record_range,
    record_count,
)
from .reconstruction import (
    DEFAULT_SUM_TOL_TICKS,
    HIT_GROUP_DTYPE,
    HitMatcher,
    PHOTON_DTYPE,
    _match_core,
    default_window_ticks,
    groups_to_events,
    write_events_csv,
)
from .render import svg_heatmap, svg_histogram
from .source_sim import EventKind, generate_emissions

SIM_BLOCK_PULSES = 1 << 20
PARALLEL_SLICE_RECORDS = 1 << 21
SIDE_PEAK_COUNT = 4


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(v)


@dataclass
class SimulationSummary:
    seed: int
    duration_ps: float
    laser_pulses: int = 0
    emitted_pairs: int = 0
    emitted_pump: int = 0
    emitted_dark: int = 0
    qe_lost: int = 0
    off_sensor: int = 0
    negative_time_dropped: int = 0
    detections: list[int] = field(default_factory=lambda: [0, 0])
    dead_time_discarded: list[int] = field(default_factory=lambda: [0, 0])
    groups_written: list[int] = field(default_factory=lambda: [0, 0])
    records_written: int = 0
    bytes_written: int = 0

    def lines(self) -> list[str]:
        return [
            f"seed={self.seed}",
            f"duration_ps={_fmt(self.duration_ps)}",
            f"laser_pulses={self.laser_pulses}",
            f"emitted_pairs={self.emitted_pairs}",
            f"emitted_pump={self.emitted_pump}",
            f"emitted_dark={self.emitted_dark}",
            f"qe_lost={self.qe_lost}",
            f"off_sensor={self.off_sensor}",
            f"negative_time_dropped={self.negative_time_dropped}",
            f"detections_det1={self.detections[0]}",
            f"detections_det2={self.detections[1]}",
            f"dead_time_discarded_det1={self.dead_time_discarded[0]}",
            f"dead_time_discarded_det2={self.dead_time_discarded[1]}",
            f"groups_det1={self.groups_written[0]}",
            f"groups_det2={self.groups_written[1]}",
            f"records_written={self.records_written}",
            f"bytes_written={self.bytes_written}",
        ]


def simulate_to_file(
    cfg: RunConfig | SimConfig, path, block_pulses: int = SIM_BLOCK_PULSES
) -> SimulationSummary:
    """Run one seeded acquisition and serialize its raw pulse stream.

    Deterministic: the same (config, seed) yields a byte-identical file.
    """
    sim = cfg.simulation if isinstance(cfg, RunConfig) else cfg
    sim.validate()
    geometry = sim.geometry
    period = sim.pulse_period_ps
    n_pulses = int(np.ceil(sim.duration_ps / period))
    while n_pulses > 1 and (n_pulses - 1) * period >= sim.duration_ps:
        n_pulses -= 1
    rng = np.random.default_rng(np.random.SeedSequence(sim.seed))
    header = EventFileHeader(tick_ps=geometry.tick_ps, detector_count=2)
    summary = SimulationSummary(seed=sim.seed, duration_ps=sim.duration_ps, laser_pulses=n_pulses)
    dead_filter = DeadTimeFilter(sim.dead_time_ps, geometry.tick_ps)
    jitter_reach = JITTER_CLIP_SIGMAS * fwhm_to_sigma(sim.jitter_fwhm_ps)
    tally = DetectTally()
    carry = np.empty(0, dtype=PULSE_DTYPE)
    with EventWriter(path, header) as writer:
        for k0 in range(0, n_pulses, block_pulses):
            k1 = min(k0 + block_pulses, n_pulses)
            times = np.arange(k0, k1, dtype=np.float64) * period
            t_hi = k1 * period if k1 < n_pulses else sim.duration_ps
            emissions = generate_emissions(sim, times, rng, (k0 * period, t_hi))
            summary.emitted_pairs += int(np.count_nonzero(emissions["kind"] == EventKind.HEP))
            summary.emitted_pump += int(np.count_nonzero(emissions["kind"] == EventKind.PUMP))
            summary.emitted_dark += int(np.count_nonzero(emissions["kind"] == EventKind.DARK))
            detections, dtally = detect(emissions, sim, rng)
            tally.add(dtally)
            for det in (0, 1):
                summary.detections[det] += int(np.count_nonzero(detections["path"] == det))
            groups = encode_groups(detections, geometry)
            if k1 < n_pulses:
                future_floor = int(math.floor((k1 * period - jitter_reach) / geometry.tick_ps)) - 1
                survivors = dead_filter.feed(groups, future_floor)
                flush_floor = dead_filter.emitted_floor_ticks(future_floor)
            else:
                survivors = dead_filter.feed(groups, future_floor_ticks=None)
                flush_floor = None
            for det in (0, 1):
                summary.groups_written[det] += int(np.count_nonzero(survivors["detector"] == det))
            pulses = groups_to_pulses(survivors)
            buf = np.concatenate([carry, pulses])
            order = np.argsort(buf["timestamp"].astype(np.int64), kind="stable")
            buf = buf[order]
            if flush_floor is None:
                writer.write_chunk(buf)
                carry = np.empty(0, dtype=PULSE_DTYPE)
            else:
                emit = buf["timestamp"].astype(np.int64) < flush_floor
                writer.write_chunk(buf[emit])
                carry = buf[~emit]
        summary.bytes_written = writer.bytes_written
        summary.records_written = writer.records_written
    summary.qe_lost = tally.n_qe_lost
    summary.off_sensor = tally.n_off_sensor
    summary.negative_time_dropped = tally.n_negative_time
    summary.dead_time_discarded = list(dead_filter.discards)
    return summary


@dataclass
class DecodeResult:
    header: EventFileHeader
    events: tuple[np.ndarray, np.ndarray]  # PHOTON_DTYPE arrays, detectors 0 and 1
    records: int
    records_per_detector: list[int]
    groups: list[int]
    orphans: list[int]
    malformed: list[int]


def decode_file(
    path,
    geometry,
    calibration,
    window_ps: float | None = None,
    sum_tol_ticks: int = DEFAULT_SUM_TOL_TICKS,
    workers: int = 1,
    chunk_records: int = DEFAULT_CHUNK_RECORDS,
) -> DecodeResult:
    """Parse a `.dlde` file and reconstruct photon events per detector."""
    if workers <= 1:
        return _decode_sequential(path, geometry, calibration, window_ps, sum_tol_ticks, chunk_records)
    return _decode_parallel(path, geometry, calibration, window_ps, sum_tol_ticks, workers)


def _check_tick(header: EventFileHeader, geometry) -> None:
    if header.tick_ps != geometry.tick_ps:
        raise ValueError(
            f"file tick_ps={header.tick_ps} does not match configured geometry tick_ps={geometry.tick_ps}"
        )


def _decode_sequential(path, geometry, calibration, window_ps, sum_tol_ticks, chunk_records) -> DecodeResult:
    matchers = [HitMatcher(geometry, window_ps, sum_tol_ticks, detector=d) for d in (0, 1)]
    buffers: list[list[np.ndarray]] = [[], []]
    malformed = [0, 0]
    per_det = [0, 0]

    def consume(det: int, groups: np.ndarray) -> None:
        if groups.size:
            ev, bad = groups_to_events(groups, geometry, calibration)
            malformed[det] += bad
            buffers[det].append(ev)

    with EventReader(path, chunk_records) as reader:
        _check_tick(reader.header, geometry)
        for chunk in reader.iter_chunks():
            for det in (0, 1):
                mask = chunk["detector"] == det
                per_det[det] += int(np.count_nonzero(mask))
                consume(det, matchers[det].feed(
                    chunk["timestamp"][mask].astype(np.int64), chunk["channel"][mask]
                ))
        for det in (0, 1):
            consume(det, matchers[det].finish())
        events_list = []
        for det in (0, 1):
            ev = np.concatenate(buffers[det]) if buffers[det] else np.empty(0, dtype=PHOTON_DTYPE)
            buffers[det] = []  # release chunk pieces before concatenating the next detector
            events_list.append(ev)
        events = tuple(events_list)
        return DecodeResult(
            header=reader.header,
            events=events,  # type: ignore[arg-type]
            records=reader.records_read,
            records_per_detector=per_det,
            groups=[m.n_groups for m in matchers],
            orphans=[m.orphans for m in matchers],
            malformed=malformed,
        )


def _align_to_run_start(f, boundary: int) -> int:
    """Move a record boundary back to the first record of its timestamp run."""
    if boundary <= 0:
        return 0
    t_b = int(read_record_range(f, boundary, boundary + 1)["timestamp"][0])
    b = boundary
    while b > 0:
        lo = max(0, b - 4096)
        ts = read_record_range(f, lo, b)["timestamp"].astype(np.int64)
        i = ts.size
        while i > 0 and int(ts[i - 1]) == t_b:
            i -= 1
        b = lo + i
        if i > 0:
            break
    return b


def _decode_slice(path, header, geometry, calibration, window_ticks, sum_tol_ticks, lo, hi):
    """Decode the triggers owned by records [lo, hi), reading forward overlap."""
    with open(path, "rb") as f:
        owned = read_record_range(f, lo, hi)
        prev_ts = int(read_record_range(f, lo - 1, lo)["timestamp"][0]) if lo > 0 else 0
        _validate_chunk(owned, header, lo, prev_ts)
        parts = [owned]
        gid_parts = [np.arange(lo, hi, dtype=np.int64)]
        if owned.size:
            bound = int(owned["timestamp"][-1]) + window_ticks
            pos = hi
            last_ts = int(owned["timestamp"][-1])
            while True:
                nxt = read_record_range(f, pos, pos + 65536)
                if nxt.size == 0:
                    break
                _validate_chunk(nxt, header, pos, last_ts)
                last_ts = int(nxt["timestamp"][-1])
                keep = nxt["timestamp"].astype(np.int64) <= bound
                n_keep = int(np.count_nonzero(keep))
                if n_keep:
                    parts.append(nxt[:n_keep])
                    gid_parts.append(np.arange(pos, pos + n_keep, dtype=np.int64))
                if n_keep < nxt.size:
                    break
                pos += nxt.size
    pulses = np.concatenate(parts)
    gids = np.concatenate(gid_parts)
    out = {
        "events": [],
        "groups": [0, 0],
        "malformed": [0, 0],
        "records_per_detector": [0, 0],
        "head_unclaimed": [None, None],
        "beyond_unclaimed": [0, 0],
        "claims_forward": [None, None],
    }
    for det in (0, 1):
        mask = pulses["detector"] == det
        ts = pulses["timestamp"][mask].astype(np.int64)
        ch = pulses["channel"][mask]
        gid = gids[mask]
        owned_mask = gid < hi
        out["records_per_detector"][det] = int(np.count_nonzero(owned_mask))
        _, ok, mcp_idx, cand_t, cand_idx = _match_core(
            ts, ch, geometry.propagation_ticks, window_ticks, sum_tol_ticks
        )
        accept = ok & (gid[mcp_idx] < hi)
        claimed = np.zeros(ts.size, dtype=bool)
        claimed[mcp_idx[accept]] = True
        for k in range(4):
            claimed[cand_idx[k][accept]] = True
        groups = np.empty(int(np.count_nonzero(accept)), dtype=HIT_GROUP_DTYPE)
        groups["detector"] = det
        groups["t_mcp"] = ts[mcp_idx[accept]]
        for k, name in enumerate(("t_xa", "t_xb", "t_ya", "t_yb")):
            groups[name] = cand_t[k][accept]
        ev, bad = groups_to_events(groups, geometry, calibration)
        out["events"].append(ev)
        out["groups"][det] = int(groups.size)
        out["malformed"][det] = bad
        if np.any(owned_mask):
            head_bound = int(ts[owned_mask][0]) + window_ticks
            head = owned_mask & (ts <= head_bound)
            out["head_unclaimed"][det] = gid[head & ~claimed]
            out["beyond_unclaimed"][det] = int(np.count_nonzero(owned_mask & ~head & ~claimed))
        else:
            out["head_unclaimed"][det] = np.empty(0, dtype=np.int64)
        out["claims_forward"][det] = gid[~owned_mask & claimed]
    return out


def _decode_parallel(path, geometry, calibration, window_ps, sum_tol_ticks, workers) -> DecodeResult:
    with open(path, "rb") as f:
        header = EventFileHeader.unpack(f.read(16))
        _check_tick(header, geometry)
        n = record_count(path)
        n_slices = max(workers, math.ceil(n / PARALLEL_SLICE_RECORDS)) if n else 1
        raw_bounds = [n * k // n_slices for k in range(1, n_slices)]
        aligned = {_align_to_run_start(f, b) for b in raw_bounds}
        bounds = sorted({0, n} | aligned)
    window_ticks = (
        default_window_ticks(geometry, sum_tol_ticks)
        if window_ps is None
        else int(round(window_ps / geometry.tick_ps))
    )
    slices = [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1) if bounds[i] < bounds[i + 1]]
    if not slices:
        slices = [(0, n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(
            pool.map(
                lambda se: _decode_slice(
                    path, header, geometry, calibration, window_ticks, sum_tol_ticks, se[0], se[1]
                ),
                slices,
            )
        )
    buffers: list[list[np.ndarray]] = [[], []]
    groups = [0, 0]
    malformed = [0, 0]
    per_det = [0, 0]
    orphans = [0, 0]
    for det in (0, 1):
        head_all = np.concatenate([r["head_unclaimed"][det] for r in results])
        claims_all = np.concatenate([r["claims_forward"][det] for r in results])
        orphans[det] = int(np.setdiff1d(head_all, claims_all).size)
        for r in results:
            buffers[det].append(r["events"][det])
            groups[det] += r["groups"][det]
            malformed[det] += r["malformed"][det]
            per_det[det] += r["records_per_detector"][det]
            orphans[det] += r["beyond_unclaimed"][det]
    events = tuple(np.concatenate(b) if b else np.empty(0, dtype=PHOTON_DTYPE) for b in buffers)
    return DecodeResult(
        header=header,
        events=events,  # type: ignore[arg-type]
        records=n,
        records_per_detector=per_det,
        groups=groups,
        orphans=orphans,
        malformed=malformed,
    )


@dataclass
class AnalysisResult:
    corr: CorrelationConfig
    spectra: tuple[Histogram1D, Histogram1D]
    g2: Histogram1D
    fit: FwhmFit | None
    fit_error: str
    center_window_counts: int
    side_window_counts: list[int]
    side_window_mean: float
    center_to_side_ratio: float
    coincidence_count: int
    accidental_count: int
    jsi_report: JsiReport
    warnings: list[str]


def analyze_events(events: tuple[np.ndarray, np.ndarray], corr: CorrelationConfig) -> AnalysisResult:
    """Run the full analysis chain on reconstructed events of both detectors.

    Center/side-peak statistics are event counts in equal-width delay windows
    (the coincidence window and its images at multiples of the accidental-
    window center), not histogram-bin sums, so they carry no binning bias.
    """
    warnings: list[str] = []
    ev0, ev1 = events
    spectra = (
        spectrum_1d(ev0["wavelength_nm"], corr),
        spectrum_1d(ev1["wavelength_nm"], corr),
    )
    g2 = g2_histogram(ev0, ev1, corr)
    fit = None
    fit_error = ""
    try:
        fit = fit_fwhm(g2, 0.0)
    except FitError as exc:
        fit_error = str(exc)
        warnings.append(f"g2 peak fit unavailable: {exc}")
    t0 = ev0["t_ps"]
    t1 = ev1["t_ps"]
    ci, cj = select_coincidences(t0, t1, corr.coincidence_window_ps)
    ai, aj = select_coincidences(t0, t1, corr.accidental_window_ps)
    if ci.size == 0:
        warnings.append("no coincidences inside the coincidence window")
    center = int(ci.size)
    half = (corr.coincidence_window_ps[1] - corr.coincidence_window_ps[0]) / 2.0
    side_center = (corr.accidental_window_ps[0] + corr.accidental_window_ps[1]) / 2.0
    side_counts = []
    for k in range(1, SIDE_PEAK_COUNT + 1):
        for sign in (1, -1):
            c = sign * k * side_center
            i, _ = select_coincidences(t0, t1, (c - half, c + half))
            side_counts.append(int(i.size))
    side_mean = float(np.mean(side_counts)) if side_counts else math.nan
    ratio = center / side_mean if side_mean > 0 else math.nan
    jsi = build_jsi(ev0["wavelength_nm"][ci], ev1["wavelength_nm"][cj], corr)
    accidental = build_jsi(ev0["wavelength_nm"][ai], ev1["wavelength_nm"][aj], corr)
    report = subtract_accidental(jsi, accidental, corr.signal_regions_nm)
    return AnalysisResult(
        corr=corr,
        spectra=spectra,
        g2=g2,
        fit=fit,
        fit_error=fit_error,
        center_window_counts=center,
        side_window_counts=side_counts,
        side_window_mean=side_mean,
        center_to_side_ratio=ratio,
        coincidence_count=center,
        accidental_count=int(ai.size),
        jsi_report=report,
        warnings=warnings,
    )


def analyze_file(
    path, cfg: RunConfig, workers: int = 1, chunk_records: int = DEFAULT_CHUNK_RECORDS
) -> tuple[DecodeResult, AnalysisResult]:
    cfg.validate()
    decode = decode_file(
        path,
        cfg.geometry,
        cfg.calibration,
        workers=workers,
        chunk_records=chunk_records,
    )
    analysis = analyze_events(decode.events, cfg.correlation)
    if decode.records == 0:
        analysis.warnings.insert(0, "input file contains no records")
    return decode, analysis


def summary_lines(decode: DecodeResult, analysis: AnalysisResult) -> list[str]:
    """Flat key=value summary; stable key order, machine-greppable."""
    f = analysis.fit
    rep = analysis.jsi_report
    lines = [
        f"records={decode.records}",
        f"tick_ps={decode.header.tick_ps}",
    ]
    for det in (0, 1):
        label = f"det{det + 1}"
        lines += [
            f"{label}_records={decode.records_per_detector[det]}",
            f"{label}_groups={decode.groups[det]}",
            f"{label}_orphans={decode.orphans[det]}",
            f"{label}_malformed={decode.malformed[det]}",
            f"{label}_events={decode.events[det].size}",
        ]
    lines += [
        f"g2_total_pairs={int(analysis.g2.counts.sum())}",
        f"g2_center_counts={analysis.center_window_counts}",
        f"g2_side_mean={_fmt(analysis.side_window_mean)}",
        f"g2_center_side_ratio={_fmt(analysis.center_to_side_ratio)}",
        f"g2_fit_ok={int(f is not None)}",
        f"g2_fit_fwhm_ps={_fmt(f.fwhm) if f else 'nan'}",
        f"g2_fit_center_ps={_fmt(f.center) if f else 'nan'}",
        f"g2_fit_sigma_ps={_fmt(f.sigma) if f else 'nan'}",
        f"g2_fit_amplitude={_fmt(f.amplitude) if f else 'nan'}",
        f"g2_fit_offset={_fmt(f.offset) if f else 'nan'}",
        f"coincidences={analysis.coincidence_count}",
        f"accidentals={analysis.accidental_count}",
        f"car_raw={_fmt(rep.car_raw)}",
        f"car_raw_defined={int(rep.car_raw_defined)}",
        f"car_subtracted={_fmt(rep.car_subtracted)}",
        f"car_subtracted_defined={int(rep.car_subtracted_defined)}",
    ]
    for i, (px, py) in enumerate(rep.peaks_nm, start=1):
        lines.append(f"jsi_peak{i}_det1_nm={_fmt(px)}")
        lines.append(f"jsi_peak{i}_det2_nm={_fmt(py)}")
    lines.append(f"warnings={';'.join(analysis.warnings)}")
    return lines


def _normalized_g2(analysis: AnalysisResult) -> np.ndarray:
    """Delay curve rescaled so the mean side-peak window averages 1.0 per bin."""
    g2 = analysis.g2
    corr = analysis.corr
    window_width = corr.coincidence_window_ps[1] - corr.coincidence_window_ps[0]
    bins_per_window = max(window_width / g2.bin_width, 1e-300)
    if analysis.side_window_mean and analysis.side_window_mean > 0:
        scale = bins_per_window / analysis.side_window_mean
    else:
        scale = math.nan
    return g2.counts.astype(np.float64) * scale


def _normalized_csv(analysis: AnalysisResult, norm: np.ndarray) -> str:
    lines = ["bin_lo,bin_hi,g2\n"]
    edges = analysis.g2.bin_edges()
    for i in range(analysis.g2.nbins):
        lines.append(f"{edges[i]:.6f},{edges[i + 1]:.6f},{_fmt(float(norm[i]))}\n")
    return "".join(lines)


def write_report_bundle(
    out_dir,
    decode: DecodeResult,
    analysis: AnalysisResult,
    events_csv: bool = False,
    artifacts: tuple[str, ...] = ("spectrum", "g2", "jsi"),
) -> list[Path]:
    """Write CSV + SVG artifacts and the flat summary; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []

    def emit(name: str, text: str) -> None:
        p = out / name
        p.write_text(text)
        paths.append(p)

    if "spectrum" in artifacts:
        for det in (0, 1):
            hist = analysis.spectra[det]
            emit(f"spectrum_det{det + 1}.csv", _csv_text(hist))
            emit(
                f"spectrum_det{det + 1}.svg",
                svg_histogram(hist, f"singles spectrum, detector {det + 1}", "wavelength [nm]"),
            )
    if "g2" in artifacts:
        emit("g2.csv", _csv_text(analysis.g2))
        emit("g2.svg", svg_histogram(analysis.g2, "inter-detector delay histogram", "delay [ps]"))
        norm = _normalized_g2(analysis)
        emit("g2_normalized.csv", _normalized_csv(analysis, norm))
        emit("g2_normalized.svg", svg_histogram(
            analysis.g2,
            "delay histogram, side-peak mean normalized to 1",
            "delay [ps]",
            y_label="g2",
            values=np.nan_to_num(norm, nan=0.0, posinf=0.0, neginf=0.0),
        ))
    if "jsi" in artifacts:
        rep = analysis.jsi_report
        emit("jsi.csv", _csv2_text(rep.jsi))
        emit("jsi.svg", svg_heatmap(rep.jsi, "joint spectrum (coincidence window)",
                                    "detector 1 wavelength [nm]", "detector 2 wavelength [nm]"))
        emit("jsi_accidental.csv", _csv2_text(rep.accidental))
        emit("jsi_accidental.svg", svg_heatmap(rep.accidental, "joint spectrum (accidental window)",
                                               "detector 1 wavelength [nm]", "detector 2 wavelength [nm]"))
        emit("jsi_subtracted.csv", _csv2_text(rep.jsi, matrix=rep.subtracted))
        emit("jsi_subtracted.svg", svg_heatmap(rep.jsi, "joint spectrum, accidentals subtracted",
                                               "detector 1 wavelength [nm]", "detector 2 wavelength [nm]",
                                               matrix=rep.subtracted))
    if events_csv:
        for det in (0, 1):
            p = out / f"events_det{det + 1}.csv"
            write_events_csv(decode.events[det], p)
            paths.append(p)
    emit("summary.txt", "\n".join(summary_lines(decode, analysis)) + "\n")
    return paths


def _csv_text(hist: Histogram1D) -> str:
    buf = io.StringIO()
    hist.to_csv(buf)
    return buf.getvalue()


def _csv2_text(hist, matrix=None) -> str:
    buf = io.StringIO()
    hist.to_csv(buf, matrix=matrix)
    return buf.getvalue()
