"""Run configuration: typed parameter records, validation, JSON loading, overrides.

All times are picoseconds, lengths millimetres, wavelengths nanometres unless a
field name says otherwise. A run is fully described by one RunConfig; the same
document drives simulation and analysis so a report is reproducible from the
config file plus the seed alone.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields as dataclass_fields
from pathlib import Path
from typing import Any

# FWHM of a Gaussian = 2*sqrt(2*ln 2) * sigma
GAUSSIAN_FWHM_OVER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field path."""


def fwhm_to_sigma(fwhm: float) -> float:
    return fwhm / GAUSSIAN_FWHM_OVER_SIGMA


@dataclass(frozen=True)
class AnodeGeometry:
    """Square delay-line anode: size, signal speed and timestamp quantisation.

    The decode arithmetic assumes signal_speed * propagation_time equals the
    anode side length, so that the per-axis timing sum of a clean hit is the
    full propagation time. Enforced at validation.
    """

    size_x_mm: float = 40.0
    size_y_mm: float = 40.0
    signal_speed_mm_per_ps: float = 1e-3
    propagation_time_ps: float = 4e4
    tick_ps: int = 1

    def validate(self, path: str = "geometry") -> None:
        for name in ("size_x_mm", "size_y_mm", "signal_speed_mm_per_ps", "propagation_time_ps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{path}.{name}: must be > 0")
        if not isinstance(self.tick_ps, int) or self.tick_ps < 1:
            raise ConfigError(f"{path}.tick_ps: must be an integer >= 1")
        for name, size in (("size_x_mm", self.size_x_mm), ("size_y_mm", self.size_y_mm)):
            span = self.signal_speed_mm_per_ps * self.propagation_time_ps
            if not math.isclose(span, size, rel_tol=1e-9, abs_tol=0.0):
                raise ConfigError(
                    f"{path}.{name}: signal_speed * propagation_time = {span} mm "
                    f"does not match the anode size {size} mm"
                )

    @property
    def propagation_ticks(self) -> int:
        return int(round(self.propagation_time_ps / self.tick_ps))


@dataclass(frozen=True)
class Calibration:
    """Linear position-to-wavelength map of the grating spectrometer."""

    lambda_center_nm: float = 389.25
    dispersion_nm_per_mm: float = 0.0375
    x_center_mm: float = 20.0

    def validate(self, path: str = "calibration") -> None:
        if self.dispersion_nm_per_mm == 0:
            raise ConfigError(f"{path}.dispersion_nm_per_mm: must be nonzero")


@dataclass(frozen=True)
class SimConfig:
    """Physical and geometric parameters of one simulated acquisition.

    Rates named *_per_pulse are Bernoulli probabilities per laser pulse, valid
    in the low-occupancy counting regime. dark_rate_hz is a homogeneous Poisson
    rate per detector.
    """

    seed: int = 1
    duration_ps: float = 5e9
    rep_rate_hz: float = 76e6
    pair_rate_per_pulse: float = 0.2
    pump_scatter_rate_per_pulse: float = 0.2
    dark_rate_hz: float = 1000.0
    lambda_hep_nm: float = 388.8
    lambda_lep_nm: float = 389.8
    lambda_pump_nm: float = 389.2
    line_fwhm_nm: float = 0.18
    detuning_fwhm_nm: float = 0.18
    qe: float = 0.20
    jitter_fwhm_ps: float = 263.0
    dead_time_ps: float = 10000.0
    geometry: AnodeGeometry = field(default_factory=AnodeGeometry)
    calibration: Calibration = field(default_factory=Calibration)

    def validate(self, path: str = "simulation") -> None:
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError(f"{path}.seed: must be an unsigned 64-bit integer")
        if self.duration_ps <= 0:
            raise ConfigError(f"{path}.duration_ps: must be > 0")
        if self.rep_rate_hz <= 0:
            raise ConfigError(f"{path}.rep_rate_hz: must be > 0")
        for name in ("pair_rate_per_pulse", "pump_scatter_rate_per_pulse", "qe"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{path}.{name}: probability must lie in [0, 1]")
        for name in ("dark_rate_hz", "line_fwhm_nm", "detuning_fwhm_nm", "jitter_fwhm_ps", "dead_time_ps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{path}.{name}: must be >= 0")
        if not self.lambda_hep_nm < self.lambda_pump_nm < self.lambda_lep_nm:
            raise ConfigError(
                f"{path}: require lambda_hep_nm < lambda_pump_nm < lambda_lep_nm, "
                f"got {self.lambda_hep_nm}, {self.lambda_pump_nm}, {self.lambda_lep_nm}"
            )
        for name in ("lambda_hep_nm", "lambda_lep_nm", "lambda_pump_nm"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{path}.{name}: must be > 0")
        self.geometry.validate("geometry")
        self.calibration.validate("calibration")

    @property
    def pulse_period_ps(self) -> float:
        return 1e12 / self.rep_rate_hz


@dataclass(frozen=True)
class CorrelationConfig:
    """Delay histogram, coincidence window and spectral binning parameters."""

    g2_bin_width_ps: float = 88.0
    g2_range_ps: float = 60000.0
    coincidence_window_ps: tuple[float, float] = (-500.0, 500.0)
    accidental_window_ps: tuple[float, float] = (12658.0, 13658.0)
    # 1D spectrum axis; bin centres land on the nominal 388.8/389.2/389.8 peaks
    spectrum_lo_nm: float = 388.4875
    spectrum_hi_nm: float = 390.0125
    spectrum_bin_nm: float = 0.025
    # Joint spectrum axes (same for both detectors)
    jsi_lo_nm: float = 388.475
    jsi_hi_nm: float = 390.025
    jsi_bin_nm: float = 0.05
    # Rectangles (x_lo, x_hi, y_lo, y_hi) in nm bounding the two pair peaks.
    # The pair blob is an anti-diagonal ridge ~3 sigma of the detuning wide,
    # so the rectangles span +-0.25 nm around the nominal line centers.
    signal_regions_nm: tuple[tuple[float, float, float, float], ...] = (
        (388.55, 389.05, 389.55, 390.05),
        (389.55, 390.05, 388.55, 389.05),
    )

    def validate(self, path: str = "correlation") -> None:
        if self.g2_bin_width_ps <= 0:
            raise ConfigError(f"{path}.g2_bin_width_ps: must be > 0")
        if self.g2_range_ps <= 0:
            raise ConfigError(f"{path}.g2_range_ps: must be > 0")
        for name in ("coincidence_window_ps", "accidental_window_ps"):
            w = getattr(self, name)
            if len(w) != 2 or not w[0] < w[1]:
                raise ConfigError(f"{path}.{name}: must be an increasing (lo, hi) pair")
        cw = self.coincidence_window_ps[1] - self.coincidence_window_ps[0]
        aw = self.accidental_window_ps[1] - self.accidental_window_ps[0]
        # Unequal windows would bias the accidental subtraction.
        if not math.isclose(cw, aw, rel_tol=1e-9, abs_tol=1e-9):
            raise ConfigError(
                f"{path}: coincidence window width {cw} ps != accidental window width {aw} ps"
            )
        for lo, hi, width, label in (
            (self.spectrum_lo_nm, self.spectrum_hi_nm, self.spectrum_bin_nm, "spectrum"),
            (self.jsi_lo_nm, self.jsi_hi_nm, self.jsi_bin_nm, "jsi"),
        ):
            if width <= 0:
                raise ConfigError(f"{path}.{label}_bin_nm: must be > 0")
            if not lo < hi:
                raise ConfigError(f"{path}.{label}_lo_nm/{label}_hi_nm: must be increasing")
        if len(self.signal_regions_nm) != 2:
            raise ConfigError(f"{path}.signal_regions_nm: expected exactly two rectangles")
        for i, rect in enumerate(self.signal_regions_nm):
            if len(rect) != 4 or not (rect[0] < rect[1] and rect[2] < rect[3]):
                raise ConfigError(
                    f"{path}.signal_regions_nm[{i}]: expected (x_lo, x_hi, y_lo, y_hi) with lo < hi"
                )


@dataclass(frozen=True)
class IoConfig:
    """Optional default paths; CLI flags override them."""

    events_path: str | None = None
    out_dir: str | None = None

    def validate(self, path: str = "io") -> None:
        return None


@dataclass(frozen=True)
class RunConfig:
    simulation: SimConfig = field(default_factory=SimConfig)
    correlation: CorrelationConfig = field(default_factory=CorrelationConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def validate(self) -> None:
        self.simulation.validate("simulation")
        self.correlation.validate("correlation")
        self.io.validate("io")

    @property
    def geometry(self) -> AnodeGeometry:
        return self.simulation.geometry

    @property
    def calibration(self) -> Calibration:
        return self.simulation.calibration


_SECTION_TYPES = {
    "simulation": SimConfig,
    "geometry": AnodeGeometry,
    "calibration": Calibration,
    "correlation": CorrelationConfig,
    "io": IoConfig,
}

_TUPLE_FIELDS = {
    "coincidence_window_ps",
    "accidental_window_ps",
    "signal_regions_nm",
}


def _coerce(name: str, value: Any) -> Any:
    if name == "signal_regions_nm":
        return tuple(tuple(float(x) for x in rect) for rect in value)
    if name in _TUPLE_FIELDS:
        return tuple(float(x) for x in value)
    return value


def _build_section(cls: type, doc: dict[str, Any], path: str) -> Any:
    allowed = {f.name for f in dataclass_fields(cls)} - {"geometry", "calibration"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown key")
    kwargs = {}
    for name, value in doc.items():
        if name == "seed" or name == "tick_ps":
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if not isinstance(value, int):
                raise ConfigError(f"{path}.{name}: must be an integer")
        kwargs[name] = _coerce(name, value)
    return cls(**kwargs)


def run_config_from_dict(doc: dict[str, Any]) -> RunConfig:
    """Build and validate a RunConfig from a nested plain dict.

    Unknown sections or keys are rejected so a typo cannot silently fall back
    to a default value.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config root: expected an object of sections")
    unknown = set(doc) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")
    sections: dict[str, Any] = {}
    for name, cls in _SECTION_TYPES.items():
        sub = doc.get(name, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"{name}: expected an object")
        sections[name] = _build_section(cls, sub, name)
    sim = sections["simulation"]
    if "geometry" in doc or "calibration" in doc:
        sim = SimConfig(
            **{
                f.name: getattr(sim, f.name)
                for f in dataclass_fields(SimConfig)
                if f.name not in ("geometry", "calibration")
            },
            geometry=sections["geometry"],
            calibration=sections["calibration"],
        )
    cfg = RunConfig(simulation=sim, correlation=sections["correlation"], io=sections["io"])
    cfg.validate()
    return cfg


def load_run_config(path: str | Path) -> RunConfig:
    """Load a JSON run configuration file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return run_config_from_dict(doc)


def apply_overrides(doc: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply dotted-path `section.key=value` overrides to a config dict.

    Values are parsed as JSON when possible so numbers and lists work; anything
    unparseable is kept as a string.
    """
    out = json.loads(json.dumps(doc))  # deep copy, JSON types only
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}': expected section.key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        if len(parts) < 2:
            raise ConfigError(f"override '{item}': expected section.key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{item}': {p} is not a section")
        node[parts[-1]] = value
    return out


def run_config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    """Flatten a RunConfig back to the JSON document shape."""

    def section(obj: Any, skip: tuple[str, ...] = ()) -> dict[str, Any]:
        out = {}
        for f in dataclass_fields(obj):
            if f.name in skip:
                continue
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[f.name] = v
        return out

    return {
        "simulation": section(cfg.simulation, skip=("geometry", "calibration")),
        "geometry": section(cfg.simulation.geometry),
        "calibration": section(cfg.simulation.calibration),
        "correlation": section(cfg.correlation),
        "io": section(cfg.io),
    }
