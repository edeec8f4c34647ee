"""Run configuration: an INI-style file of ``key = value`` sections.

Every key has a default reproducing the experiment's parameters; unknown
sections or keys are errors. ``dump_config(parse_config(text))`` is a
fixed point.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .correlator import CorrelatorSettings
from .detector import DetectorConfig
from .errors import ConfigurationError, DickeEmissionError
from .geometry import DEFAULT_LASER_ANGLE, TWO_PI, collective_modes, debye_waller, experiment_geometry
from .model import STATISTICS, ModelParams
from .trajectory import DriveParams


@dataclass(frozen=True)
class GeometrySection:
    wavelength_nm: float = 397.0
    # inferred by calibration to a Debye-Waller factor of 0.51, not measured
    laser_angle_deg: float = math.degrees(DEFAULT_LASER_ANGLE)
    axial_mhz: float = 0.76
    radial1_mhz: float = 1.275
    radial2_mhz: float = 1.568
    ion_mass_amu: float = 39.962590863
    phonons_breathing: float = 15.0
    phonons_rocking1: float = 9.0
    phonons_rocking2: float = 7.0

    def build(self):
        from scipy import constants as const

        return experiment_geometry(
            laser_angle=math.radians(self.laser_angle_deg),
            wavelength=self.wavelength_nm * 1e-9,
            axial_frequency=TWO_PI * self.axial_mhz * 1e6,
            radial_frequency_1=TWO_PI * self.radial1_mhz * 1e6,
            radial_frequency_2=TWO_PI * self.radial2_mhz * 1e6,
            ion_mass=self.ion_mass_amu * const.atomic_mass - const.electron_mass,
            phonon_numbers=(self.phonons_breathing, self.phonons_rocking1, self.phonons_rocking2),
        )

    def debye_waller(self) -> float:
        geom = self.build()
        return debye_waller(geom, collective_modes(geom), geom.detector_axis)


@dataclass(frozen=True)
class DriveSection:
    saturation: float = 0.65
    # when set, overrides saturation: Rabi frequency in units of the decay rate
    rabi_over_gamma: float | None = None
    detuning_over_gamma: float = 0.0
    lifetime_ns: float = 6.9
    duration_s: float = 1e-3
    trajectories: int = 8
    seed: int = 20240101

    def build(self) -> DriveParams:
        gamma = 1.0 / (self.lifetime_ns * 1e-9)
        detuning = self.detuning_over_gamma * gamma
        if self.rabi_over_gamma is not None:
            return DriveParams(self.rabi_over_gamma * gamma, detuning, gamma)
        return DriveParams.from_saturation(self.saturation, gamma, detuning)


@dataclass(frozen=True)
class DetectorSection:
    dead_time_ns: float = 600.0
    timing_jitter_fwhm_ps: float = 50.0
    collection_efficiency: float = 0.025
    dark_count_rate: float = 0.0
    fov_phase_span_pi: float = 4.0
    fov_phase_center_pi: float = 0.0
    splitter_ratio: float = 0.5

    def build(self) -> DetectorConfig:
        return DetectorConfig(
            dead_time_ns=self.dead_time_ns,
            timing_jitter_fwhm_ps=self.timing_jitter_fwhm_ps,
            collection_efficiency=self.collection_efficiency,
            dark_count_rate=self.dark_count_rate,
            fov_phase_span=self.fov_phase_span_pi * math.pi,
            fov_phase_center=self.fov_phase_center_pi * math.pi,
            splitter_ratio=self.splitter_ratio,
        )


@dataclass(frozen=True)
class CorrelatorSection:
    spatial_bins: int = 96
    tau_bin_ns: float = 2.5
    tau_bins: int = 38
    symmetric: bool = False
    shards: int = 4

    def build(self, detector: DetectorConfig) -> CorrelatorSettings:
        return CorrelatorSettings(
            spatial_bins=self.spatial_bins,
            tau_bin_ps=int(round(self.tau_bin_ns * 1000)),
            tau_bins=self.tau_bins,
            symmetric=self.symmetric,
            columns=detector.columns,
            phase_low=detector.phase_low,
            phase_span=detector.fov_phase_span,
        )


@dataclass(frozen=True)
class FitSection:
    saturation: float = 0.65
    dwf1: float = 0.51
    dwf2: float = 0.51
    offset: float = 0.2
    fit_offset: bool = False
    # "poisson" (deviance of pair counts) or "chi2" (least squares)
    statistic: str = "poisson"
    # sum first-photon bins that share a phase modulo 2 pi before fitting
    pool_periods: bool = False
    report_deltas_pi: tuple = (0.34, 0.73, 1.05, 1.38)
    autocorr_deltas_pi: tuple = (0.34, 1.05)

    def build(self) -> ModelParams:
        return ModelParams(self.saturation, self.dwf1, self.dwf2, self.offset)


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometrySection = field(default_factory=GeometrySection)
    drive: DriveSection = field(default_factory=DriveSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    correlator: CorrelatorSection = field(default_factory=CorrelatorSection)
    fit: FitSection = field(default_factory=FitSection)

    def replace(self, **sections) -> "RunConfig":
        """Copy with per-section overrides, e.g. ``replace(drive={"seed": 3})``."""
        updates = {}
        for name, values in sections.items():
            updates[name] = dataclasses.replace(getattr(self, name), **values)
        cfg = dataclasses.replace(self, **updates)
        validate(cfg)
        return cfg

    def hash(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


_SECTION_TYPES = {
    "geometry": GeometrySection,
    "drive": DriveSection,
    "detector": DetectorSection,
    "correlator": CorrelatorSection,
    "fit": FitSection,
}


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(raw: str, default, annotation: str):
    raw = raw.strip()
    if "None" in annotation:
        if raw == "":
            return None
        return float(raw)
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(v) for v in raw.split(",") if v.strip())
    return raw


def _line_of(text: str, section: str, key: str | None = None):
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if key is not None and current == section:
            m = re.match(r"\s*([^=:#;\s]+)\s*[=:]", line)
            if m and m.group(1).strip().lower() == key.lower():
                return lineno
    return None


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse config: {exc}",
                                 line=getattr(exc, "lineno", None)) from exc
    sections = {}
    for name in parser.sections():
        if name not in _SECTION_TYPES:
            raise ConfigurationError(f"unknown section [{name}]", field=name,
                                     line=_line_of(text, name))
        cls = _SECTION_TYPES[name]
        known = {f.name: f for f in fields(cls)}
        defaults = cls()
        values = {}
        for key, raw in parser.items(name):
            where = f"{name}.{key}"
            if key not in known:
                raise ConfigurationError("unknown key", field=where, line=_line_of(text, name, key))
            try:
                values[key] = _parse_value(raw, getattr(defaults, key), str(known[key].type))
            except ValueError as exc:
                raise ConfigurationError(f"bad value {raw!r}: {exc}", field=where,
                                         line=_line_of(text, name, key)) from exc
        sections[name] = cls(**values)
    cfg = RunConfig(**sections)
    try:
        validate(cfg)
    except ConfigurationError as exc:
        if exc.field and "." in exc.field and exc.line is None:
            sec, key = exc.field.split(".", 1)
            raise ConfigurationError(str(exc).split(" (")[0], field=exc.field,
                                     line=_line_of(text, sec, key)) from exc
        raise
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def dump_config(cfg: RunConfig) -> str:
    out = []
    for name in _SECTION_TYPES:
        sec = getattr(cfg, name)
        out.append(f"[{name}]")
        defaults = type(sec)()
        for f in fields(sec):
            value = getattr(sec, f.name)
            # canonical text: an int given for a float field prints as a float
            if isinstance(getattr(defaults, f.name), float) and isinstance(value, int):
                value = float(value)
            out.append(f"{f.name} = {_format(value)}".rstrip())
        out.append("")
    return "\n".join(out)


def validate(cfg: RunConfig) -> None:
    """Build every component once so invalid values fail early, naming the field."""
    d = cfg.drive
    if d.duration_s < 0:
        raise ConfigurationError("duration must be >= 0", field="drive.duration_s")
    if d.trajectories < 1:
        raise ConfigurationError("need at least one trajectory", field="drive.trajectories")
    if d.seed < 0:
        raise ConfigurationError("seed must be >= 0", field="drive.seed")
    if d.lifetime_ns <= 0:
        raise ConfigurationError("lifetime must be positive", field="drive.lifetime_ns")
    c = cfg.correlator
    if c.tau_bin_ns <= 0 or c.tau_bins < 1 or c.spatial_bins < 1 or c.shards < 1:
        raise ConfigurationError("correlator bins must be positive", field="correlator")
    if cfg.fit.statistic not in STATISTICS:
        raise ConfigurationError(f"statistic must be one of {STATISTICS}", field="fit.statistic")
    checks = (
        ("drive", lambda: d.build()),
        ("detector", lambda: cfg.detector.build()),
        ("geometry", lambda: collective_modes(cfg.geometry.build())),
        ("fit", lambda: cfg.fit.build()),
        ("correlator", lambda: c.build(cfg.detector.build())),
    )
    for name, check in checks:
        try:
            check()
        except ConfigurationError as exc:
            field_name = f"{name}.{exc.field}" if exc.field and "." not in exc.field else (exc.field or name)
            raise ConfigurationError(str(exc).split(" (")[0], field=field_name) from exc
        except (DickeEmissionError, ValueError) as exc:
            raise ConfigurationError(str(exc), field=name) from exc
