"""
Run configuration: a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored.  Unit suffixes are part of the
key names.  Unknown keys are rejected so typos cannot silently fall back to
defaults.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .chamber_sim import (CalibrationPolynomial, LeakScenario, SensorModel, scenario_constant,
                          scenario_steps, volts_to_area)
from .estimator import AnchorMode, Decimation, EwarsConfig, RefineStrategy
from .gas_dynamics import ATM, Chamber, DomainError
from .search import MM2, SearchBounds

PRESETS = {
    "constant": {"n_grid": 150, "alpha": 0.125},
    "variable": {"n_grid": 250, "alpha": 0.01},
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class RunConfig:
    # chamber
    gamma: float = 1.4
    r_specific: float = 287.0
    p_atm_pa: float = ATM
    p01_pa: float = 2 * ATM
    t01_k: float = 300.0
    volume_m3: float = 0.128
    # estimator
    preset: str = "constant"
    alpha: float = 0.125
    n_grid: int = 150
    epsilon_mm2: float = 5e-5
    a_lb_mm2: float = 1e-3
    a_ub_mm2: float = 1.0
    update_interval_s: float = 0.1
    anchor: str = "previous"
    refine: str = "replay"
    weight_floor: float = 1e-9
    decimation: str = "mean"
    n0_fbfs: int = 0
    # scenario
    leak_mm2: float = 0.22
    leak_volts: float | None = None
    steps_mm2: tuple | None = None
    step_duration_s: float = 180.0
    duration_s: float = 300.0
    scenario_file: str | None = None
    calibration_file: str | None = None
    std_pressure_pa: float = ATM
    std_temperature_k: float = 293.15
    # sensor
    sample_rate_hz: float = 1000.0
    noise_sigma_pa: float = 100.0
    seed: int = 0
    dt_s: float = 1e-3
    # io
    input: str | None = None
    truth_file: str | None = None
    out: str | None = None
    pressure_unit: str = "pa"
    strict: bool = False

    def __post_init__(self):
        positive = ["gamma", "r_specific", "p_atm_pa", "p01_pa", "t01_k", "volume_m3",
                    "epsilon_mm2", "a_lb_mm2", "a_ub_mm2", "update_interval_s", "step_duration_s",
                    "duration_s", "std_pressure_pa", "std_temperature_k", "sample_rate_hz", "dt_s"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {self.preset!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n_grid < 3:
            raise ConfigError(f"n_grid must be >= 3, got {self.n_grid}")
        if not self.a_lb_mm2 < self.a_ub_mm2:
            raise ConfigError("a_lb_mm2 must be below a_ub_mm2")
        if not 0.0 < self.weight_floor < 1.0:
            raise ConfigError("weight_floor must lie in (0, 1)")
        if self.leak_mm2 < 0 or self.noise_sigma_pa < 0 or self.n0_fbfs < 0:
            raise ConfigError("leak_mm2, noise_sigma_pa and n0_fbfs must be non-negative")
        if self.steps_mm2 is not None and (not self.steps_mm2 or min(self.steps_mm2) < 0):
            raise ConfigError("steps_mm2 needs at least one non-negative area")
        if not self.p01_pa > self.p_atm_pa:
            raise ConfigError("p01_pa must exceed p_atm_pa")
        for name, enum_type in (("anchor", AnchorMode), ("refine", RefineStrategy),
                                ("decimation", Decimation)):
            allowed = [m.value for m in enum_type]
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.pressure_unit not in ("pa", "atm"):
            raise ConfigError(f"pressure_unit must be 'pa' or 'atm', got {self.pressure_unit!r}")
        for name in ("scenario_file", "calibration_file", "truth_file"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name} {path!r} does not exist")
        if self.input not in (None, "-") and not Path(self.input).is_file():
            raise ConfigError(f"input {self.input!r} does not exist")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def chamber(self) -> Chamber:
        try:
            return Chamber.standard(p01=self.p01_pa, t01=self.t01_k, volume=self.volume_m3,
                                    p_atm=self.p_atm_pa, gamma=self.gamma,
                                    r_specific=self.r_specific)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def ewars_config(self) -> EwarsConfig:
        return EwarsConfig(
            alpha=self.alpha, epsilon=self.epsilon_mm2 * MM2, n_grid=self.n_grid,
            bounds=SearchBounds(self.a_lb_mm2 * MM2, self.a_ub_mm2 * MM2),
            update_interval=self.update_interval_s, anchor_mode=AnchorMode(self.anchor),
            refine_strategy=RefineStrategy(self.refine), weight_floor=self.weight_floor,
            decimation=Decimation(self.decimation))

    def sensor(self) -> SensorModel:
        return SensorModel(self.sample_rate_hz, self.noise_sigma_pa, self.seed)

    def calibration(self) -> CalibrationPolynomial:
        if self.calibration_file is None:
            return CalibrationPolynomial()
        return load_calibration(self.calibration_file)

    def scenario(self) -> LeakScenario:
        chamber = self.chamber()
        std = (self.std_pressure_pa, self.std_temperature_k)
        if self.scenario_file is not None:
            return load_scenario(self.scenario_file, self.duration_s, chamber,
                                 self.calibration(), std)
        if self.steps_mm2 is not None:
            return scenario_steps([a * MM2 for a in self.steps_mm2], self.step_duration_s)
        if self.leak_volts is not None:
            return scenario_constant(volts_to_area(self.leak_volts, chamber, self.calibration(), std),
                                     self.duration_s)
        return scenario_constant(self.leak_mm2 * MM2, self.duration_s)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_BOOLS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(name: str, raw: str):
    kind = _FIELDS[name].type
    if name == "steps_mm2":
        return tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())
    if kind == "bool":
        if raw.lower() not in _BOOLS:
            raise ValueError(f"expected true/false, got {raw!r}")
        return _BOOLS[raw.lower()]
    if kind == "int":
        return int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def parse_config(text: str, source: str | None = None, base: RunConfig | None = None) -> RunConfig:
    values: dict = {}
    lines: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, source)
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno, source)
        try:
            values[key] = _convert(key, raw.strip("\"'"))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, source) from None
        lines[key] = lineno
    return build_config(values, lines, source, base)


def build_config(values: dict, lines: dict | None = None, source: str | None = None,
                 base: RunConfig | None = None) -> RunConfig:
    """Apply preset defaults, then explicit values, and validate."""
    lines = lines or {}
    merged = dict(PRESETS.get(values.get("preset", "constant"), {}))
    merged.update(values)
    try:
        return dataclasses.replace(base or RunConfig(), **merged)
    except ConfigError as exc:
        # point at the offending line when the message names a key
        for key, lineno in lines.items():
            if str(exc).startswith(key):
                raise ConfigError(str(exc), lineno, source) from None
        raise ConfigError(str(exc), None, source) from None


def load_config(path: str | os.PathLike | None) -> RunConfig:
    """Read a config file; ``None`` falls back to $EWARS_CONFIG, then to defaults."""
    if path is None:
        path = os.environ.get("EWARS_CONFIG")
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config(text, str(path))


def _data_lines(path):
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_calibration(path) -> CalibrationPolynomial:
    """Seven volts-to-slpm coefficients, constant term first, comma or space separated."""
    coeffs = []
    for lineno, line in _data_lines(path):
        try:
            coeffs.extend(float(x) for x in line.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"non-numeric coefficient in {line!r}", lineno, str(path)) from None
    try:
        return CalibrationPolynomial(tuple(coeffs))
    except ValueError as exc:
        raise ConfigError(str(exc), None, str(path)) from None


def load_scenario(path, duration: float, chamber: Chamber | None = None,
                  cal: CalibrationPolynomial | None = None, std=None) -> LeakScenario:
    """
    Leak schedule CSV with header ``start_s,area_mm2`` or ``start_s,volts``.

    Voltage schedules go through the calibration chain at the initial pressure.
    """
    rows = list(_data_lines(path))
    if not rows:
        raise ConfigError("empty scenario file", None, str(path))
    header = [h.strip() for h in rows[0][1].split(",")]
    if header not in (["start_s", "area_mm2"], ["start_s", "volts"]):
        raise ConfigError("scenario header must be 'start_s,area_mm2' or 'start_s,volts'",
                          rows[0][0], str(path))
    segments = []
    for lineno, line in rows[1:]:
        try:
            start, value = (float(x) for x in line.split(","))
        except ValueError:
            raise ConfigError(f"malformed scenario row {line!r}", lineno, str(path)) from None
        if header[1] == "volts":
            chamber = chamber or Chamber.standard()
            kw = {} if std is None else {"std_conditions": std}
            area = volts_to_area(value, chamber, cal or CalibrationPolynomial(), **kw)
        else:
            area = value * MM2
        segments.append((start, area))
    try:
        return LeakScenario(tuple(segments), duration)
    except ValueError as exc:
        raise ConfigError(str(exc), None, str(path)) from None


def write_scenario(scenario: LeakScenario, path) -> None:
    lines = ["start_s,area_mm2"]
    lines += [f"{start!r},{area / MM2!r}" for start, area in scenario.segments]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
