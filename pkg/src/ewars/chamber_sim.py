"""
Synthetic leak-test chamber: scheduled leak areas, a flow-controller
calibration chain and a noisy 1 kHz pressure transducer.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .gas_dynamics import ATM, Chamber, DomainError, FlowStage, _stepper, exit_mass_flow, stage_of
from .search import MM2

STD_CONDITIONS = (ATM, 293.15)  # Pa, K


@dataclass(frozen=True)
class LeakScenario:
    segments: tuple  # ((start_time, area), ...)
    duration: float

    def __post_init__(self):
        segs = tuple((float(t), float(a)) for t, a in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs or segs[0][0] != 0.0:
            raise ValueError("a scenario starts with a segment at t = 0")
        starts = [t for t, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start times must be strictly increasing")
        if any(a < 0.0 for _, a in segs):
            raise ValueError("leak areas must be non-negative")
        if not self.duration > 0.0:
            raise ValueError("duration must be positive")

    @property
    def starts(self):
        return [t for t, _ in self.segments]

    def area_at(self, t: float) -> float:
        i = bisect.bisect_right(self.starts, t) - 1
        return self.segments[max(i, 0)][1]

    def areas_at(self, times) -> np.ndarray:
        starts = np.array(self.starts)
        areas = np.array([a for _, a in self.segments])
        i = np.searchsorted(starts, np.asarray(times), side="right") - 1
        return areas[np.clip(i, 0, None)]


@dataclass(frozen=True)
class SensorModel:
    sample_rate: float = 1000.0  # Hz
    noise_sigma: float = 100.0   # Pa
    seed: int = 0

    def __post_init__(self):
        if not self.sample_rate > 0.0:
            raise ValueError("sample_rate must be positive")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class CalibrationPolynomial:
    """Flow-controller command (V) to flow (slpm), lowest order coefficient first."""

    coefficients: tuple = (0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    valid_range: tuple = (0.0, 10.0)
    operating_range: tuple = field(default=(0.0, 6.0), repr=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if len(coeffs) != 7:
            raise ValueError(f"a sixth-order calibration needs 7 coefficients, got {len(coeffs)}")
        v = np.linspace(*self.operating_range, 2001)
        q = np.polynomial.polynomial.polyval(v, coeffs)
        if np.any(q < -1e-12) or np.any(np.diff(q) < -1e-12):
            raise ValueError("calibration must be non-negative and non-decreasing on 0-6 V")


def scenario_constant(area: float, duration: float) -> LeakScenario:
    return LeakScenario(((0.0, area),), duration)


def scenario_steps(areas: Sequence[float], step_duration: float) -> LeakScenario:
    """Piecewise-constant leak holding each area for `step_duration` seconds."""
    if not areas:
        raise ValueError("need at least one step")
    if not step_duration > 0.0:
        raise ValueError("step_duration must be positive")
    segments = tuple((i * step_duration, a) for i, a in enumerate(areas))
    return LeakScenario(segments, len(areas) * step_duration)


def volts_to_slpm(v: float, cal: CalibrationPolynomial = CalibrationPolynomial()) -> float:
    lo, hi = cal.valid_range
    if not lo <= v <= hi:
        raise DomainError(f"command {v} V outside [{lo}, {hi}] V")
    return float(np.polynomial.polynomial.polyval(v, cal.coefficients))


def slpm_to_area(q: float, p0: float, chamber: Chamber,
                 std_conditions: tuple = STD_CONDITIONS) -> float:
    """Leak area (m^2) that passes `q` slpm when the chamber sits at `p0`."""
    if q < 0.0:
        raise DomainError(f"flow must be non-negative, got {q}")
    if stage_of(p0, chamber.ambient, chamber.gas) is FlowStage.EQUALIZED:
        raise DomainError(f"no flow at {p0} Pa: chamber is not above ambient")
    p_std, t_std = std_conditions
    rho_std = p_std / (chamber.gas.r_specific * t_std)
    mdot = q * rho_std / 60000.0
    per_m2 = exit_mass_flow(p0, 1.0, chamber.initial, chamber.gas, chamber.ambient)
    return mdot / per_m2


def volts_to_area(v: float, chamber: Chamber, cal: CalibrationPolynomial = CalibrationPolynomial(),
                  std_conditions: tuple = STD_CONDITIONS) -> float:
    """Commanded controller voltage to equivalent leak area at the initial pressure."""
    return slpm_to_area(volts_to_slpm(v, cal), chamber.initial.p01, chamber, std_conditions)


@dataclass(frozen=True)
class SimulationResult:
    times: np.ndarray
    pressures: np.ndarray   # what the transducer reports
    truth: np.ndarray       # noise-free chamber pressure
    true_areas: np.ndarray  # scheduled leak area at each sample
    scenario: LeakScenario


def simulate(scenario: LeakScenario, sensor: SensorModel, chamber: Chamber,
             dt: float = 1e-3) -> SimulationResult:
    """
    Integrate the chamber through the scenario and sample it like the transducer.

    The integrator step is shortened, if needed, to divide the sample period
    evenly.  The leak area is read from the schedule at the start of every step.
    """
    period = 1.0 / sensor.sample_rate
    if dt > period * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the sample period {period}")
    substeps = max(1, math.ceil(period / dt - 1e-9))
    h = period / substeps
    n = int(math.ceil(scenario.duration / period - 1e-9))
    stepper = _stepper(chamber)

    starts = scenario.starts
    areas = [a for _, a in scenario.segments]
    p = chamber.initial.p01
    truth = [p]
    for k in range(n):
        for j in range(substeps):
            step = k * substeps + j
            t = step * h
            seg = bisect.bisect_right(starts, t + 1e-12 * h) - 1
            p = stepper.step(p, h, areas[seg])
        truth.append(p)
    times = np.arange(n + 1) * period
    truth = np.array(truth)
    noise = np.random.default_rng(sensor.seed).normal(0.0, sensor.noise_sigma, truth.size) \
        if sensor.noise_sigma > 0 else np.zeros(truth.size)
    return SimulationResult(times=times, pressures=truth + noise, truth=truth,
                            true_areas=scenario.areas_at(times), scenario=scenario)
