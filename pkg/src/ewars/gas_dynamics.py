"""
Lumped isentropic blowdown of a pressurized chamber through a small orifice.

The chamber pressure is spatially uniform, the gas is ideal and no heat is
exchanged with the walls.  Exit flow is choked (Stage-I) while the chamber
pressure is above the critical ratio times ambient, and subsonic (Stage-II)
below it.  All quantities are SI: Pa, K, kg, m^2, m^3, s.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

ATM = 101325.0  # Pa

#: Default integrator step, one step per sample of a 1 kHz pressure sensor.
DEFAULT_DT = 1e-3


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


@dataclass(frozen=True)
class GasModel:
    gamma: float = 1.4
    r_specific: float = 287.0  # J/(kg K)

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise DomainError(f"gamma must be > 1, got {self.gamma}")
        if not self.r_specific > 0.0:
            raise DomainError(f"r_specific must be > 0, got {self.r_specific}")

    @property
    def choking_ratio(self) -> float:
        """Chamber-to-ambient pressure ratio at which the exit becomes sonic."""
        g = self.gamma
        return ((g + 1.0) / 2.0) ** (g / (g - 1.0))


@dataclass(frozen=True)
class AmbientConditions:
    p_atm: float = ATM

    def __post_init__(self):
        if not self.p_atm > 0.0:
            raise DomainError(f"p_atm must be > 0, got {self.p_atm}")


@dataclass(frozen=True)
class ChamberGeometry:
    volume: float = 0.128  # m^3, 0.8 x 0.4 x 0.4 m nominal

    def __post_init__(self):
        if not self.volume > 0.0:
            raise DomainError(f"volume must be > 0, got {self.volume}")


@dataclass(frozen=True)
class InitialState:
    """Thermodynamic state of the chamber when the leak opens."""

    p01: float
    t01: float
    rho01: float
    a01: float

    @classmethod
    def from_pt(cls, p01: float, t01: float, gas: GasModel = GasModel()) -> "InitialState":
        rho01 = density_from_ideal_gas(p01, t01, gas)
        a01 = math.sqrt(gas.gamma * gas.r_specific * t01)
        return cls(p01=p01, t01=t01, rho01=rho01, a01=a01)


class FlowStage(enum.Enum):
    CHOKED = "choked"        # Stage-I, sonic exit
    UNCHOKED = "unchoked"    # Stage-II, subsonic exit at ambient pressure
    EQUALIZED = "equalized"  # no driving pressure difference


@dataclass(frozen=True)
class StageCoefficients:
    c_one: float  # Stage-I: dp/dt = c_one * p^((3g-1)/(2g))
    c_two: float  # Stage-II, 1/s, acts on p / p_atm


@dataclass(frozen=True)
class PressureTrajectory:
    times: np.ndarray
    pressures: np.ndarray
    leak_area: float

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class Chamber:
    """Everything the blowdown model needs besides the leak area."""

    gas: GasModel
    ambient: AmbientConditions
    geometry: ChamberGeometry
    initial: InitialState

    def __post_init__(self):
        init, gas = self.initial, self.gas
        if not init.p01 > self.ambient.p_atm:
            raise DomainError(
                f"initial pressure {init.p01} Pa must exceed ambient {self.ambient.p_atm} Pa")
        if not init.t01 > 0.0:
            raise DomainError(f"initial temperature must be > 0, got {init.t01}")
        rho = init.p01 / (gas.r_specific * init.t01)
        if abs(init.rho01 - rho) > 1e-12 * rho:
            raise DomainError("rho01 is inconsistent with the ideal gas law")
        a = math.sqrt(gas.gamma * gas.r_specific * init.t01)
        if abs(init.a01 - a) > 1e-12 * a:
            raise DomainError("a01 is inconsistent with the initial temperature")

    @classmethod
    def standard(cls, p01: float = 2 * ATM, t01: float = 300.0, volume: float = 0.128,
                 p_atm: float = ATM, gamma: float = 1.4, r_specific: float = 287.0) -> "Chamber":
        gas = GasModel(gamma, r_specific)
        return cls(gas=gas, ambient=AmbientConditions(p_atm),
                   geometry=ChamberGeometry(volume),
                   initial=InitialState.from_pt(p01, t01, gas))

    @property
    def critical_pressure(self) -> float:
        """Chamber pressure separating choked from unchoked exit flow."""
        return self.gas.choking_ratio * self.ambient.p_atm

    @cached_property
    def unit_coefficients(self) -> StageCoefficients:
        """Stage coefficients per square metre of leak area."""
        return stage_coefficients(1.0, self.geometry, self.initial, self.gas, self.ambient)


def density_from_ideal_gas(p: float, t: float, gas: GasModel) -> float:
    if not (p > 0.0 and t > 0.0):
        raise DomainError(f"pressure and temperature must be positive, got p={p}, t={t}")
    return p / (gas.r_specific * t)


def stage_of(p0: float, ambient: AmbientConditions, gas: GasModel) -> FlowStage:
    if not p0 > 0.0:
        raise DomainError(f"pressure must be positive, got {p0}")
    if p0 <= ambient.p_atm:
        return FlowStage.EQUALIZED
    if p0 >= gas.choking_ratio * ambient.p_atm:
        return FlowStage.CHOKED
    return FlowStage.UNCHOKED


def stage_coefficients(a_e: float, geom: ChamberGeometry, init: InitialState,
                       gas: GasModel, ambient: AmbientConditions) -> StageCoefficients:
    """Constants of the governing pressure ODE for leak area `a_e` (m^2)."""
    if a_e < 0.0:
        raise DomainError(f"leak area must be non-negative, got {a_e}")
    g = gas.gamma
    scale = -g * a_e / geom.volume
    c_one = (scale * (2.0 / (g + 1.0)) ** (1.0 / (g - 1.0))
             * math.sqrt(2.0 * g * init.p01 ** (1.0 / g) / ((g + 1.0) * init.rho01)))
    c_two = (scale * math.sqrt(2.0 / (g - 1.0)) * init.a01
             * (ambient.p_atm / init.p01) ** ((g - 1.0) / (2.0 * g)))
    return StageCoefficients(c_one, c_two)


def exit_mass_flow(p0: float, a_e: float, init: InitialState, gas: GasModel,
                   ambient: AmbientConditions, tol: float = 1e-6) -> float:
    """
    Mass flow (kg/s) leaving through the orifice at chamber pressure `p0`.

    The chamber density follows the isentrope through (p01, rho01).
    """
    if a_e < 0.0:
        raise DomainError(f"leak area must be non-negative, got {a_e}")
    if not ambient.p_atm * (1.0 - tol) <= p0 <= init.p01 * (1.0 + tol):
        raise DomainError(f"pressure {p0} Pa outside [{ambient.p_atm}, {init.p01}]")
    g = gas.gamma
    p01, rho01, pa = init.p01, init.rho01, ambient.p_atm
    stage = stage_of(p0, ambient, gas)
    if stage is FlowStage.CHOKED:
        return (rho01 / p01 ** (1.0 / g) * (2.0 / (g + 1.0)) ** (1.0 / (g - 1.0)) * a_e
                * math.sqrt(2.0 * g * p01 ** (1.0 / g) / ((g + 1.0) * rho01))
                * p0 ** ((g + 1.0) / (2.0 * g)))
    if stage is FlowStage.UNCHOKED:
        rho0 = rho01 * (p0 / p01) ** (1.0 / g)
        radicand = 2.0 * g / (g - 1.0) * p0 / rho0 * (1.0 - (pa / p0) ** ((g - 1.0) / g))
        return rho01 * (pa / p01) ** (1.0 / g) * a_e * math.sqrt(max(radicand, 0.0))
    return 0.0


def dp0_dt(p0: float, coeffs: StageCoefficients, stage: FlowStage,
           ambient: AmbientConditions, gas: GasModel) -> float:
    """Rate of change of chamber pressure in Pa/s for the given flow stage."""
    g = gas.gamma
    if stage is FlowStage.CHOKED:
        return coeffs.c_one * p0 ** ((3.0 * g - 1.0) / (2.0 * g))
    if stage is FlowStage.UNCHOKED:
        x = (p0 / ambient.p_atm) ** ((g - 1.0) / g)
        if x <= 1.0:
            return 0.0
        return ambient.p_atm * coeffs.c_two * x * math.sqrt(x - 1.0)
    return 0.0


class _Stepper:
    """Scalar RK4 stepper with the chamber constants hoisted out of the loop."""

    def __init__(self, chamber: Chamber):
        g = chamber.gas.gamma
        self.p_atm = chamber.ambient.p_atm
        self.p_star = chamber.critical_pressure
        self.m = (3.0 * g - 1.0) / (2.0 * g)
        self.k = (g - 1.0) / g
        unit = chamber.unit_coefficients
        self.c1 = unit.c_one
        self.c2 = unit.c_two

    def stage(self, p):
        if p <= self.p_atm:
            return FlowStage.EQUALIZED
        if p >= self.p_star:
            return FlowStage.CHOKED
        return FlowStage.UNCHOKED

    def slope(self, p, stage, a_e):
        if stage is FlowStage.CHOKED:
            return a_e * self.c1 * p ** self.m
        if stage is FlowStage.UNCHOKED:
            x = (p / self.p_atm) ** self.k
            if x <= 1.0:
                return 0.0
            return self.p_atm * (a_e * self.c2) * x * math.sqrt(x - 1.0)
        return 0.0

    def raw_step(self, p, dt, a_e):
        # stage is frozen at the start pressure for all four slopes
        stage = self.stage(p)
        if stage is FlowStage.EQUALIZED or a_e == 0.0:
            return p
        f = self.slope
        k1 = f(p, stage, a_e)
        k2 = f(p + 0.5 * dt * k1, stage, a_e)
        k3 = f(p + 0.5 * dt * k2, stage, a_e)
        k4 = f(p + dt * k3, stage, a_e)
        return p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def step(self, p, dt, a_e):
        p_new = self.raw_step(p, dt, a_e)
        return p_new if p_new > self.p_atm else self.p_atm


@lru_cache(maxsize=32)
def _stepper(chamber: Chamber) -> _Stepper:
    return _Stepper(chamber)


def rk4_step(p0: float, dt: float, a_e: float, chamber: Chamber) -> float:
    """Advance the chamber pressure by one classical RK4 step of length `dt`."""
    if not dt > 0.0:
        raise DomainError(f"dt must be > 0, got {dt}")
    if a_e < 0.0:
        raise DomainError(f"leak area must be non-negative, got {a_e}")
    return _stepper(chamber).step(p0, dt, a_e)


def integrate_trajectory(a_e: float, t_end: float, chamber: Chamber,
                         dt: float = DEFAULT_DT) -> PressureTrajectory:
    """Pressure history from (0, p01) to `t_end` with a constant leak area."""
    if not (t_end > 0.0 and dt > 0.0):
        raise DomainError("t_end and dt must be positive")
    if a_e < 0.0:
        raise DomainError(f"leak area must be non-negative, got {a_e}")
    n = int(math.ceil(t_end / dt - 1e-9))
    stepper = _stepper(chamber)
    p = chamber.initial.p01
    out = [p]
    for _ in range(n):
        p = stepper.step(p, dt, a_e)
        out.append(p)
    return PressureTrajectory(np.arange(n + 1) * dt, np.array(out), a_e)


def analytic_stage1(t, init: InitialState, c_one: float, gas: GasModel = GasModel(),
                    ambient: AmbientConditions | None = None):
    """
    Closed-form Stage-I pressure for gamma = 1.4, where dp/dt = c_one * p^(8/7).

    If `ambient` is given, times at which the solution has dropped below the
    critical pressure raise a DomainError.
    """
    if abs(gas.gamma - 1.4) > 1e-12:
        raise DomainError("the closed-form Stage-I solution assumes gamma = 1.4")
    t = np.asarray(t, dtype=float)
    p = (init.p01 ** (-1.0 / 7.0) - c_one / 7.0 * t) ** -7.0
    if ambient is not None and np.any(p < gas.choking_ratio * ambient.p_atm):
        raise DomainError("time lies beyond the choked-flow window")
    return float(p) if p.ndim == 0 else p


class UnitAreaBlowdown:
    """
    Blowdown curve of a chamber through a reference orifice, tabulated in scaled time.

    The pressure rate is proportional to the leak area, so a chamber leaking
    through area A for a time t lands where the reference curve is at scaled
    time s = (A / a_ref) * t.  One RK4 table therefore answers "where does
    pressure p go after time t through area A" for any A, which is what the
    estimator needs for thousands of candidate areas per update.

    The table runs from a little above p01 (negative s, for noisy anchors) down
    to equalization at `s_eq`; cubic Hermite interpolation uses the exact ODE
    slope at each node.
    """

    def __init__(self, chamber: Chamber, a_ref: float = 1e-6, ds: float = 0.01,
                 headroom: float = 0.1):
        self.chamber = chamber
        self.a_ref = a_ref
        self.ds = ds
        stepper = _Stepper(chamber)
        p_atm = stepper.p_atm
        p01 = chamber.initial.p01

        up = [p01]
        p_top = p01 * (1.0 + headroom)
        while up[-1] < p_top:
            up.append(stepper.raw_step(up[-1], -ds, a_ref))
        down = [p01]
        while down[-1] > p_atm:
            down.append(stepper.step(down[-1], ds, a_ref))
            if len(down) > 50_000_000:
                raise RuntimeError("blowdown table did not reach ambient pressure")

        self.p = np.array(up[:0:-1] + down)
        self.s0 = -(len(up) - 1) * ds
        self.s = self.s0 + np.arange(len(self.p)) * ds
        self.s_eq = self.s[-1]
        self.slope = np.array([stepper.slope(p, stepper.stage(p), a_ref) for p in self.p])
        self.p_max = self.p[0]
        self.p_atm = p_atm
        self._neg_p = -self.p

        # per-cell cubic in u = (s - s_i) / ds; one flat cell past s_eq
        p0, p1 = self.p, np.append(self.p[1:], p_atm)
        m0 = self.slope * ds
        m1 = np.append(self.slope[1:], 0.0) * ds
        self._coef = np.stack([p0, m0, -3 * p0 - 2 * m0 + 3 * p1 - m1,
                               2 * p0 + m0 - 2 * p1 + m1], axis=1)
        self._c = [np.ascontiguousarray(self._coef[:, k]) for k in range(4)]
        self._inv_ds = 1.0 / ds

    def _eval(self, s):
        return self._eval_cells((s - self.s0) * self._inv_ds)

    def cell_coordinate(self, s):
        """Scaled time expressed in table cells, the argument of `_eval_cells`."""
        return (s - self.s0) * self._inv_ds

    def _eval_cells(self, v):
        i = v.astype(np.int64)
        np.clip(i, 0, len(self._coef) - 1, out=i)
        u = v - i
        np.minimum(u, 1.0, out=u)
        c0, c1, c2, c3 = self._c
        out = c3.take(i)
        out *= u
        out += c2.take(i)
        out *= u
        out += c1.take(i)
        out *= u
        out += c0.take(i)
        return out

    def pressure(self, s):
        """Reference-curve pressure at scaled time `s` (array-valued)."""
        s = np.asarray(s, dtype=float)
        if s.size and s.min() < self.s0:
            raise DomainError("scaled time precedes the tabulated range")
        out = self._eval(np.atleast_1d(s))
        return out.reshape(s.shape) if s.ndim else float(out[0])

    def scaled_time(self, p):
        """Inverse of `pressure`: the scaled time at which the curve passes `p`."""
        p = np.asarray(p, dtype=float)
        if np.any(p > self.p_max):
            raise DomainError(f"pressure above the tabulated range ({self.p_max:.1f} Pa)")
        pc = np.atleast_1d(np.maximum(p, self.p_atm))
        i = np.searchsorted(self._neg_p, -pc, side="right") - 1
        i = np.clip(i, 0, len(self.p) - 2)
        c = self._coef[i]
        lo, hi = self.p[i], self.p[i + 1]
        span = np.where(lo > hi, lo - hi, 1.0)
        u = np.where(lo > hi, (lo - pc) / span, 0.0)
        for _ in range(4):
            val = c[:, 0] + u * (c[:, 1] + u * (c[:, 2] + u * c[:, 3]))
            d = c[:, 1] + u * (2 * c[:, 2] + 3 * u * c[:, 3])
            step = np.where(d != 0.0, (val - pc) / np.where(d != 0.0, d, -1.0), 0.0)
            u = np.clip(u - step, 0.0, 1.0)
        s = np.where(pc <= self.p_atm, self.s_eq, self.s[i] + u * self.ds)
        return s.reshape(p.shape) if p.ndim else float(s[0])

    def advance(self, p0, a_e, dt):
        """Pressure after `dt` seconds from `p0` through leak area `a_e` (broadcasts)."""
        s0 = self.scaled_time(p0)
        return self.advance_from(np.asarray(p0, dtype=float), s0, self.pressure(s0), a_e, dt)

    def advance_from(self, p0, s0, q0, a_e, dt):
        # p0 + (Q(s0 + a dt / a_ref) - Q(s0)) cancels the inversion error of s0
        return p0 + (self.pressure(s0 + (np.asarray(a_e) / self.a_ref) * dt) - q0)


@lru_cache(maxsize=16)
def blowdown_table(chamber: Chamber) -> UnitAreaBlowdown:
    return UnitAreaBlowdown(chamber)
