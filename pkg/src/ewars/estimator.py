"""
Streaming leak-area estimation by exponentially weighted adaptively refined search.

Each update compares the blowdown model against one decimated pressure
measurement for every candidate area, folds that squared residual into an
exponentially weighted objective, and refines the argmin of the weighted
objective down to a resolution of ``epsilon``.
"""

from __future__ import annotations

import enum
import logging
import math
import time as _time
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

import numpy as np

from ._replay import weighted_objective
from .gas_dynamics import Chamber, blowdown_table
from .search import MM2, SearchBounds, ew_update, refine

log = logging.getLogger(__name__)


class AnchorMode(enum.Enum):
    PREVIOUS = "previous"  # predict one update ahead from the last measurement
    INITIAL = "initial"    # predict from (0, p01)


class RefineStrategy(enum.Enum):
    REPLAY = "replay"
    INTERPOLATE = "interpolate"


class Decimation(enum.Enum):
    MEAN = "mean"        # block average of the samples in each update interval
    NEAREST = "nearest"  # last sample at or before each update time


@dataclass(frozen=True)
class EwarsConfig:
    alpha: float = 0.125
    epsilon: float = 5e-5 * MM2
    n_grid: int = 150
    bounds: SearchBounds = field(default_factory=SearchBounds)
    update_interval: float = 0.1
    anchor_mode: AnchorMode = AnchorMode.PREVIOUS
    refine_strategy: RefineStrategy = RefineStrategy.REPLAY
    weight_floor: float = 1e-9
    decimation: Decimation = Decimation.MEAN

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.n_grid < 3:
            raise ValueError(f"n_grid must be >= 3, got {self.n_grid}")
        if not 0.0 < self.weight_floor < 1.0:
            raise ValueError(f"weight_floor must lie in (0, 1), got {self.weight_floor}")
        if not self.update_interval > 0.0:
            raise ValueError(f"update_interval must be > 0, got {self.update_interval}")

    @classmethod
    def constant_leak(cls, **kw) -> "EwarsConfig":
        return cls(**{"n_grid": 150, "alpha": 0.125, **kw})

    @classmethod
    def variable_leak(cls, **kw) -> "EwarsConfig":
        return cls(**{"n_grid": 250, "alpha": 0.01, **kw})


@dataclass(frozen=True)
class MeasurementSample:
    time: float
    pressure: float


@dataclass
class SmoothedObjective:
    grid: np.ndarray
    s_values: np.ndarray | None = None
    last_update_time: float | None = None

    @property
    def spacing(self) -> float:
        return float(self.grid[1] - self.grid[0])


@dataclass(frozen=True)
class EstimateRecord:
    time: float
    area_estimate: float
    smoothed_objective_at_min: float
    evaluations: int
    refinement_levels: int
    predicted_pressure: float = math.nan
    measured_pressure: float = math.nan


def _anchor(prev: MeasurementSample | None, now_time: float, config: EwarsConfig,
            chamber: Chamber):
    """Start pressure and horizon of the model prediction for `now_time`."""
    if config.anchor_mode is AnchorMode.INITIAL:
        return chamber.initial.p01, now_time
    if not now_time > prev.time:
        raise ValueError(f"prediction time {now_time} does not follow anchor {prev.time}")
    p0 = prev.pressure
    if p0 < chamber.ambient.p_atm:
        log.warning("anchor pressure %.1f Pa below ambient at t=%.3f s; clamped",
                    p0, prev.time)
        p0 = chamber.ambient.p_atm
    return p0, now_time - prev.time


def model_pressure(a_e, prev: MeasurementSample | None, now_time: float,
                   config: EwarsConfig, chamber: Chamber):
    """Blowdown-model pressure at `now_time` for leak area(s) `a_e`."""
    p0, horizon = _anchor(prev, now_time, config, chamber)
    return blowdown_table(chamber).advance(p0, a_e, horizon)


def objective(a_e, prev: MeasurementSample | None, current: MeasurementSample,
              config: EwarsConfig, chamber: Chamber):
    """Squared residual between model and measured pressure."""
    return (model_pressure(a_e, prev, current.time, config, chamber) - current.pressure) ** 2


class _History:
    """
    Terms of the weighted objective kept for exact re-summation off the base grid.

    With S_0 = F_0 the smoothed objective after n updates is
    sum_k alpha (1 - alpha)^k F_{n-1-k} + (1 - alpha)^(n-1) F_0, so the first
    term is stored apart from the ring of recent ones.  Terms whose weight
    falls below `floor` are dropped.
    """

    def __init__(self, alpha: float, floor: float, width: int):
        self.alpha, self.floor = alpha, floor
        if alpha < floor:
            cap = 0
        elif alpha == 1.0:
            cap = 1
        else:
            cap = int(math.floor(math.log(floor / alpha) / math.log(1.0 - alpha))) + 1
        self.capacity = cap
        self.age_weights = alpha * (1.0 - alpha) ** np.arange(cap)
        self._ring = np.empty((cap, width))
        self.first = None
        self.count = 0

    def push(self, row):
        if self.count == 0:
            self.first = np.asarray(row, dtype=float)
        elif self.capacity:
            self._ring[(self.count - 1) % self.capacity] = row
        self.count += 1

    def recent(self):
        """Stored terms after the first one, newest first, with their weights."""
        m = min(self.capacity, self.count - 1)
        if m <= 0:
            return self._ring[:0], self.age_weights[:0]
        if m < self.capacity:
            return self._ring[m - 1::-1], self.age_weights[:m]
        newest = (self.count - 2) % self.capacity
        order = np.r_[newest:-1:-1, self.capacity - 1:newest:-1]
        return self._ring[order], self.age_weights

    def first_weight(self) -> float:
        w = (1.0 - self.alpha) ** (self.count - 1)
        return w if self.first is not None and w >= self.floor else 0.0


class EwarsEstimator:
    """
    Single-writer EWARS state machine fed with decimated measurements.

    The smoothed objective lives on a base grid of ``n_grid + 1`` areas that
    spans the full bounds at every update, so the estimate can jump when the
    leak changes.  Each update refines from the base-grid argmin; candidates
    off the base grid get their smoothed value by re-summing the stored
    weighted terms (Replay) or by linear interpolation of the base grid
    (Interpolate, which cannot resolve below the base spacing).
    """

    def __init__(self, config: EwarsConfig, chamber: Chamber):
        self.config = config
        self.chamber = chamber
        self.table = blowdown_table(chamber)
        self.state = SmoothedObjective(config.bounds.grid(config.n_grid))
        # each term: anchor position in table cells, cells per m^2 of area, offset
        self.history = _History(config.alpha, config.weight_floor, 3)
        self.prev: MeasurementSample | None = None

    def push(self, sample: MeasurementSample) -> EstimateRecord | None:
        """Feed one measurement; returns a record once an anchor sample exists."""
        if self.prev is not None and not sample.time > self.prev.time:
            log.warning("rejected out-of-order sample at t=%.6f s", sample.time)
            return None
        if self.prev is None:
            # the first sample anchors the next prediction and yields no estimate
            self.prev = sample
            return None
        record = self.step(self.prev, sample)
        self.prev = sample
        return record

    def _row(self, prev, current):
        """Residual term r(A) = Q(v0 + A * rate) + offset, Q in table cells."""
        p0, horizon = _anchor(prev, current.time, self.config, self.chamber)
        s0 = self.table.scaled_time(p0)
        v0 = self.table.cell_coordinate(s0)
        rate = horizon / self.table.a_ref * self.table._inv_ds
        offset = p0 - self.table.pressure(s0) - current.pressure
        return np.array([v0, rate, offset])

    def _terms_at(self, rows, areas):
        v = rows[:, 1:2] * areas[None, :]
        v += rows[:, 0:1]
        r = self.table._eval_cells(v)
        r += rows[:, 2:3]
        r *= r
        return r

    def _smoothed_at(self, areas):
        if self.config.refine_strategy is RefineStrategy.INTERPOLATE:
            return np.interp(areas, self.state.grid, self.state.s_values)
        rows, weights = self.history.recent()
        w0 = self.history.first_weight()
        if w0:
            rows = np.vstack([rows, self.history.first])
            weights = np.append(weights, w0)
        rows = np.ascontiguousarray(rows.T)
        return weighted_objective(rows[0], rows[1], rows[2], weights, areas, self.table._coef)

    def step(self, prev: MeasurementSample, current: MeasurementSample) -> EstimateRecord:
        cfg = self.config
        row = self._row(prev, current)
        grid = self.state.grid
        f_t = self._terms_at(row[None, :], grid)[0]
        if self.state.s_values is None:
            s_t = f_t
        else:
            s_t = ew_update(self.state.s_values, f_t, cfg.alpha)
        self.history.push(row)
        self.state = replace(self.state, s_values=s_t, last_update_time=current.time)

        j = int(np.argmin(s_t))
        a_star, best = float(grid[j]), float(s_t[j])
        a_ref, s_ref, evals, levels = refine(self._smoothed_at, a_star, self.state.spacing,
                                            cfg.bounds, cfg.n_grid, cfg.epsilon)
        if s_ref is not None:
            a_star, best = a_ref, s_ref
        predicted = current.pressure + (
            self.table._eval_cells(np.array([row[0] + row[1] * a_star]))[0] + row[2])
        return EstimateRecord(
            time=current.time, area_estimate=a_star, smoothed_objective_at_min=best,
            evaluations=grid.size + evals, refinement_levels=levels + 1,
            predicted_pressure=float(predicted), measured_pressure=current.pressure)


class Decimator:
    """
    Reduce a raw sample stream to one measurement per update interval.

    Update times sit on ``t_first + k * interval``; interval k collects the
    samples in ``(t_{k-1}, t_k]`` and the first sample forms interval 0 on its
    own.  MEAN emits the average time and pressure of each interval, NEAREST
    its last sample.
    """

    GAP_FACTOR = 10.0

    def __init__(self, interval: float, mode: Decimation = Decimation.MEAN):
        self.interval = interval
        self.mode = mode
        self._t0 = None
        self._last_time = None
        self._block = None
        self._times: list[float] = []
        self._pressures: list[float] = []

    def _index(self, t):
        return math.ceil((t - self._t0) / self.interval - 1e-9)

    def _emit(self):
        if not self._times:
            return None
        if self.mode is Decimation.MEAN:
            n = len(self._times)
            out = MeasurementSample(math.fsum(self._times) / n, math.fsum(self._pressures) / n)
        else:
            out = MeasurementSample(self._times[-1], self._pressures[-1])
        self._times, self._pressures = [], []
        return out

    def push(self, sample: MeasurementSample) -> MeasurementSample | None:
        t = sample.time
        if self._t0 is None:
            self._t0 = t
        elif not t > self._last_time:
            log.warning("rejected out-of-order sample at t=%.6f s", t)
            return None
        elif t - self._last_time > self.GAP_FACTOR * self.interval:
            log.warning("gap of %.3f s in measurement stream before t=%.3f s",
                        t - self._last_time, t)
        self._last_time = t
        block = self._index(t)
        out = self._emit() if block != self._block else None
        self._block = block
        self._times.append(t)
        self._pressures.append(sample.pressure)
        return out

    def flush(self) -> MeasurementSample | None:
        return self._emit()


def decimate(stream: Iterable[MeasurementSample], interval: float,
             mode: Decimation = Decimation.MEAN) -> Iterator[MeasurementSample]:
    dec = Decimator(interval, mode)
    for sample in stream:
        out = dec.push(sample)
        if out is not None:
            yield out
    out = dec.flush()
    if out is not None:
        yield out


def iter_ewars(stream: Iterable[MeasurementSample], config: EwarsConfig,
               chamber: Chamber) -> Iterator[EstimateRecord]:
    """Lazily estimate from a raw, time-ordered sample stream."""
    est = EwarsEstimator(config, chamber)
    for sample in decimate(stream, config.update_interval, config.decimation):
        record = est.push(sample)
        if record is not None:
            yield record


def run_ewars(stream: Iterable[MeasurementSample], config: EwarsConfig,
              chamber: Chamber) -> list[EstimateRecord]:
    return list(iter_ewars(stream, config, chamber))


@dataclass
class BenchReport:
    times: np.ndarray
    fbfs_estimates: np.ndarray
    ewars_estimates: np.ndarray
    evals_fbfs: int
    evals_ewars: int
    wall_fbfs: float
    wall_ewars: float
    n0_fbfs: int

    @property
    def eval_ratio(self) -> float:
        return self.evals_fbfs / self.evals_ewars

    @property
    def wall_ratio(self) -> float:
        return self.wall_fbfs / self.wall_ewars if self.wall_ewars > 0 else math.inf

    def summary(self) -> dict:
        return {
            "updates": int(self.times.size),
            "n0_fbfs": self.n0_fbfs,
            "evals_fbfs": self.evals_fbfs,
            "evals_ewars": self.evals_ewars,
            "eval_ratio": self.eval_ratio,
            "wall_fbfs_s": self.wall_fbfs,
            "wall_ewars_s": self.wall_ewars,
            "wall_ratio": self.wall_ratio,
        }


def resolution_matched_n0(config: EwarsConfig) -> int:
    return int(round(config.bounds.width / config.epsilon))


def bench_compare(stream: Iterable[MeasurementSample], config: EwarsConfig,
                  chamber: Chamber, n0_fbfs: int | None = None) -> BenchReport:
    """
    Run per-update full brute-force search and EWARS on the same decimated stream.

    The brute-force side has no memory (each update minimizes that update's
    squared residual alone) and searches a single grid of ``n0_fbfs + 1``
    points, by default matched to ``epsilon``.
    """
    if n0_fbfs is None:
        n0_fbfs = resolution_matched_n0(config)
    samples = list(decimate(stream, config.update_interval, config.decimation))

    t = _time.perf_counter()
    est = EwarsEstimator(config, chamber)
    records = []
    for s in samples:
        r = est.push(s)
        if r is not None:
            records.append(r)
    wall_ewars = _time.perf_counter() - t

    t = _time.perf_counter()
    fine = config.bounds.grid(n0_fbfs)
    memoryless = EwarsEstimator(replace(config, alpha=1.0), chamber)
    fbfs = []
    prev = None
    for s in samples:
        if prev is not None and s.time > prev.time:
            row = memoryless._row(prev, s)
            values = memoryless._terms_at(row[None, :], fine)[0]
            fbfs.append(fine[int(np.argmin(values))])
        if prev is None or s.time > prev.time:
            prev = s
    wall_fbfs = _time.perf_counter() - t

    return BenchReport(
        times=np.array([r.time for r in records]),
        fbfs_estimates=np.array(fbfs),
        ewars_estimates=np.array([r.area_estimate for r in records]),
        evals_fbfs=len(fbfs) * fine.size,
        evals_ewars=sum(r.evaluations for r in records),
        wall_fbfs=wall_fbfs, wall_ewars=wall_ewars, n0_fbfs=n0_fbfs)
