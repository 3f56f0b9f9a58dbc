"""
CSV measurement ingestion, estimate emission and the live two-stage pipeline.

Measurement CSV: header ``time_s,pressure_pa`` (or ``time_s,pressure_atm``),
one sample per row, UTF-8, LF line endings.  Floats are written with ``repr``
so a write/read cycle reproduces samples bit for bit.
"""

from __future__ import annotations

import logging
import math
import queue
import threading
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .chamber_sim import LeakScenario
from .estimator import EstimateRecord, MeasurementSample
from .gas_dynamics import ATM
from .search import MM2

log = logging.getLogger(__name__)

MEASUREMENT_HEADERS = {"time_s,pressure_pa": 1.0, "time_s,pressure_atm": ATM}
ESTIMATE_HEADER = "time_s,area_mm2_est,area_mm2_true,evals,smoothed_obj"


class DataError(ValueError):
    """Input data violates the measurement CSV contract."""


def write_measurements(out: IO[str], times: Sequence[float], pressures: Sequence[float],
                       unit: str = "pa") -> None:
    scale = ATM if unit == "atm" else 1.0
    out.write(f"time_s,pressure_{unit}\n")
    for t, p in zip(times, pressures):
        out.write(f"{float(t)!r},{float(p) / scale!r}\n")


def parse_measurements(lines: Iterable[str], strict: bool = False,
                       source: str = "<input>") -> Iterator[MeasurementSample]:
    """
    Parse measurement CSV lines into a time-ordered sample stream.

    Malformed rows are skipped with a warning, or raise DataError when
    `strict`.  Rows whose time does not advance are dropped with a warning.
    """
    it = iter(lines)
    header = None
    lineno = 0
    for lineno, line in enumerate(it, 1):
        header = line.strip().lstrip("﻿")
        if header:
            break
    if not header:
        return
    scale = MEASUREMENT_HEADERS.get(header.replace(" ", ""))
    if scale is None:
        raise DataError(f"{source}:{lineno}: expected header 'time_s,pressure_pa' "
                        f"or 'time_s,pressure_atm', got {header!r}")
    last = -math.inf
    for lineno, line in enumerate(it, lineno + 1):
        line = line.strip()
        if not line:
            continue
        try:
            t_raw, p_raw = line.split(",")
            t, p = float(t_raw), float(p_raw) * scale
            if not (math.isfinite(t) and math.isfinite(p) and p > 0.0):
                raise ValueError
        except ValueError:
            msg = f"{source}:{lineno}: malformed row {line!r}"
            if strict:
                raise DataError(msg) from None
            log.warning("%s; skipped", msg)
            continue
        if not t > last:
            log.warning("%s:%d: time %r does not advance past %r; row rejected",
                        source, lineno, t, last)
            continue
        last = t
        yield MeasurementSample(t, p)


def ingest_measurements(source, strict: bool = False) -> Iterator[MeasurementSample]:
    """Samples from a CSV path or an open text stream (such as stdin)."""
    if hasattr(source, "read"):
        yield from parse_measurements(source, strict, getattr(source, "name", "<stream>"))
        return
    with open(source, encoding="utf-8", newline="") as fh:
        yield from parse_measurements(fh, strict, str(source))


_DONE = object()


def bounded_pipeline(produce: Iterable, maxsize: int = 1024) -> Iterator:
    """
    Run `produce` in a producer thread behind a bounded queue.

    A full queue blocks the producer.  Items come out in production order, and
    an exception raised by the producer is re-raised in the consumer.
    """
    q: queue.Queue = queue.Queue(maxsize)
    stop = threading.Event()

    def run():
        try:
            for item in produce:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            q.put(_DONE)
        except BaseException as exc:  # handed to the consumer
            q.put(exc)

    worker = threading.Thread(target=run, name="ewars-ingest", daemon=True)
    worker.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                break
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        worker.join(timeout=1.0)


def estimate_row(record: EstimateRecord, truth: LeakScenario | None = None) -> str:
    true_area = "" if truth is None else f"{truth.area_at(record.time) / MM2:.6g}"
    return (f"{record.time:.6f},{record.area_estimate / MM2:.6g},{true_area},"
            f"{record.evaluations},{record.smoothed_objective_at_min:.6e}")


def write_estimates(out: IO[str], records: Iterable[EstimateRecord],
                    truth: LeakScenario | None = None) -> list[EstimateRecord]:
    """Write rows as records arrive, flushing each one; returns the records."""
    out.write(ESTIMATE_HEADER + "\n")
    out.flush()
    kept = []
    for r in records:
        out.write(estimate_row(r, truth) + "\n")
        out.flush()
        kept.append(r)
    return kept


def convergence_time(times, estimates, tol: float = 0.02):
    """First time after which every estimate stays within `tol` of the final one."""
    estimates = np.asarray(estimates, dtype=float)
    if estimates.size == 0:
        return None
    final = estimates[-1]
    outside = np.abs(estimates - final) > tol * abs(final)
    if not outside.any():
        return float(times[0])
    last_out = int(np.flatnonzero(outside)[-1])
    return float(times[last_out + 1])


def summarize(records: Sequence[EstimateRecord], truth: LeakScenario | None = None) -> dict:
    """
    Run summary.

    The pressure residual compares, at every update, the model pressure at
    that update's converged estimate with the measured pressure.
    """
    if not records:
        return {"updates": 0, "final_estimate_mm2": None, "convergence_time_s": None,
                "evaluations_total": 0, "mean_abs_pct_pressure_residual": None}
    times = np.array([r.time for r in records])
    est = np.array([r.area_estimate for r in records])
    pred = np.array([r.predicted_pressure for r in records])
    meas = np.array([r.measured_pressure for r in records])
    out = {
        "updates": len(records),
        "final_estimate_mm2": float(est[-1] / MM2),
        "convergence_time_s": convergence_time(times, est),
        "evaluations_total": int(sum(r.evaluations for r in records)),
        "evaluations_per_update": float(np.mean([r.evaluations for r in records])),
        "mean_abs_pct_pressure_residual": float(np.mean(np.abs(pred - meas) / meas) * 100),
    }
    if truth is not None:
        true_areas = truth.areas_at(times)
        nz = true_areas > 0
        out["final_true_mm2"] = float(true_areas[-1] / MM2)
        out["mean_abs_pct_area_error"] = (
            float(np.mean(np.abs(est[nz] - true_areas[nz]) / true_areas[nz]) * 100)
            if nz.any() else None)
    return out
