import io
import logging
import threading
import time

import numpy as np
import pytest

from ewars.chamber_sim import SensorModel, scenario_constant, simulate
from ewars.estimator import EstimateRecord, MeasurementSample
from ewars.gas_dynamics import ATM, Chamber
from ewars.search import MM2
from ewars.streams import (ESTIMATE_HEADER, DataError, bounded_pipeline, convergence_time,
                           ingest_measurements, parse_measurements, summarize, write_estimates,
                           write_measurements)


def test_two_row_file(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("time_s,pressure_pa\n0,202650\n0.001,202649.9\n")
    assert list(ingest_measurements(path)) == [MeasurementSample(0.0, 202650.0),
                                               MeasurementSample(0.001, 202649.9)]


def test_non_monotone_row_rejected(caplog):
    lines = ["time_s,pressure_pa", "0.002,2e5", "0.001,2e5", "0.003,2e5"]
    with caplog.at_level(logging.WARNING):
        out = list(parse_measurements(lines))
    assert [s.time for s in out] == [0.002, 0.003]
    assert "rejected" in caplog.text


def test_malformed_rows(caplog):
    lines = ["time_s,pressure_pa", "0,2e5", "oops", "0.1,", "0.2,-5", "0.3,2e5"]
    with caplog.at_level(logging.WARNING):
        out = list(parse_measurements(lines))
    assert [s.time for s in out] == [0.0, 0.3]
    with pytest.raises(DataError, match=":3"):
        list(parse_measurements(lines, strict=True))
    with pytest.raises(DataError, match="header"):
        list(parse_measurements(["t,p", "0,1"]))
    assert list(parse_measurements([])) == []


def test_atm_unit():
    out = list(parse_measurements(["time_s,pressure_atm", "0,2"]))
    assert out[0].pressure == 2 * ATM


def test_round_trip_bit_exact(tmp_path):
    sim = simulate(scenario_constant(0.2 * MM2, 2.0), SensorModel(seed=5), Chamber.standard())
    path = tmp_path / "m.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_measurements(fh, sim.times, sim.pressures)
    back = list(ingest_measurements(path))
    assert np.array_equal([s.time for s in back], sim.times)
    assert np.array_equal([s.pressure for s in back], sim.pressures)
    assert b"\r" not in path.read_bytes()


def test_bounded_pipeline_order_and_errors():
    assert list(bounded_pipeline(iter(range(5000)), maxsize=8)) == list(range(5000))

    def boom():
        yield 1
        raise DataError("bad row")
    with pytest.raises(DataError):
        list(bounded_pipeline(boom()))


def test_bounded_pipeline_back_pressure():
    produced = []

    def gen():
        for i in range(100):
            produced.append(i)
            yield i
    it = bounded_pipeline(gen(), maxsize=4)
    assert next(it) == 0
    time.sleep(0.2)
    # the producer stalls once the queue is full
    assert len(produced) <= 4 + 2
    it.close()
    assert threading.active_count() < 50


def rec(t, a, evals=453, pred=2e5, meas=2e5):
    return EstimateRecord(t, a * MM2, 1.0, evals, 3, pred, meas)


def test_emit_header_only_and_rows():
    buf = io.StringIO()
    assert write_estimates(buf, []) == []
    assert buf.getvalue() == ESTIMATE_HEADER + "\n"
    buf = io.StringIO()
    write_estimates(buf, [rec(0.1, 0.2212345678)], scenario_constant(0.22 * MM2, 1.0))
    assert buf.getvalue().splitlines()[1] == "0.100000,0.221235,0.22,453,1.000000e+00"


def test_summary():
    records = [rec(t, a, pred=2e5 * 1.001) for t, a in
               [(1, 0.10), (2, 0.30), (3, 0.217), (4, 0.221), (5, 0.2201), (6, 0.22)]]
    s = summarize(records, scenario_constant(0.22 * MM2, 10.0))
    assert s["convergence_time_s"] == 3.0
    assert s["final_estimate_mm2"] == pytest.approx(0.22)
    assert s["evaluations_total"] == 6 * 453
    assert s["mean_abs_pct_pressure_residual"] == pytest.approx(0.1)
    assert summarize([])["updates"] == 0
    assert convergence_time([1.0, 2.0], [5.0, 5.0]) == 1.0
