import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ewars.chamber_sim import SensorModel, scenario_constant, simulate
from ewars.estimator import (AnchorMode, Decimation, Decimator, EwarsConfig, EwarsEstimator,
                             MeasurementSample, RefineStrategy, _History, bench_compare, decimate,
                             model_pressure, objective, resolution_matched_n0, run_ewars)
from ewars.gas_dynamics import ATM, Chamber, integrate_trajectory
from ewars.search import MM2, SearchBounds, ars, full_bfs

CLEAN = SensorModel(noise_sigma=0.0)


@pytest.fixture(scope="module")
def chamber():
    return Chamber.standard()


def stream(area_mm2, duration, chamber, sensor=CLEAN):
    sim = simulate(scenario_constant(area_mm2 * MM2, duration), sensor, chamber)
    return [MeasurementSample(float(t), float(p)) for t, p in zip(sim.times, sim.pressures)]


def test_config_validation_and_presets():
    with pytest.raises(ValueError):
        EwarsConfig(alpha=1.5)
    with pytest.raises(ValueError):
        EwarsConfig(n_grid=2)
    with pytest.raises(ValueError):
        EwarsConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        EwarsConfig(weight_floor=1.0)
    c, v = EwarsConfig.constant_leak(), EwarsConfig.variable_leak()
    assert (c.n_grid, c.alpha) == (150, 0.125)
    assert (v.n_grid, v.alpha) == (250, 0.01)
    assert c.epsilon == pytest.approx(5e-11)


def test_model_pressure_examples(chamber):
    cfg = EwarsConfig()
    prev = MeasurementSample(3.0, 180000.0)
    assert model_pressure(0.0, prev, 7.0, cfg, chamber) == pytest.approx(180000.0, abs=1e-9)
    ic = EwarsConfig(anchor_mode=AnchorMode.INITIAL)
    got = model_pressure(2.8e-7, None, 1e-3, ic, chamber)
    assert got == pytest.approx(2 * ATM - 0.1247, abs=1e-4)
    with pytest.raises(ValueError):
        model_pressure(1e-7, prev, 3.0, cfg, chamber)


@settings(max_examples=30, deadline=None)
@given(p=st.floats(1.05 * ATM, 2.05 * ATM), horizon=st.floats(0.01, 5.0),
       areas=st.lists(st.integers(1, 1000), min_size=2, max_size=20, unique=True))
def test_model_pressure_decreasing_in_area(chamber, p, horizon, areas):
    a = np.sort(np.array(areas)) * 1e-9
    out = model_pressure(a, MeasurementSample(1.0, p), 1.0 + horizon, EwarsConfig(), chamber)
    assert np.all(np.diff(out) < 0)


def test_anchor_below_ambient_is_clamped(chamber, caplog):
    prev = MeasurementSample(1.0, ATM - 50.0)
    with caplog.at_level(logging.WARNING):
        got = model_pressure(1e-7, prev, 1.1, EwarsConfig(), chamber)
    assert got == pytest.approx(ATM)
    assert "clamped" in caplog.text


def test_objective_zero_at_truth_and_sign_symmetric(chamber):
    ic = EwarsConfig(anchor_mode=AnchorMode.INITIAL)
    traj = integrate_trajectory(0.22e-6, 20.0, chamber)
    cur = MeasurementSample(20.0, float(traj.pressures[-1]))
    assert objective(0.22e-6, None, cur, ic, chamber) < 1e-6
    p_model = model_pressure(0.3e-6, None, 20.0, ic, chamber)
    up = objective(0.3e-6, None, MeasurementSample(20.0, p_model + 7.0), ic, chamber)
    down = objective(0.3e-6, None, MeasurementSample(20.0, p_model - 7.0), ic, chamber)
    assert up == pytest.approx(down, rel=1e-6) and up == pytest.approx(49.0, rel=1e-4)


def test_objective_fine_grid_argmin(chamber):
    ic = EwarsConfig(anchor_mode=AnchorMode.INITIAL)
    traj = integrate_trajectory(0.1234e-6, 30.0, chamber)
    cur = MeasurementSample(30.0, float(traj.pressures[-1]))
    bounds = SearchBounds()
    a, _ = full_bfs(lambda g: objective(g, None, cur, ic, chamber), bounds, 20_000)
    assert abs(a - 0.1234e-6) <= bounds.width / 20_000


def test_history_depth():
    assert _History(0.125, 1e-9, 3).capacity == 140
    assert _History(0.01, 1e-9, 3).capacity == 1604
    assert _History(1.0, 1e-9, 3).capacity == 1
    assert _History(0.0, 1e-9, 3).capacity == 0


def test_replay_equals_exact_weighted_sum(chamber):
    cfg = EwarsConfig(alpha=0.3, weight_floor=1e-12)
    samples = list(decimate(stream(0.2, 3.0, chamber, SensorModel(noise_sigma=100.0)), 0.1))
    est = EwarsEstimator(cfg, chamber)
    rows = []
    for prev, cur in zip(samples, samples[1:]):
        rows.append(est._row(prev, cur))
        est.step(prev, cur)
    areas = np.linspace(1e-7, 3e-7, 17)
    terms = est._terms_at(np.array(rows), areas)
    s = terms[0]
    for f in terms[1:]:
        s = 0.3 * f + 0.7 * s
    assert np.allclose(est._smoothed_at(areas), s, rtol=1e-9, atol=0)
    # base grid values agree with the replayed sum at grid points
    grid = est.state.grid
    assert np.allclose(est._smoothed_at(grid), est.state.s_values, rtol=1e-9)


def test_first_step_sets_s0_to_f0(chamber):
    cfg = EwarsConfig(alpha=0.125)
    est = EwarsEstimator(cfg, chamber)
    s = list(decimate(stream(0.2, 0.3, chamber), 0.1))
    est.step(s[0], s[1])
    f0 = objective(est.state.grid, s[0], s[1], cfg, chamber)
    assert np.allclose(est.state.s_values, f0, rtol=1e-6, atol=1e-9)


def test_alpha_one_matches_plain_ars(chamber):
    cfg = EwarsConfig(alpha=1.0)
    samples = list(decimate(stream(0.18, 2.0, chamber, SensorModel(noise_sigma=100.0)), 0.1))
    records = run_ewars(stream(0.18, 2.0, chamber, SensorModel(noise_sigma=100.0)), cfg, chamber)
    est = EwarsEstimator(cfg, chamber)
    for prev, cur, rec in zip(samples, samples[1:], records):
        row = est._row(prev, cur)
        a, evals, _ = ars(lambda g: est._terms_at(row[None, :], g)[0], cfg.bounds,
                          cfg.n_grid, cfg.epsilon)
        assert rec.area_estimate == a and rec.evaluations == evals


@pytest.mark.parametrize("anchor", list(AnchorMode))
def test_noise_free_round_trip(chamber, anchor):
    cfg = EwarsConfig(anchor_mode=anchor)
    records = run_ewars(stream(0.22, 30.0, chamber), cfg, chamber)
    tol = max(2 * cfg.epsilon, 0.005 * 0.22e-6)
    settled = [r for r in records if r.time > 5.0]
    assert all(abs(r.area_estimate - 0.22e-6) <= tol for r in settled)
    for r in records:
        assert cfg.bounds.a_lb <= r.area_estimate <= cfg.bounds.a_ub
        assert r.evaluations >= cfg.n_grid and r.smoothed_objective_at_min >= 0
        assert r.evaluations == 453 and r.refinement_levels == 3


def test_interpolate_strategy_stays_near_truth(chamber):
    cfg = EwarsConfig(refine_strategy=RefineStrategy.INTERPOLATE)
    records = run_ewars(stream(0.22, 10.0, chamber), cfg, chamber)
    assert abs(records[-1].area_estimate - 0.22e-6) < cfg.bounds.width / cfg.n_grid


def test_monotone_response(chamber):
    finals = [run_ewars(stream(a, 10.0, chamber), EwarsConfig(), chamber)[-1].area_estimate
              for a in (0.16, 0.22, 0.28)]
    assert finals[0] < finals[1] < finals[2]


def test_determinism(chamber):
    s = stream(0.2, 5.0, chamber, SensorModel(noise_sigma=100.0, seed=3))
    assert run_ewars(s, EwarsConfig(), chamber) == run_ewars(s, EwarsConfig(), chamber)


def test_empty_and_sealed_streams(chamber):
    assert run_ewars([], EwarsConfig(), chamber) == []
    sealed = [MeasurementSample(k * 1e-3, 2 * ATM) for k in range(2000)]
    records = run_ewars(sealed, EwarsConfig(), chamber)
    assert all(r.area_estimate == EwarsConfig().bounds.a_lb for r in records)


def test_out_of_order_sample_rejected(chamber, caplog):
    est = EwarsEstimator(EwarsConfig(), chamber)
    s = list(decimate(stream(0.2, 0.5, chamber), 0.1))
    est.push(s[0])
    est.push(s[1])
    before = est.state.s_values.copy()
    with caplog.at_level(logging.WARNING):
        assert est.push(MeasurementSample(s[0].time, s[0].pressure)) is None
    assert np.array_equal(est.state.s_values, before)
    assert "out-of-order" in caplog.text


def test_decimator_mean_and_nearest():
    samples = [MeasurementSample(k * 0.01, 1000.0 + k) for k in range(31)]
    mean = list(decimate(samples, 0.1, Decimation.MEAN))
    near = list(decimate(samples, 0.1, Decimation.NEAREST))
    assert [m.time for m in near] == pytest.approx([0.0, 0.1, 0.2, 0.3])
    assert [m.pressure for m in near] == [1000.0, 1010.0, 1020.0, 1030.0]
    assert mean[0] == samples[0]
    assert mean[1].time == pytest.approx(0.055) and mean[1].pressure == pytest.approx(1005.5)
    assert len(mean) == 4


def test_decimator_gap_warning(caplog):
    dec = Decimator(0.1)
    with caplog.at_level(logging.WARNING):
        dec.push(MeasurementSample(0.0, 1.0))
        dec.push(MeasurementSample(5.0, 1.0))
    assert "gap" in caplog.text


def test_bench_compare_noise_free_alpha_one(chamber):
    cfg = EwarsConfig(alpha=1.0)
    report = bench_compare(stream(0.25, 5.0, chamber), cfg, chamber)
    assert report.n0_fbfs == resolution_matched_n0(cfg) == 19_980
    assert np.max(np.abs(report.fbfs_estimates - report.ewars_estimates)) <= cfg.epsilon
    assert report.evals_fbfs == report.fbfs_estimates.size * 19_981
    assert report.eval_ratio > 40
    assert math.isfinite(report.wall_ratio)
    assert set(report.summary()) >= {"evals_fbfs", "evals_ewars", "eval_ratio"}
