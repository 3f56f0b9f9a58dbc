"""Leak-area estimation for pressure-decay tests by exponentially weighted adaptively refined search."""

from .chamber_sim import (CalibrationPolynomial, LeakScenario, SensorModel, scenario_constant,
                          scenario_steps, simulate, slpm_to_area, volts_to_area, volts_to_slpm)
from .estimator import (AnchorMode, Decimation, EstimateRecord, EwarsConfig, EwarsEstimator,
                        MeasurementSample, RefineStrategy, bench_compare, run_ewars)
from .gas_dynamics import (Chamber, DomainError, FlowStage, analytic_stage1, exit_mass_flow,
                           integrate_trajectory, rk4_step)
from .search import MM2, SearchBounds, ars, ew_update, full_bfs

__version__ = "0.1.0"
