"""Ping-to-ping motion estimation from overlapped phase-center delays."""

from .delay import DelayMeasurement, estimate_delay, estimate_delays, unwrap_to
from .lm import LMOptions, LMResult, NonFiniteResidualError, lm_minimize
from .losses import huber, loss_dpc, loss_dvl, loss_smooth, total_loss
from .solver import (MotionEstimator, MotionProblem, MotionSolution, ResidualContext,
                     apply_motion, build_context, dpc_channel_pairs, measure_delays,
                     nominal_navigation, residual_g, solve_motion)

__all__ = [
    "DelayMeasurement", "LMOptions", "LMResult", "MotionEstimator", "MotionProblem",
    "MotionSolution", "NonFiniteResidualError", "ResidualContext", "apply_motion",
    "build_context", "dpc_channel_pairs", "estimate_delay", "estimate_delays", "huber",
    "lm_minimize", "loss_dpc", "loss_dvl", "loss_smooth", "measure_delays",
    "nominal_navigation", "residual_g", "solve_motion", "total_loss", "unwrap_to",
]
