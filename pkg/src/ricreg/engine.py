"""Riccati-flow solver for l2-regularized linear regression.

The quadratic value function S(x) = x'Px/2 + q'x + r of the underlying
control problem is integrated with fixed-step classical RK4, one piece per
data block (piece length = the block's weight).  The minimizer of the
regression loss is then P * (gamma * theta0) + q.  Because the state (P, q, r)
is a sufficient statistic for all processed data, blocks can be added,
removed (time-reversed integration), and re-weighted after the fact, the
regularization weights can be retuned through an auxiliary diagonal flow, and
the prior bias can be moved by a pure matrix-vector evaluation.

All operations are pure: they take a state and return a new one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import (
    DataBlock,
    Hyperparams,
    ModelSolution,
    NumericsError,
    RiccatiState,
    new_state,
    validate_block,
)

__all__ = [
    "IntegrationConfig",
    "TraceRecord",
    "ParetoTrace",
    "rk4_step",
    "integrate_block",
    "fit",
    "extract_solution",
    "loss_from_state",
    "add_block",
    "remove_block",
    "tune_lambda",
    "tune_gamma",
    "shift_bias",
]

_SIGNS = {"forward": 1.0, "backward": -1.0}


@dataclass(frozen=True)
class IntegrationConfig:
    """Fixed-step RK4 settings.

    ``step_h`` is never adapted automatically; callers pick it (and may change
    it between operations, e.g. coarse-to-fine schedules for weight sweeps).
    ``track_loss`` decides whether ``fit`` starts a state with the scalar loss
    accumulator; once a state has (or lacks) one, later operations follow the
    state.
    """

    step_h: float = 1e-3
    symmetrize: bool = True
    track_loss: bool = True

    def __post_init__(self):
        if not (self.step_h > 0.0) or not math.isfinite(self.step_h):
            raise ValueError(f"step_h must be positive and finite, got {self.step_h}")


@dataclass(frozen=True)
class TraceRecord:
    """One point on the regularization path: weight label, minimizer, objectives."""

    effective_hyperparam: float
    theta: np.ndarray
    data_fit: float
    reg_norm: float


class ParetoTrace:
    """Ordered sequence of regularization-path points recorded during a sweep."""

    def __init__(self):
        self.records: list[TraceRecord] = []

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def write_csv(self, path) -> None:
        """Columns: effective_param,data_fit,reg_norm,theta_0..theta_{n-1}."""
        if not self.records:
            raise ValueError("empty trace")
        n = self.records[0].theta.shape[0]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["effective_param", "data_fit", "reg_norm"]
                + [f"theta_{k}" for k in range(n)]
            )
            for rec in self.records:
                writer.writerow(
                    [repr(rec.effective_hyperparam), repr(rec.data_fit), repr(rec.reg_norm)]
                    + [repr(float(t)) for t in rec.theta]
                )


def _sign_of(direction: str) -> float:
    try:
        return _SIGNS[direction]
    except KeyError:
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


def _check_finite(p, q, r, direction: str) -> None:
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q)) and math.isfinite(r)):
        hint = (
            "backward integration blew up; use a smaller step size"
            if direction == "backward"
            else "integration produced non-finite values; use a smaller step size"
        )
        raise NumericsError(hint)


def _new_elapsed(elapsed: float, signed_duration: float) -> float:
    out = elapsed + signed_duration
    if out < 0.0:
        if out > -1e-9 * (abs(elapsed) + abs(signed_duration) + 1.0):
            return 0.0
        raise ValueError("removing more integrated time than the state contains")
    return out


def _split_steps(duration: float, h: float) -> tuple[int, float]:
    """Number of full steps of size h plus the final partial step landing
    exactly on ``duration``."""
    k = int(math.ceil(duration / h - 1e-9))
    if k < 1:
        k = 1
    last = duration - (k - 1) * h
    return k - 1, last


def _run_dense(state: RiccatiState, phi, y, duration, cfg, direction) -> RiccatiState:
    # Whether the loss accumulator is integrated follows the state itself;
    # cfg.track_loss only decides whether `fit` creates one.
    sign = _sign_of(direction)
    track = state.r is not None
    p = state.p.copy()
    q = state.q.copy()
    r = state.r if track else 0.0
    nfull, last = _split_steps(duration, cfg.step_h)
    if nfull:
        r = _kernels.rk4_dense(p, q, r, phi, y, sign * cfg.step_h, nfull, cfg.symmetrize, track)
    r = _kernels.rk4_dense(p, q, r, phi, y, sign * last, 1, cfg.symmetrize, track)
    _check_finite(p, q, r, direction)
    return RiccatiState(
        p=p,
        q=q,
        r=r if track else None,
        elapsed=_new_elapsed(state.elapsed, sign * duration),
    )


def rk4_step(
    state: RiccatiState, block: DataBlock, h: float, direction: str = "forward"
) -> RiccatiState:
    """One classical RK4 step of size +h (forward) or -h (backward)."""
    if not (h > 0.0) or not math.isfinite(h):
        raise ValueError(f"h must be positive and finite, got {h}")
    validate_block(block, state.n)
    sign = _sign_of(direction)
    track = state.r is not None
    p = state.p.copy()
    q = state.q.copy()
    r = _kernels.rk4_dense(
        p, q, state.r if track else 0.0, block.phi, block.y, sign * h, 1, True, track
    )
    _check_finite(p, q, r, direction)
    return RiccatiState(
        p=p,
        q=q,
        r=r if track else None,
        elapsed=_new_elapsed(state.elapsed, sign * h),
    )


def integrate_block(
    state: RiccatiState,
    block: DataBlock,
    duration: float,
    cfg: IntegrationConfig,
    direction: str = "forward",
) -> RiccatiState:
    """Integrate one block's piece of the flow for ``duration`` time units."""
    if duration < 0.0 or not math.isfinite(duration):
        raise ValueError(f"duration must be finite and >= 0, got {duration}")
    validate_block(block, state.n)
    _sign_of(direction)
    if duration == 0.0:
        return state
    return _run_dense(state, block.phi, block.y, duration, cfg, direction)


def fit(hyper: Hyperparams, blocks, cfg: IntegrationConfig) -> RiccatiState:
    """Integrate all blocks in order from the fresh state p = diag(1/gamma)."""
    blocks = list(blocks)
    for block in blocks:
        validate_block(block, hyper.n)
    state = new_state(hyper, track_loss=cfg.track_loss)
    for block in blocks:
        state = integrate_block(state, block, block.lam, cfg, "forward")
    return state


def loss_from_state(state: RiccatiState, hyper: Hyperparams) -> float:
    """Minimal loss recovered from the value function: -S(x) + theta0'Gamma theta0/2."""
    if state.r is None:
        raise ValueError("loss accumulator was not tracked for this state")
    x = hyper.evaluation_point()
    s_value = 0.5 * float(x @ (state.p @ x)) + float(state.q @ x) + state.r
    return -s_value + 0.5 * float(hyper.theta0 @ x)


def _direct_losses(theta, hyper, blocks):
    data_fit = 0.0
    for block in blocks:
        resid = block.phi @ theta - block.y
        data_fit += 0.5 * block.lam * float(resid @ resid)
    diff = theta - hyper.theta0
    reg_value = 0.5 * float(hyper.gamma @ (diff * diff))
    return data_fit, reg_value


def extract_solution(
    state: RiccatiState, hyper: Hyperparams, blocks=None
) -> ModelSolution:
    """Minimizer theta* = P (gamma * theta0) + q, with loss diagnostics.

    When ``blocks`` are given, the data-fit and regularization values are
    evaluated directly (and total_loss is their sum).  Otherwise total_loss is
    recovered from the value function when the loss accumulator was tracked,
    and the split is left unset.
    """
    if state.n != hyper.n:
        raise ValueError("state and hyperparams dimension mismatch")
    theta = state.p @ hyper.evaluation_point() + state.q
    if blocks is not None:
        data_fit, reg_value = _direct_losses(theta, hyper, blocks)
        return ModelSolution(
            theta_star=theta,
            data_fit=data_fit,
            reg_value=reg_value,
            total_loss=data_fit + reg_value,
        )
    if state.r is not None:
        return ModelSolution(theta_star=theta, total_loss=loss_from_state(state, hyper))
    return ModelSolution(theta_star=theta)


def add_block(state: RiccatiState, block: DataBlock, cfg: IntegrationConfig) -> RiccatiState:
    """Incorporate one more block; equivalent to refitting with it appended."""
    return integrate_block(state, block, block.lam, cfg, "forward")


def remove_block(state: RiccatiState, block: DataBlock, cfg: IntegrationConfig) -> RiccatiState:
    """Undo a previously incorporated block by integrating its piece backward.

    The caller is responsible for the block actually having been incorporated;
    the state carries no history to verify it.
    """
    return integrate_block(state, block, block.lam, cfg, "backward")


def tune_lambda(
    state: RiccatiState,
    block: DataBlock,
    old_lambda: float,
    new_lambda: float,
    cfg: IntegrationConfig,
) -> RiccatiState:
    """Change one block's weight by integrating its piece for the difference."""
    if old_lambda < 0.0 or new_lambda < 0.0:
        raise ValueError("weights must be >= 0")
    delta = new_lambda - old_lambda
    if delta == 0.0:
        return state
    direction = "forward" if delta > 0.0 else "backward"
    return integrate_block(state, block, abs(delta), cfg, direction)


def _run_diag(p, q, r, d, duration, cfg, direction, track) -> float:
    sign = _sign_of(direction)
    nfull, last = _split_steps(duration, cfg.step_h)
    if nfull:
        r = _kernels.rk4_diag(p, q, r, d, sign * cfg.step_h, nfull, cfg.symmetrize, track)
    r = _kernels.rk4_diag(p, q, r, d, sign * last, 1, cfg.symmetrize, track)
    _check_finite(p, q, r, direction)
    return r


def _trace_point(trace, p, q, r, gamma_eff, theta0):
    x = gamma_eff * theta0
    theta = p @ x + q
    s_value = 0.5 * float(x @ (p @ x)) + float(q @ x) + r
    total = -s_value + 0.5 * float(theta0 @ x)
    diff = theta - theta0
    reg_weighted = 0.5 * float(gamma_eff @ (diff * diff))
    trace.append(
        TraceRecord(
            effective_hyperparam=float(np.mean(gamma_eff)),
            theta=theta,
            data_fit=total - reg_weighted,
            reg_norm=0.5 * float(diff @ diff),
        )
    )


def _run_diag_traced(p, q, r, d, cfg, direction, trace, gamma_at, theta0) -> float:
    """Unit-duration diagonal flow, recording one trace point per step.

    ``gamma_at(t)`` maps progress t in [0, 1] through the phase to the
    regularization weights whose exact solution the state then represents.
    """
    sign = _sign_of(direction)
    nfull, last = _split_steps(1.0, cfg.step_h)
    t = 0.0
    for _ in range(nfull):
        r = _kernels.rk4_diag(p, q, r, d, sign * cfg.step_h, 1, cfg.symmetrize, True)
        t += cfg.step_h
        _trace_point(trace, p, q, r, gamma_at(t), theta0)
    r = _kernels.rk4_diag(p, q, r, d, sign * last, 1, cfg.symmetrize, True)
    _trace_point(trace, p, q, r, gamma_at(1.0), theta0)
    _check_finite(p, q, r, direction)
    return r


def tune_gamma(
    state: RiccatiState,
    hyper: Hyperparams,
    new_gamma,
    cfg: IntegrationConfig,
    trace: ParetoTrace | None = None,
) -> tuple[RiccatiState, Hyperparams]:
    """Retune the regularization weights without touching the data.

    Weight increases are applied by integrating the diagonal flow with the
    increments forward over unit time; decreases by integrating it backward.
    The returned state solves the problem under ``new_gamma`` (pair it with
    the returned Hyperparams when extracting the minimizer).  If ``trace`` is
    given, one point per RK4 step is recorded along the sweep, labelled by the
    interpolated effective weights; this requires the loss accumulator.
    """
    if state.n != hyper.n:
        raise ValueError("state and hyperparams dimension mismatch")
    new_hyper = hyper.with_gamma(new_gamma)
    d = new_hyper.gamma - hyper.gamma
    d_up = np.maximum(d, 0.0)
    d_down = np.maximum(-d, 0.0)
    if trace is not None and state.r is None:
        raise ValueError("Pareto tracing requires a state with the loss accumulator")
    if not np.any(d_up) and not np.any(d_down):
        if trace is not None:
            _trace_point(trace, state.p, state.q, state.r, hyper.gamma, hyper.theta0)
        return state, new_hyper

    track = state.r is not None
    p = state.p.copy()
    q = state.q.copy()
    r = state.r if track else 0.0
    gamma0 = hyper.gamma
    theta0 = hyper.theta0

    if trace is not None:
        _trace_point(trace, p, q, r, gamma0, theta0)
    if np.any(d_up):
        if trace is not None:
            r = _run_diag_traced(
                p, q, r, d_up, cfg, "forward", trace,
                lambda t: gamma0 + t * d_up, theta0,
            )
        else:
            r = _run_diag(p, q, r, d_up, 1.0, cfg, "forward", track)
    if np.any(d_down):
        if trace is not None:
            # After progress t of the backward phase the state solves the
            # problem with weights gamma + d_up - t * d_down.
            r = _run_diag_traced(
                p, q, r, d_down, cfg, "backward", trace,
                lambda t: gamma0 + d_up - t * d_down, theta0,
            )
        else:
            r = _run_diag(p, q, r, d_down, 1.0, cfg, "backward", track)

    new_state_ = RiccatiState(
        p=p, q=q, r=r if track else None, elapsed=state.elapsed
    )
    return new_state_, new_hyper


def shift_bias(state: RiccatiState, hyper: Hyperparams, new_theta0) -> ModelSolution:
    """Move the prior bias: pure O(n^2) evaluation, no integration, no data."""
    new_hyper = hyper.with_theta0(new_theta0)
    return extract_solution(state, new_hyper)
