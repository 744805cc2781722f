"""Outer splitting integrators: Lie and Strang, plain and reversed.

Each macro step freezes a correction vector q_n computed from the current
state; q_n is subtracted from the reaction subsystem and added to the
forcing of the linear constrained subsystem, so the composition is
consistent with the unsplit equation for every choice of q_n.  The
correction exists to keep the reaction output consistent with the
constraint to first order, which is what restores the second-order
convergence of Strang splitting.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constraints import ConstrainedSystem, consistency_residual, multiplier_within_splitting
from .subflows import LinearFlowCache, linear_pdae_flow, reaction_flow

CORRECTION_KINDS = ("none", "state", "constraint", "perturbed")
SCHEMES = ("lie", "lie_reversed", "strang", "strang_reversed")


@dataclass(frozen=True)
class Correction:
    """Correction-term policy for one splitting run.

    kinds:
      * "none":        q_n = 0 (classical splitting)
      * "state":       q_n = f(u_n), nonlinearity at the current state
      * "constraint":  q_n = f(D^- g(t_n)), nonlinearity at the constrained
        part of the state only
      * "perturbed":   q_n = f(u_n) + p with a fixed perturbation p that
        vanishes on the constrained nodes
    """

    kind: str = "none"
    perturbation: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in CORRECTION_KINDS:
            raise ValueError(f"unknown correction kind {self.kind!r}, expected one of {CORRECTION_KINDS}")
        if self.kind == "perturbed" and self.perturbation is None:
            raise ValueError("perturbed correction needs a perturbation vector")


def make_correction(correction: Correction, sys: ConstrainedSystem, u_n, t_n: float) -> np.ndarray:
    """Evaluate the frozen correction vector q_n for the step starting at t_n."""
    u_n = np.asarray(u_n, dtype=float)
    if u_n.shape != (sys.dim,):
        raise ValueError(f"state shape {u_n.shape} does not match system dimension {sys.dim}")
    if correction.kind == "none":
        return np.zeros(sys.dim)
    if correction.kind == "state":
        return sys.f(u_n)
    if correction.kind == "constraint":
        return sys.f(sys.constraint.d_minus @ sys.g(t_n))
    p = np.asarray(correction.perturbation, dtype=float)
    if p.shape != (sys.dim,):
        raise ValueError(f"perturbation shape {p.shape} does not match system dimension {sys.dim}")
    return sys.f(u_n) + p


def lie_step(sys, cache, t_n, tau, u_n, correction: Correction, substeps=20) -> np.ndarray:
    """Reaction over tau, then linear constrained flow over tau."""
    q = make_correction(correction, sys, u_n, t_n)
    w = reaction_flow(sys.f, q, tau, u_n, substeps)
    return linear_pdae_flow(sys, cache, t_n, tau, w, q)


def lie_reversed_step(sys, cache, t_n, tau, u_n, correction: Correction, substeps=20) -> np.ndarray:
    """Linear constrained flow over tau, then reaction over tau."""
    q = make_correction(correction, sys, u_n, t_n)
    v = linear_pdae_flow(sys, cache, t_n, tau, u_n, q)
    return reaction_flow(sys.f, q, tau, v, substeps)


def strang_step(sys, cache, t_n, tau, u_n, correction: Correction, substeps=20) -> np.ndarray:
    """Linear half step, reaction full step, linear half step."""
    q = make_correction(correction, sys, u_n, t_n)
    v_half = linear_pdae_flow(sys, cache, t_n, 0.5 * tau, u_n, q)
    w = reaction_flow(sys.f, q, tau, v_half, substeps)
    return linear_pdae_flow(sys, cache, t_n + 0.5 * tau, 0.5 * tau, w, q)


def strang_reversed_step(sys, cache, t_n, tau, u_n, correction: Correction, substeps=20) -> np.ndarray:
    """Reaction half step, linear full step, reaction half step."""
    q = make_correction(correction, sys, u_n, t_n)
    w_half = reaction_flow(sys.f, q, 0.5 * tau, u_n, substeps)
    v = linear_pdae_flow(sys, cache, t_n, tau, w_half, q)
    return reaction_flow(sys.f, q, 0.5 * tau, v, substeps)


STEP_FUNCTIONS: dict[str, Callable] = {
    "lie": lie_step,
    "lie_reversed": lie_reversed_step,
    "strang": strang_step,
    "strang_reversed": strang_reversed_step,
}


@dataclass(frozen=True)
class SchemeConfig:
    """Configuration of one splitting run."""

    scheme: str
    correction: Correction
    tau: float
    reaction_substeps: int = 20
    record_multipliers: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.tau <= 0:
            raise ValueError(f"step size must be positive, got {self.tau}")
        if self.reaction_substeps < 1:
            raise ValueError("reaction_substeps must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """Time grid, raw states, and diagnostics of one splitting run.

    states holds the raw scheme output used for stepping and for error
    measurement.  consistent_states holds the projected companion
    D^- g(t_n) + P0 u_n, which differs from the raw state only for schemes
    that end a macro step with the reaction flow.
    """

    times: np.ndarray
    states: np.ndarray
    constraint_residuals: np.ndarray
    consistent_states: np.ndarray
    multipliers: np.ndarray | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def step_count(t_span: tuple[float, float], tau: float) -> int:
    """Number of steps of size tau covering t_span; tau must divide it."""
    length = t_span[1] - t_span[0]
    n = int(round(length / tau))
    if n < 0 or abs(n * tau - length) > 1e-12 * max(length, 1.0):
        raise ValueError(f"step size {tau} does not divide the time interval of length {length}")
    return n


def integrate(sys: ConstrainedSystem, config: SchemeConfig,
              cache: LinearFlowCache | None = None) -> Trajectory:
    """Run the configured splitting scheme over the full time interval."""
    n_steps = step_count(sys.t_span, config.tau)
    if cache is None:
        cache = LinearFlowCache(sys, config.tau)
    step = STEP_FUNCTIONS[config.scheme]
    block = sys.constraint
    t0 = sys.t_span[0]

    times = t0 + config.tau * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1, sys.dim))
    states[0] = sys.u0
    u = sys.u0
    for k in range(n_steps):
        try:
            u = step(sys, cache, times[k], config.tau, u, config.correction,
                     config.reaction_substeps)
        except ArithmeticError as exc:
            raise type(exc)(f"step {k} starting at t={times[k]:.6e}: {exc}") from exc
        states[k + 1] = u

    residuals = np.array([consistency_residual(sys, states[k], times[k])
                          for k in range(n_steps + 1)])
    consistent = (states @ block.p0.T
                  + np.array([block.d_minus @ sys.g(t) for t in times]))
    multipliers = None
    if config.record_multipliers:
        multipliers = np.array([
            multiplier_within_splitting(
                sys, states[k], times[k],
                make_correction(config.correction, sys, states[k], times[k]))
            for k in range(n_steps + 1)
        ])
    return Trajectory(times=times, states=states, constraint_residuals=residuals,
                      consistent_states=consistent, multipliers=multipliers)
