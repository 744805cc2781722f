"""Exact flows of the two split subsystems.

The linear constrained subsystem

    dv/dt = a v + forcing(t) + q - D^- lambda,   D v = g(t)

has the closed-form solution (for a step [t0, t0 + tau], with m = P0 a P0
realizing the generator on the constraint kernel)

    v(tau) = D^- g(t0+tau) + exp(tau m) P0 v0
             + integral_0^tau exp((tau-s) m) P0 (forcing + q + a D^- g)(t0+s) ds.

Projecting v0 with P0 enforces consistency of inconsistent inputs, which
makes the flow discontinuous at s = 0 for such data.  The integral is exact
whenever forcing and g are affine on the step, which the flow verifies.

The nonlinear reaction subsystem dw/dt = f(w) - q is integrated by classical
RK4 with enough equal substeps that its error is negligible against the
splitting error under study.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .constraints import ConstrainedSystem


class NonAffineInhomogeneityError(ValueError):
    """forcing or g is not affine over the step; the flow would be inexact."""


class ReactionBlowupError(ArithmeticError):
    """The reaction subsystem produced a non-finite state."""

    def __init__(self, message, t_local=None):
        super().__init__(message)
        self.t_local = t_local


class LinearFlowCache:
    """Per-step-size cache of the linear-flow operator exponentials.

    For the step size tau it holds, per needed duration (tau and tau/2),
    the triple exp(theta m), theta*phi1(theta m), theta^2*phi2(theta m)
    with m = P0 a P0.  Built once and reused across all steps, since the
    linear part is autonomous.  Rebuilding with the same tau reproduces
    the matrices bit for bit.
    """

    def __init__(self, sys: ConstrainedSystem, tau: float):
        if tau <= 0:
            raise ValueError(f"step size must be positive, got {tau}")
        self.sys = sys
        self.tau = float(tau)
        p0 = sys.constraint.p0
        self.m = p0 @ sys.a @ p0
        self.a_dminus = sys.a @ sys.constraint.d_minus
        self._triples: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _match_duration(self, duration: float) -> float:
        for known in (self.tau, 0.5 * self.tau):
            if abs(duration - known) <= 1e-12 * self.tau:
                return known
        raise ValueError(
            f"cache for tau={self.tau} cannot serve duration {duration}; "
            f"only full and half steps are precomputed"
        )

    def triple(self, duration: float):
        key = self._match_duration(duration)
        if key not in self._triples:
            self._triples[key] = linalg.phi_triple(self.m, key)
        return self._triples[key]


def _check_affine(label, y0, ym, y1, scale_tol=1e-9):
    mid = 0.5 * (y0 + y1)
    scale = 1.0 + max(np.abs(y0).max(), np.abs(y1).max(), np.abs(ym).max())
    if np.abs(ym - mid).max() > scale_tol * scale:
        raise NonAffineInhomogeneityError(
            f"inhomogeneity not affine over the step: {label} deviates from "
            f"its chord by {np.abs(ym - mid).max():.3e}"
        )


def linear_pdae_flow(sys: ConstrainedSystem, cache: LinearFlowCache, t0: float,
                     tau: float, v0, q) -> np.ndarray:
    """Advance the linear constrained subsystem exactly from t0 by tau.

    v0 may violate the constraint (splitting hands over such states); it is
    then projected onto the constraint kernel, so the returned state always
    satisfies D v = g(t0 + tau).  q is the constant correction added to the
    forcing for this step.
    """
    if tau <= 0:
        raise ValueError(f"step duration must be positive, got {tau}")
    v0 = np.asarray(v0, dtype=float)
    q = np.asarray(q, dtype=float)
    block = sys.constraint
    e, p1, p2 = cache.triple(tau)

    g0 = sys.g(t0)
    g1 = sys.g(t0 + tau)
    f0 = sys.forcing(t0)
    f1 = sys.forcing(t0 + tau)
    _check_affine("g", g0, sys.g(t0 + 0.5 * tau), g1)
    _check_affine("forcing", f0, sys.forcing(t0 + 0.5 * tau), f1)

    g_rate = (g1 - g0) / tau
    f_rate = (f1 - f0) / tau
    b0 = block.p0 @ (f0 + q + cache.a_dminus @ g0)
    b1 = block.p0 @ (f_rate + cache.a_dminus @ g_rate)
    return block.d_minus @ g1 + e @ (block.p0 @ v0) + p1 @ b0 + p2 @ b1


def reaction_flow(f, q, tau: float, w0, substeps: int = 20) -> np.ndarray:
    """Integrate dw/dt = f(w) - q over [0, tau] by RK4 with equal substeps."""
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    if tau < 0:
        raise ValueError(f"step duration must be nonnegative, got {tau}")
    w = np.asarray(w0, dtype=float)
    q = np.asarray(q, dtype=float)
    h = tau / substeps
    for k in range(substeps):
        k1 = f(w) - q
        k2 = f(w + 0.5 * h * k1) - q
        k3 = f(w + 0.5 * h * k2) - q
        k4 = f(w + h * k3) - q
        w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(w)):
            t_local = (k + 1) * h
            raise ReactionBlowupError(
                f"reaction blow-up: non-finite state after substep {k + 1} "
                f"(local time {t_local:.6e})",
                t_local=t_local,
            )
    return w
