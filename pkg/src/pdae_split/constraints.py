"""Constraint algebra for linearly constrained evolution equations.

A surjective constraint operator D (m x n) together with a right-inverse
D^- (n x m, with D D^- = I) splits the state space into the constraint
kernel X0 = ker D and its complement X^c = range D^-.  The induced
projection onto X0 is P0 = I - D^- D.  The dynamics live on X0, the
constrained part of the state is pinned to D^- g(t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import linalg


class ConstraintNotOntoError(ValueError):
    """Constraint operator is rank deficient (not onto)."""


class RightInversePolicyError(ValueError):
    """Requested right-inverse policy does not apply to this operator."""


class MultiplierUnavailableError(ValueError):
    """Multiplier recovery needs the constraint derivative g_dot."""


#: tolerance for the algebraic identities D D^- = I, P0^2 = P0, D P0 = 0, P0 D^- = 0
BLOCK_IDENTITY_TOL = 1e-12

#: tolerance for consistency of the initial state, |D u0 - g(t0)| <= this
CONSISTENCY_TOL = 1e-10


@dataclass(frozen=True)
class ConstraintBlock:
    """Constraint operator D, a right-inverse D^-, and the projection P0."""

    d: np.ndarray
    d_minus: np.ndarray
    p0: np.ndarray

    @property
    def n_constraints(self) -> int:
        return self.d.shape[0]

    @property
    def n_state(self) -> int:
        return self.d.shape[1]

    def identity_defects(self) -> dict[str, float]:
        """Max-norm defects of the four defining identities."""
        m = self.n_constraints
        dd = self.d @ self.d_minus
        return {
            "dd_minus": np.abs(dd - np.eye(m)).max(),
            "p0_idempotent": np.abs(self.p0 @ self.p0 - self.p0).max(),
            "d_p0": np.abs(self.d @ self.p0).max(),
            "p0_d_minus": np.abs(self.p0 @ self.d_minus).max(),
        }


def make_constraint_block(d, policy="pseudo_inverse") -> ConstraintBlock:
    """Build a ConstraintBlock from a full-row-rank operator d.

    policy selects the right-inverse:
      * "pseudo_inverse":  D^- = D^T (D D^T)^{-1}
      * "zero_extension":  requires every row of d to be a scaled selection
        pattern (one nonzero entry); D^- injects each constraint value back
        into its node, scaled so that D D^- = I
      * an explicit (n x m) array used as D^- directly

    The four block identities are verified before returning.
    """
    d = np.asarray(d, dtype=float)
    if d.ndim != 2:
        raise ValueError("constraint operator must be a matrix")
    m, n = d.shape
    if m > n:
        raise ConstraintNotOntoError(f"constraint not onto: {m} constraints on {n} unknowns")

    if isinstance(policy, np.ndarray):
        d_minus = np.asarray(policy, dtype=float)
        if d_minus.shape != (n, m):
            raise ValueError(f"explicit right-inverse must have shape {(n, m)}, got {d_minus.shape}")
    elif policy == "pseudo_inverse":
        gram = d @ d.T
        try:
            gram_inv = np.column_stack([linalg.lu_solve(gram, e) for e in np.eye(m)])
        except linalg.SingularMatrixError as exc:
            raise ConstraintNotOntoError("constraint not onto: D D^T is singular") from exc
        d_minus = d.T @ gram_inv
    elif policy == "zero_extension":
        d_minus = np.zeros((n, m))
        seen = set()
        for i in range(m):
            nz = np.flatnonzero(d[i])
            if nz.size != 1:
                raise RightInversePolicyError(
                    f"zero_extension needs one nonzero per row, row {i} has {nz.size}"
                )
            j = int(nz[0])
            if j in seen:
                raise RightInversePolicyError(f"zero_extension: column {j} selected twice")
            seen.add(j)
            d_minus[j, i] = 1.0 / d[i, j]
    else:
        raise ValueError(f"unknown right-inverse policy: {policy!r}")

    p0 = np.eye(n) - d_minus @ d
    block = ConstraintBlock(d=d, d_minus=d_minus, p0=p0)
    defects = block.identity_defects()
    worst = max(defects.values())
    if worst > BLOCK_IDENTITY_TOL:
        raise ConstraintNotOntoError(
            f"constraint block identities violated (max defect {worst:.3e}): {defects}"
        )
    return block


def project_p0(block: ConstraintBlock, x) -> np.ndarray:
    """Apply the kernel projection P0 = I - D^- D."""
    x = np.asarray(x, dtype=float)
    if x.shape != (block.n_state,):
        raise ValueError(f"dimension mismatch: expected ({block.n_state},), got {x.shape}")
    return block.p0 @ x


@dataclass(frozen=True)
class Grid:
    """Interior nodes of a uniform 1-d grid with homogeneous Dirichlet ends."""

    x: np.ndarray
    h: float


@dataclass(frozen=True, eq=False)
class ConstrainedSystem:
    """Fully discretized constrained diffusion-reaction system.

    du/dt = a u + f(u) + forcing(t) - D^- lambda,   D u = g(t),
    with consistent initial state u0 at t_span[0].
    """

    name: str
    a: np.ndarray
    constraint: ConstraintBlock
    f: Callable[[np.ndarray], np.ndarray]
    forcing: Callable[[float], np.ndarray]
    g: Callable[[float], np.ndarray]
    u0: np.ndarray
    t_span: tuple[float, float]
    grid: Grid
    g_dot: Callable[[float], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.constraint.n_state
        if self.a.shape != (n, n):
            raise ValueError(f"operator shape {self.a.shape} does not match state dim {n}")
        if self.u0.shape != (n,):
            raise ValueError(f"initial state shape {self.u0.shape} does not match state dim {n}")
        if not np.all(np.isfinite(self.u0)):
            raise ValueError("initial state has non-finite entries")
        res = consistency_residual(self, self.u0, self.t_span[0])
        if res > CONSISTENCY_TOL:
            raise ValueError(f"initial state inconsistent with constraint: residual {res:.3e}")

    @property
    def dim(self) -> int:
        return self.constraint.n_state


def consistency_residual(sys: ConstrainedSystem, x, t: float) -> float:
    """Return the constraint defect |D x - g(t)| in the max norm."""
    x = np.asarray(x, dtype=float)
    return float(np.abs(sys.constraint.d @ x - sys.g(t)).max())


def recover_multiplier(sys: ConstrainedSystem, u, t: float, extra=None) -> np.ndarray:
    """Recover the Lagrange multiplier of the linear constrained system,

        lambda = D (forcing(t) + extra + a u) - g_dot(t).

    extra is an optional state-sized addition to the right-hand side; see
    multiplier_within_splitting and multiplier_full_system for the two
    conventions exposed by the CLI.
    """
    if sys.g_dot is None:
        raise MultiplierUnavailableError("multiplier unavailable: g_dot not supplied")
    u = np.asarray(u, dtype=float)
    rhs = sys.forcing(t) + sys.a @ u
    if extra is not None:
        rhs = rhs + extra
    return sys.constraint.d @ rhs - sys.g_dot(t)


def multiplier_within_splitting(sys: ConstrainedSystem, u, t: float, q) -> np.ndarray:
    """Multiplier of the linear split subsystem, whose forcing carries q."""
    return recover_multiplier(sys, u, t, extra=q)


def multiplier_full_system(sys: ConstrainedSystem, u, t: float) -> np.ndarray:
    """Multiplier of the full system, with f(u) on the right-hand side."""
    return recover_multiplier(sys, u, t, extra=sys.f(np.asarray(u, dtype=float)))
