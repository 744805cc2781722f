"""Builders for the three benchmark problems.

All three are semilinear diffusion(-wave) systems on (0, 1), discretized by
second-order central differences on a uniform interior grid with
homogeneous Dirichlet ends, and constrained through a Lagrange multiplier:

  * integral_mean: heat equation with quadratic reaction, constrained on a
    sine-weighted integral mean that grows linearly in time.
  * subset: the same equation with the solution prescribed on the
    subinterval [0.5, 0.7]; also provides the oscillatory perturbation used
    to stress corrections outside the constrained region.
  * mechanical: an elastic string with nonlinear damping coupled to a
    softening spring-damper along [0.65, 0.7], in first-order form, with
    the differentiated (hidden) velocity constraint appended so the coupled
    system has the index-2 structure the exact linear flow requires.
"""

from __future__ import annotations

import numpy as np

from .constraints import ConstrainedSystem, Grid, make_constraint_block

DEFAULT_T_END = {"integral_mean": 0.1, "subset": 0.1, "mechanical": 1.0}


def dirichlet_laplacian(n: int, h: float) -> np.ndarray:
    """Second-order finite-difference Laplacian on n interior nodes."""
    lap = np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    return lap / h**2


def interior_grid(n: int) -> Grid:
    h = 1.0 / (n + 1)
    return Grid(x=h * np.arange(1, n + 1), h=h)


def interval_members(grid: Grid, lo: float, hi: float) -> np.ndarray:
    """Indices of nodes in [lo, hi], widened by half a cell for stability."""
    slack = 0.5 * grid.h + 1e-12
    return np.flatnonzero((grid.x >= lo - slack) & (grid.x <= hi + slack))


def build_integral_mean(n: int = 500) -> ConstrainedSystem:
    """Heat equation with quadratic reaction and a weighted-mean constraint.

    du/dt = (1/10) Lap u + u^2 - D^- lambda on (0,1) x [0, 0.1],
    D u = h * sum_i u_i sin(pi x_i) = t (trapezoidal weights match the
    second-order spatial discretization), u0 = sin(2 pi x)^3.
    """
    if n < 10:
        raise ValueError("need at least 10 grid points")
    grid = interior_grid(n)
    a = 0.1 * dirichlet_laplacian(n, grid.h)
    weights = grid.h * np.sin(np.pi * grid.x)
    block = make_constraint_block(weights[np.newaxis, :], "pseudo_inverse")
    u0 = np.sin(2.0 * np.pi * grid.x) ** 3
    zero = np.zeros(n)
    return ConstrainedSystem(
        name="integral_mean",
        a=a,
        constraint=block,
        f=lambda u: u * u,
        forcing=lambda t: zero,
        g=lambda t: np.array([t]),
        g_dot=lambda t: np.array([1.0]),
        u0=u0,
        t_span=(0.0, DEFAULT_T_END["integral_mean"]),
        grid=grid,
        params={"diffusion": 0.1},
    )


def build_subset(n: int = 500) -> ConstrainedSystem:
    """The same PDE with the solution prescribed on [0.5, 0.7].

    u0 = sin(pi x) (1 + cos(7 pi x)), g(t) = (1 + 2t) u0 restricted to the
    constrained nodes.
    """
    if n < 10:
        raise ValueError("need at least 10 grid points")
    grid = interior_grid(n)
    a = 0.1 * dirichlet_laplacian(n, grid.h)
    omega0 = (0.5, 0.7)
    members = interval_members(grid, *omega0)
    d = np.zeros((members.size, n))
    d[np.arange(members.size), members] = 1.0
    block = make_constraint_block(d, "zero_extension")
    u0 = np.sin(np.pi * grid.x) * (1.0 + np.cos(7.0 * np.pi * grid.x))
    g0 = u0[members]
    zero = np.zeros(n)
    return ConstrainedSystem(
        name="subset",
        a=a,
        constraint=block,
        f=lambda u: u * u,
        forcing=lambda t: zero,
        g=lambda t: (1.0 + 2.0 * t) * g0,
        g_dot=lambda t: 2.0 * g0,
        u0=u0,
        t_span=(0.0, DEFAULT_T_END["subset"]),
        grid=grid,
        params={"diffusion": 0.1, "omega0": omega0},
    )


def subset_perturbation(sys: ConstrainedSystem) -> np.ndarray:
    """Oscillatory perturbation vanishing on the constrained nodes.

    Used as the extra term of the "perturbed" correction: it leaves the
    constrained components of the correction untouched, so the consistency
    of the correction is unaffected while its overall size grows.
    """
    if "omega0" not in sys.params:
        raise ValueError("perturbation is defined for the subset problem only")
    x = sys.grid.x
    lo, hi = sys.params["omega0"]
    p = np.zeros_like(x)
    left = x < lo
    right = x > hi
    p[left] = np.sin(2.0 * np.pi * x[left]) * np.cos(42.0 * np.pi * x[left])
    p[right] = -np.sin(10.0 / 3.0 * np.pi * (x[right] - hi)) * np.cos(70.0 * np.pi * (x[right] - hi))
    # the membership band is half a cell wider than [lo, hi]; keep the
    # perturbation exactly zero on every constrained node
    p[interval_members(sys.grid, lo, hi)] = 0.0
    return p


def build_mechanical(n: int = 250) -> ConstrainedSystem:
    """Elastic string coupled to a softening spring-damper along [0.65, 0.7].

    State z = (u, v, q, p) with string displacement u and velocity v on the
    interior grid and spring elongation q, velocity p.  The string carries
    the nonlinear damping -d1 v^2, the spring force k0 (1 - a^2 q^2) q and
    the cross-damping (d1 - d2) p sit in the nonlinearity so that the linear
    part leaves the constraint kernel invariant.  Constraints: u = q + 0.05
    and v = p on the coupling nodes (the second is the differentiated
    constraint that brings the coupling down to index-2 structure).
    """
    if n < 10:
        raise ValueError("need at least 10 grid points")
    c, d1, d2, k0, a_spring = 0.5, 10.0, 3.0, 100.0, 10.0
    grid = interior_grid(n)
    lap = dirichlet_laplacian(n, grid.h)
    omega0 = (0.65, 0.7)
    members = interval_members(grid, *omega0)
    m = members.size
    dim = 2 * n + 2

    a = np.zeros((dim, dim))
    a[:n, n:2 * n] = np.eye(n)
    a[n:2 * n, :n] = c * lap
    a[n:2 * n, n:2 * n] = -d1 * np.eye(n)
    a[2 * n, 2 * n + 1] = 1.0
    a[2 * n + 1, 2 * n + 1] = -d1

    d = np.zeros((2 * m, dim))
    d[np.arange(m), members] = 1.0
    d[np.arange(m), 2 * n] = -1.0
    d[m + np.arange(m), n + members] = 1.0
    d[m + np.arange(m), 2 * n + 1] = -1.0
    d_minus = np.zeros((dim, 2 * m))
    d_minus[members, np.arange(m)] = 1.0
    d_minus[n + members, m + np.arange(m)] = 1.0
    block = make_constraint_block(d, d_minus)

    def f(z):
        v = z[n:2 * n]
        q = z[2 * n]
        p = z[2 * n + 1]
        out = np.zeros_like(z)
        out[n:2 * n] = -d1 * v * v
        out[2 * n + 1] = -k0 * (1.0 - a_spring**2 * q * q) * q + (d1 - d2) * p
        return out

    u0 = np.sin(2.0 * np.pi * grid.x) ** 3 / 5.0
    u0[members] = 0.0
    v0 = np.zeros(n)
    v0[members] = 0.5
    z0 = np.concatenate([u0, v0, [-0.05], [0.5]])

    g_val = np.concatenate([np.full(m, 0.05), np.zeros(m)])
    zero_f = np.zeros(dim)
    zero_g = np.zeros(2 * m)
    return ConstrainedSystem(
        name="mechanical",
        a=a,
        constraint=block,
        f=f,
        forcing=lambda t: zero_f,
        g=lambda t: g_val,
        g_dot=lambda t: zero_g,
        u0=z0,
        t_span=(0.0, DEFAULT_T_END["mechanical"]),
        grid=grid,
        params={"c": c, "d1": d1, "d2": d2, "k0": k0, "a": a_spring,
                "omega0": omega0, "n_field": n},
    )


BUILDERS = {
    "integral_mean": build_integral_mean,
    "subset": build_subset,
    "mechanical": build_mechanical,
}


def build_problem(name: str, n: int | None = None) -> ConstrainedSystem:
    """Build a benchmark problem by name, with its default grid if n is None."""
    key = name.replace("-", "_")
    if key not in BUILDERS:
        raise ValueError(f"unknown problem {name!r}, expected one of {sorted(BUILDERS)}")
    if n is None:
        return BUILDERS[key]()
    return BUILDERS[key](n)
