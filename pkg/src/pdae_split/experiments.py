"""Reference solutions, convergence studies, and order estimation.

The reference integrator is corrected Strang splitting at a step size well
below the finest step under study.  It is cross-validated once per run
against an unrelated discretization: fully implicit Euler applied to the
coupled index-2 system, solved to tolerance at every step on the
saddle-point system.  Agreement of two unrelated methods bounds the
reference bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import problems
from .constraints import ConstrainedSystem
from .schemes import (Correction, LinearFlowCache, SchemeConfig, Trajectory,
                      STEP_FUNCTIONS, integrate, make_correction, step_count)


class ReferenceUnreliableError(RuntimeError):
    """Reference and implicit-oracle solutions disagree beyond the expected band."""


def order_estimate(err_coarse: float, err_fine: float) -> float:
    """Observed order under step halving, log2(err_coarse / err_fine)."""
    if err_coarse <= 0 or err_fine <= 0:
        raise ValueError("order estimate needs positive errors")
    return float(np.log2(err_coarse / err_fine))


def fit_slope(taus, errors) -> float:
    """Least-squares slope of log2(error) against log2(tau)."""
    taus = np.asarray(taus, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if taus.size < 2:
        raise ValueError("need >= 2 step sizes for a slope")
    return float(np.polyfit(np.log2(taus), np.log2(errors), 1)[0])


def _err_linf(diff) -> float:
    return float(np.abs(diff).max())


def _err_l2(diff, h: float) -> float:
    return float(np.sqrt(h * np.sum(diff * diff)))


# --------------------------------------------------------------------------
# reference solution


@dataclass(frozen=True)
class CrossValidation:
    """Outcome of the implicit-Euler cross-check of a reference solution."""

    tau_ref: float
    euler_discrepancy: float
    richardson_discrepancy: float
    expected_band: float


@dataclass(frozen=True)
class Reference:
    """High-accuracy states on a fixed set of sample times."""

    times: np.ndarray
    states: np.ndarray
    tau_ref: float
    scheme: str
    cross_validation: CrossValidation | None = None

    def state_at(self, t: float) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(self.times).max()):
            raise KeyError(f"time {t} is not a reference sample time")
        return self.states[idx]


def _sample_indices(sys, tau, sample_times):
    t0 = sys.t_span[0]
    n_steps = step_count(sys.t_span, tau)
    indices = []
    for t in sample_times:
        k = int(round((t - t0) / tau))
        if k < 0 or k > n_steps or abs(t0 + k * tau - t) > 1e-9 * max(1.0, sys.t_span[1]):
            raise ValueError(f"sample time {t} is not on the step grid for tau={tau}")
        indices.append(k)
    return n_steps, indices


def run_sampled(sys: ConstrainedSystem, scheme: str, correction: Correction,
                tau: float, sample_times, substeps: int = 20) -> np.ndarray:
    """Run a splitting scheme, returning states at the given times only."""
    n_steps, indices = _sample_indices(sys, tau, sample_times)
    wanted = {}
    for row, k in enumerate(indices):
        wanted.setdefault(k, []).append(row)
    cache = LinearFlowCache(sys, tau)
    step = STEP_FUNCTIONS[scheme]
    t0 = sys.t_span[0]
    out = np.empty((len(indices), sys.dim))
    u = sys.u0
    for row in wanted.get(0, []):
        out[row] = u
    for k in range(n_steps):
        u = step(sys, cache, t0 + k * tau, tau, u, correction, substeps)
        for row in wanted.get(k + 1, []):
            out[row] = u
    return out


def implicit_euler_dae(sys: ConstrainedSystem, tau: float, sample_times,
                       tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
    """Fully implicit Euler on the coupled index-2 system.

    Every step solves the nonlinear saddle-point system

        (I - tau a) u + tau D^- lambda = u_k + tau (f(u) + forcing),
        D u = g(t_{k+1})

    by iterating on the reaction term over a frozen LU factorization of the
    saddle matrix; each step is converged to `tol`, so the result is the
    exact implicit Euler solution, independent of the iteration used.
    """
    n_steps, indices = _sample_indices(sys, tau, sample_times)
    wanted = {}
    for row, k in enumerate(indices):
        wanted.setdefault(k, []).append(row)
    block = sys.constraint
    n = sys.dim
    m = block.n_constraints
    saddle = np.zeros((n + m, n + m))
    saddle[:n, :n] = np.eye(n) - tau * sys.a
    saddle[:n, n:] = tau * block.d_minus
    saddle[n:, :n] = block.d
    lu_piv = scipy.linalg.lu_factor(saddle)

    t0 = sys.t_span[0]
    out = np.empty((len(indices), n))
    u = sys.u0.copy()
    for row in wanted.get(0, []):
        out[row] = u
    rhs = np.empty(n + m)
    for k in range(n_steps):
        t_next = t0 + (k + 1) * tau
        rhs[n:] = sys.g(t_next)
        forcing = sys.forcing(t_next)
        u_new = u
        prev_delta = np.inf
        for it in range(max_iter):
            rhs[:n] = u + tau * (sys.f(u_new) + forcing)
            sol = scipy.linalg.lu_solve(lu_piv, rhs)
            delta = _err_linf(sol[:n] - u_new)
            u_new = sol[:n]
            scale = 1.0 + _err_linf(u_new)
            if delta <= tol * scale:
                break
            # the iteration contracts at rate O(tau * Lf); a stall this deep
            # is the rounding floor of the saddle solve, not divergence
            if it >= 2 and delta > 0.25 * prev_delta and delta <= 1e-8 * scale:
                break
            prev_delta = delta
        else:
            raise RuntimeError(f"implicit step at t={t_next:.6e} did not converge")
        u = u_new
        for row in wanted.get(k + 1, []):
            out[row] = u
    return out


def implicit_euler_multiplier(sys: ConstrainedSystem, tau: float) -> np.ndarray:
    """Multiplier of a single implicit Euler step from the initial state."""
    block = sys.constraint
    n = sys.dim
    m = block.n_constraints
    saddle = np.zeros((n + m, n + m))
    saddle[:n, :n] = np.eye(n) - tau * sys.a
    saddle[:n, n:] = tau * block.d_minus
    saddle[n:, :n] = block.d
    lu_piv = scipy.linalg.lu_factor(saddle)
    t_next = sys.t_span[0] + tau
    rhs = np.empty(n + m)
    rhs[n:] = sys.g(t_next)
    u_new = sys.u0.copy()
    lam = np.zeros(m)
    for _ in range(60):
        rhs[:n] = sys.u0 + tau * (sys.f(u_new) + sys.forcing(t_next))
        sol = scipy.linalg.lu_solve(lu_piv, rhs)
        delta = _err_linf(sol[:n] - u_new)
        u_new = sol[:n]
        lam = sol[n:]
        if delta <= 1e-12 * (1.0 + _err_linf(u_new)):
            return lam
    raise RuntimeError("implicit step did not converge")


def reference_solution(sys: ConstrainedSystem, tau_ref: float, sample_times=None,
                       cross_validate: bool = True, substeps: int = 20) -> Reference:
    """Corrected Strang reference at tau_ref, sampled at the given times.

    With cross_validate, implicit Euler runs at 2*tau_ref, tau_ref and
    tau_ref/2; the Richardson extrapolation of the finer pair is second-order
    accurate and must agree with the reference to within 10x an empirically
    calibrated O(tau_ref^2) band, otherwise the reference is rejected.
    """
    if sample_times is None:
        sample_times = [sys.t_span[0], sys.t_span[1]]
    sample_times = np.asarray(sorted(sample_times), dtype=float)
    states = run_sampled(sys, "strang", Correction("state"), tau_ref,
                         sample_times, substeps)
    cv = None
    if cross_validate:
        e_coarse = implicit_euler_dae(sys, 2.0 * tau_ref, sample_times)
        e_mid = implicit_euler_dae(sys, tau_ref, sample_times)
        e_fine = implicit_euler_dae(sys, 0.5 * tau_ref, sample_times)
        rich_coarse = 2.0 * e_mid - e_coarse
        rich_fine = 2.0 * e_fine - e_mid
        # both extrapolations carry an O(tau_ref^2) remainder; their gap
        # calibrates its constant without touching the reference
        remainder_scale = _err_linf(rich_coarse - rich_fine) / 3.0
        floor = 1e3 * np.finfo(float).eps * (1.0 + _err_linf(states))
        band = max(remainder_scale, floor)
        discrepancy = max(_err_linf(e_mid[k] - states[k]) for k in range(len(sample_times)))
        rich_disc = max(_err_linf(rich_fine[k] - states[k]) for k in range(len(sample_times)))
        cv = CrossValidation(tau_ref=tau_ref, euler_discrepancy=discrepancy,
                             richardson_discrepancy=rich_disc, expected_band=band)
        if rich_disc > 10.0 * band:
            raise ReferenceUnreliableError(
                f"reference unreliable: independent implicit solution deviates by "
                f"{rich_disc:.3e}, expected O(tau_ref^2) band {band:.3e}"
            )
    return Reference(times=sample_times, states=states, tau_ref=tau_ref,
                     scheme="strang+state", cross_validation=cv)


# --------------------------------------------------------------------------
# convergence studies


@dataclass(frozen=True)
class ConvergenceRow:
    tau: float
    err_linf: float
    err_l2: float
    order_linf: float | None
    order_l2: float | None


@dataclass(frozen=True)
class ConvergenceReport:
    """Error table of one (scheme, correction) study over a halving chain."""

    problem: str
    scheme: str
    correction: str
    rows: tuple[ConvergenceRow, ...]
    tau_ref: float
    reference_scheme: str
    norm_convention: str = "final"
    failures: tuple[tuple[float, str], ...] = ()

    @property
    def taus(self) -> np.ndarray:
        return np.array([r.tau for r in self.rows])

    @property
    def errors_linf(self) -> np.ndarray:
        return np.array([r.err_linf for r in self.rows])

    @property
    def errors_l2(self) -> np.ndarray:
        return np.array([r.err_l2 for r in self.rows])

    def slope(self, norm: str = "linf") -> float:
        errs = self.errors_linf if norm == "linf" else self.errors_l2
        return fit_slope(self.taus, errs)


@dataclass(frozen=True)
class LocalOrderReport:
    """One-step errors against the reference and their fitted slope."""

    problem: str
    scheme: str
    correction: str
    t_anchor: float
    taus: np.ndarray
    errors: np.ndarray
    slope: float


def check_halving(taus) -> np.ndarray:
    taus = np.asarray(sorted(taus, reverse=True), dtype=float)
    if taus.size == 0:
        raise ValueError("no step sizes")
    if np.any(taus <= 0):
        raise ValueError("step sizes must be positive")
    ratios = taus[:-1] / taus[1:]
    if np.any(np.abs(ratios - 2.0) > 1e-9):
        raise ValueError("step sizes must form a halving chain")
    return taus


def default_reference(sys: ConstrainedSystem, taus, norm_convention="final",
                      extra_times=(), cross_validate=True, substeps=20,
                      tau_ref: float | None = None) -> Reference:
    """Reference sampled densely enough for the requested study."""
    taus = check_halving(taus)
    tau_min = taus.min()
    if tau_ref is None:
        tau_ref = tau_min / 20.0
    elif tau_ref > tau_min / 20.0 * (1.0 + 1e-12):
        raise ValueError("tau_ref must be at most (finest step size)/20")
    if norm_convention == "max":
        n_fine = step_count(sys.t_span, tau_min)
        times = sys.t_span[0] + tau_min * np.arange(n_fine + 1)
    else:
        times = np.array(sys.t_span)
    times = np.unique(np.concatenate([times, np.asarray(list(extra_times), dtype=float)]))
    return reference_solution(sys, tau_ref, times, cross_validate, substeps)


def global_convergence(sys: ConstrainedSystem, scheme: str, correction: Correction,
                       taus, reference: Reference | None = None, substeps: int = 20,
                       norm_convention: str = "final",
                       cache_pool: dict | None = None) -> ConvergenceReport:
    """Error table of a scheme against the reference over a halving chain.

    norm_convention "final" measures at the end time; "max" takes the
    maximum over the scheme's own time grid.
    """
    taus = check_halving(taus)
    if reference is None:
        reference = default_reference(sys, taus, norm_convention, substeps=substeps)
    h = sys.grid.h
    rows = []
    failures = []
    prev: ConvergenceRow | None = None
    for tau in taus:
        config = SchemeConfig(scheme=scheme, correction=correction, tau=tau,
                              reaction_substeps=substeps)
        cache = None
        if cache_pool is not None:
            cache = cache_pool.get(tau)
            if cache is None:
                cache = cache_pool[tau] = LinearFlowCache(sys, tau)
        try:
            traj = integrate(sys, config, cache)
        except ArithmeticError as exc:
            failures.append((tau, str(exc)))
            prev = None
            continue
        if norm_convention == "max":
            e_inf = 0.0
            e_l2 = 0.0
            for k, t in enumerate(traj.times):
                diff = traj.states[k] - reference.state_at(t)
                e_inf = max(e_inf, _err_linf(diff))
                e_l2 = max(e_l2, _err_l2(diff, h))
        else:
            diff = traj.final_state - reference.state_at(sys.t_span[1])
            e_inf = _err_linf(diff)
            e_l2 = _err_l2(diff, h)
        row = ConvergenceRow(
            tau=tau, err_linf=e_inf, err_l2=e_l2,
            order_linf=order_estimate(prev.err_linf, e_inf) if prev else None,
            order_l2=order_estimate(prev.err_l2, e_l2) if prev else None,
        )
        rows.append(row)
        prev = row
    return ConvergenceReport(problem=sys.name, scheme=scheme, correction=correction.kind,
                             rows=tuple(rows), tau_ref=reference.tau_ref,
                             reference_scheme=reference.scheme,
                             norm_convention=norm_convention, failures=tuple(failures))


def local_order(sys: ConstrainedSystem, scheme: str, correction: Correction,
                taus, t_anchor: float | None = None, reference: Reference | None = None,
                substeps: int = 20, cache_pool: dict | None = None) -> LocalOrderReport:
    """One-step errors from exact data at t_anchor, and their fitted slope.

    Each step size takes a single step of the scheme from the reference
    state at t_anchor and compares with the reference at t_anchor + tau.
    """
    taus = np.asarray(sorted(taus, reverse=True), dtype=float)
    if taus.size < 2:
        raise ValueError("need >= 2 step sizes for a slope")
    if t_anchor is None:
        t_anchor = sys.t_span[0]
    if t_anchor < sys.t_span[0] or t_anchor + taus.max() > sys.t_span[1] + 1e-12:
        raise ValueError("anchor and anchor + max(tau) must lie inside the time interval")
    if reference is None:
        tau_ref = taus.min() / 20.0
        times = np.unique(np.concatenate([[t_anchor], t_anchor + taus, sys.t_span]))
        reference = reference_solution(sys, tau_ref, times)
    u_anchor = reference.state_at(t_anchor)
    step = STEP_FUNCTIONS[scheme]
    errors = []
    for tau in taus:
        cache = None if cache_pool is None else cache_pool.get(tau)
        if cache is None:
            cache = LinearFlowCache(sys, tau)
            if cache_pool is not None:
                cache_pool[tau] = cache
        u1 = step(sys, cache, t_anchor, tau, u_anchor, correction, substeps)
        errors.append(_err_linf(u1 - reference.state_at(t_anchor + tau)))
    errors = np.array(errors)
    return LocalOrderReport(problem=sys.name, scheme=scheme, correction=correction.kind,
                            t_anchor=t_anchor, taus=taus, errors=errors,
                            slope=fit_slope(taus, errors))


def correction_comparison(sys: ConstrainedSystem, taus, reference: Reference | None = None,
                          substeps: int = 20) -> dict[str, ConvergenceReport]:
    """Strang splitting under the three correction choices on the subset problem.

    A: nonlinearity at the current state; B: the same plus the oscillatory
    perturbation outside the constrained region; C: nonlinearity at the
    constrained part of the state.  All three converge at second order; B
    pays a constant-factor penalty in accuracy.
    """
    taus = check_halving(taus)
    if reference is None:
        reference = default_reference(sys, taus, substeps=substeps)
    p = problems.subset_perturbation(sys)
    pool: dict = {}
    variants = {
        "A": Correction("state"),
        "B": Correction("perturbed", p),
        "C": Correction("constraint"),
    }
    return {label: global_convergence(sys, "strang", corr, taus, reference,
                                      substeps, cache_pool=pool)
            for label, corr in variants.items()}


# --------------------------------------------------------------------------
# local/global order matrix


@dataclass(frozen=True)
class OrderTable:
    """Local and global order estimates for every scheme/correction pair."""

    problem: str
    columns: tuple[tuple[str, str], ...]
    local_slopes: np.ndarray
    global_slopes: np.ndarray
    local_reports: tuple[LocalOrderReport, ...]
    global_reports: tuple[ConvergenceReport, ...]

    def rounded(self) -> np.ndarray:
        return np.rint(np.vstack([self.local_slopes, self.global_slopes])).astype(int)


ORDER_TABLE_COLUMNS = tuple(
    (scheme, corr)
    for scheme in ("lie", "lie_reversed", "strang", "strang_reversed")
    for corr in ("none", "state")
)


def order_table(sys: ConstrainedSystem, taus_local, taus_global,
                t_anchor: float | None = None, reference: Reference | None = None,
                substeps: int = 20) -> OrderTable:
    """Local and global convergence orders over all schemes and corrections."""
    taus_local = np.asarray(sorted(taus_local, reverse=True), dtype=float)
    taus_global = check_halving(taus_global)
    if reference is None:
        anchor = sys.t_span[0] if t_anchor is None else t_anchor
        tau_ref = min(taus_local.min(), taus_global.min()) / 20.0
        times = np.unique(np.concatenate([[anchor], anchor + taus_local, sys.t_span]))
        reference = reference_solution(sys, tau_ref, times, cross_validate=True,
                                       substeps=substeps)
    pool: dict = {}
    locals_, globals_ = [], []
    for scheme, corr_kind in ORDER_TABLE_COLUMNS:
        corr = Correction(corr_kind)
        locals_.append(local_order(sys, scheme, corr, taus_local, t_anchor,
                                   reference, substeps, cache_pool=pool))
        globals_.append(global_convergence(sys, scheme, corr, taus_global,
                                           reference, substeps, cache_pool=pool))
    return OrderTable(
        problem=sys.name,
        columns=ORDER_TABLE_COLUMNS,
        local_slopes=np.array([r.slope for r in locals_]),
        global_slopes=np.array([r.slope() for r in globals_]),
        local_reports=tuple(locals_),
        global_reports=tuple(globals_),
    )


# --------------------------------------------------------------------------
# report serialization


def convergence_csv(report: ConvergenceReport) -> str:
    lines = ["tau,err_linf,err_l2,order_linf,order_l2"]
    for r in report.rows:
        o1 = "" if r.order_linf is None else repr(r.order_linf)
        o2 = "" if r.order_l2 is None else repr(r.order_l2)
        lines.append(f"{r.tau!r},{r.err_linf!r},{r.err_l2!r},{o1},{o2}")
    return "\n".join(lines) + "\n"


def convergence_text(report: ConvergenceReport) -> str:
    head = (f"{report.problem}: {report.scheme} splitting, correction={report.correction}, "
            f"{report.norm_convention}-time errors vs {report.reference_scheme} reference "
            f"(tau_ref={report.tau_ref:.3e})")
    lines = [head, f"{'step size':>12} | {'linf error':>12} {'order':>6} | "
                   f"{'l2 error':>12} {'order':>6}"]
    for r in report.rows:
        o1 = "--" if r.order_linf is None else f"{r.order_linf:.2f}"
        o2 = "--" if r.order_l2 is None else f"{r.order_l2:.2f}"
        lines.append(f"{r.tau:12.3e} | {r.err_linf:12.3e} {o1:>6} | "
                     f"{r.err_l2:12.3e} {o2:>6}")
    for tau, msg in report.failures:
        lines.append(f"{tau:12.3e} | failed: {msg}")
    return "\n".join(lines) + "\n"


def local_order_csv(report: LocalOrderReport) -> str:
    lines = ["tau,local_err"]
    for tau, err in zip(report.taus, report.errors):
        lines.append(f"{tau!r},{err!r}")
    lines.append(f"# slope={report.slope!r}")
    return "\n".join(lines) + "\n"


def order_table_text(table: OrderTable) -> str:
    labels = {"lie": "Lie", "lie_reversed": "rev Lie", "strang": "Strang",
              "strang_reversed": "rev Strang"}
    header = ["order      "]
    for scheme, corr in table.columns:
        tag = "q=0" if corr == "none" else "q=f"
        header.append(f"{labels[scheme]} {tag:>4}")
    rounded = table.rounded()
    lines = [" | ".join(f"{cell:>11}" for cell in header)]
    for name, row in zip(("local", "global"), rounded):
        cells = [f"{name:>11}"] + [f"{v:>11d}" for v in row]
        lines.append(" | ".join(cells))
    return "\n".join(lines) + "\n"


def order_table_csv(table: OrderTable) -> str:
    lines = ["scheme,correction,local_slope,global_slope"]
    for (scheme, corr), ls, gs in zip(table.columns, table.local_slopes,
                                      table.global_slopes):
        lines.append(f"{scheme},{corr},{ls!r},{gs!r}")
    return "\n".join(lines) + "\n"
