"""Command-line front end.

Subcommands:
  convergence   error table of one scheme over a halving chain of step sizes
  local-order   one-step errors from exact data and their fitted slope
  table3        local/global order matrix over all schemes and corrections
  multiplier    recovered Lagrange multipliers along one splitting run

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
Step-size lists are either explicit ("2e-2,1e-2,5e-3") or halving chains
("2e-2:6" = 6 sizes starting at 2e-2).  A plain-text key=value file passed
via --config supplies defaults; command-line flags override it.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from . import experiments, problems
from .constraints import multiplier_full_system, multiplier_within_splitting
from .linalg import SingularMatrixError
from .schemes import (CORRECTION_KINDS, SCHEMES, Correction, SchemeConfig,
                      integrate, make_correction)

PROBLEM_NAMES = ("integral-mean", "subset", "mechanical")


class ConfigError(ValueError):
    """Invalid command-line or config-file input."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved options of one CLI invocation."""

    problem: str
    grid_size: int | None
    scheme: str
    correction: str
    taus: tuple[float, ...]
    tau_ref: float | None
    substeps: int
    norm: str
    out: str | None


def parse_taus(spec: str) -> tuple[float, ...]:
    spec = spec.strip()
    if not spec:
        raise ConfigError("no step sizes")
    if ":" in spec:
        start_s, count_s = spec.split(":", 1)
        try:
            start = float(start_s)
            count = int(count_s)
        except ValueError as exc:
            raise ConfigError(f"bad step-size chain {spec!r}") from exc
        if start <= 0 or count < 1:
            raise ConfigError(f"bad step-size chain {spec!r}")
        return tuple(start / 2**k for k in range(count))
    try:
        taus = tuple(float(tok) for tok in spec.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"bad step-size list {spec!r}") from exc
    if not taus:
        raise ConfigError("no step sizes")
    return taus


def load_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def build_system(config: RunConfig):
    if config.problem not in PROBLEM_NAMES:
        raise ConfigError(f"unknown problem {config.problem!r}, expected one of {PROBLEM_NAMES}")
    return problems.build_problem(config.problem, config.grid_size)


def build_correction(kind: str, sys) -> Correction:
    if kind not in CORRECTION_KINDS:
        raise ConfigError(f"unknown correction {kind!r}, expected one of {CORRECTION_KINDS}")
    if kind == "perturbed":
        return Correction("perturbed", problems.subset_perturbation(sys))
    return Correction(kind)


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_convergence(config: RunConfig) -> int:
    system = build_system(config)
    correction = build_correction(config.correction, system)
    if config.scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {config.scheme!r}, expected one of {SCHEMES}")
    taus = experiments.check_halving(config.taus)
    reference = experiments.default_reference(system, taus, config.norm,
                                              substeps=config.substeps,
                                              tau_ref=config.tau_ref)
    report = experiments.global_convergence(system, config.scheme, correction,
                                            taus, reference, config.substeps,
                                            config.norm)
    if report.failures:
        tau, msg = report.failures[0]
        raise ArithmeticError(f"run at tau={tau} failed: {msg}")
    _write(config.out, experiments.convergence_csv(report))
    if config.out is not None:
        sys.stdout.write(experiments.convergence_text(report))
    return 0


def cmd_local_order(config: RunConfig, anchor: float | None) -> int:
    system = build_system(config)
    correction = build_correction(config.correction, system)
    if config.scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {config.scheme!r}, expected one of {SCHEMES}")
    if len(config.taus) < 2:
        raise ConfigError("need >= 2 step sizes for a slope")
    report = experiments.local_order(system, config.scheme, correction,
                                     config.taus, anchor, substeps=config.substeps)
    _write(config.out, experiments.local_order_csv(report))
    if config.out is not None:
        sys.stdout.write(f"slope = {report.slope:.3f}\n")
    return 0


def cmd_table3(config: RunConfig, taus_local, taus_global, anchor, sidecar,
               zero_reaction: bool) -> int:
    if config.problem != "integral-mean":
        raise ConfigError("the order matrix is defined for the integral-mean problem")
    system = build_system(config)
    if zero_reaction:
        import dataclasses
        zero = np.zeros(system.dim)
        system = dataclasses.replace(system, f=lambda u: zero)
        tau_ref = min(taus_local) / 20.0
        t0 = system.t_span[0]
        times = np.unique(np.concatenate([[t0], t0 + np.asarray(taus_local), system.t_span]))
        reference = experiments.reference_solution(system, tau_ref, times)
        worst = 0.0
        for scheme, corr_kind in experiments.ORDER_TABLE_COLUMNS:
            rep = experiments.local_order(system, scheme, Correction(corr_kind),
                                          taus_local, anchor, reference,
                                          config.substeps)
            worst = max(worst, rep.errors.max())
        sys.stdout.write(
            f"reaction disabled: splitting composes exact flows, max one-step "
            f"error {worst:.3e}; no order table\n")
        return 0
    table = experiments.order_table(system, taus_local, taus_global, anchor,
                                    substeps=config.substeps)
    _write(config.out, experiments.order_table_text(table))
    if config.out is not None:
        sys.stdout.write(experiments.order_table_text(table))
    if sidecar is not None:
        _write(sidecar, experiments.order_table_csv(table))
    return 0


def cmd_multiplier(config: RunConfig, tau: float) -> int:
    system = build_system(config)
    correction = build_correction(config.correction, system)
    scheme_config = SchemeConfig(scheme=config.scheme, correction=correction,
                                 tau=tau, reaction_substeps=config.substeps)
    traj = integrate(system, scheme_config)
    m = system.constraint.n_constraints
    cols = (["t", "residual"]
            + [f"lambda_split_{i}" for i in range(m)]
            + [f"lambda_full_{i}" for i in range(m)])
    lines = [",".join(cols)]
    for k, t in enumerate(traj.times):
        u = traj.states[k]
        q = make_correction(correction, system, u, t)
        lam_split = multiplier_within_splitting(system, u, t, q)
        lam_full = multiplier_full_system(system, u, t)
        cells = [repr(float(t)), repr(float(traj.constraint_residuals[k]))]
        cells += [repr(float(v)) for v in lam_split]
        cells += [repr(float(v)) for v in lam_full]
        lines.append(",".join(cells))
    _write(config.out, "\n".join(lines) + "\n")
    return 0


def make_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="pdae-split",
        description="splitting schemes with consistency corrections for "
                    "constrained diffusion-reaction systems",
    )
    parser.add_argument("--config", help="key=value file with defaults for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help=argparse.SUPPRESS)
        p.add_argument("--problem", default="integral-mean",
                       help=f"one of {', '.join(PROBLEM_NAMES)}")
        p.add_argument("--grid-size", type=int, default=None,
                       help="interior grid points (default: problem standard)")
        p.add_argument("--scheme", default="lie", help=f"one of {', '.join(SCHEMES)}")
        p.add_argument("--correction", default="none",
                       help=f"one of {', '.join(CORRECTION_KINDS)}")
        p.add_argument("--substeps", type=int, default=20,
                       help="RK4 substeps per reaction flow")
        p.add_argument("--out", default=None, help="output file (default: stdout)")

    subcommands = {}
    p_conv = subcommands["convergence"] = sub.add_parser("convergence", help="global error table")
    add_common(p_conv)
    p_conv.add_argument("--taus", default=None, help="step sizes, list or start:count")
    p_conv.add_argument("--tau-ref", type=float, default=None,
                        help="reference step size (default: finest/20)")
    p_conv.add_argument("--norm", choices=("final", "max"), default="final",
                        help="measure error at final time or max over the grid")

    p_loc = subcommands["local-order"] = sub.add_parser("local-order", help="one-step error slope")
    add_common(p_loc)
    p_loc.add_argument("--taus", default=None)
    p_loc.add_argument("--anchor", type=float, default=None,
                       help="start time of the one-step errors (default: t0)")

    p_tab = subcommands["table3"] = sub.add_parser("table3", help="local/global order matrix")
    add_common(p_tab)
    p_tab.add_argument("--taus-local", default="1e-2:5")
    p_tab.add_argument("--taus-global", default="2e-2:6")
    p_tab.add_argument("--anchor", type=float, default=None)
    p_tab.add_argument("--sidecar", default=None, help="CSV file for raw slopes")
    p_tab.add_argument("--zero-reaction", action="store_true",
                       help="debug: disable the nonlinearity")

    p_mul = subcommands["multiplier"] = sub.add_parser("multiplier", help="multiplier recovery along a run")
    add_common(p_mul)
    p_mul.add_argument("--tau", type=float, default=None, help="step size of the run")

    return parser, subcommands


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser, subcommands = make_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        pre_args, _ = pre.parse_known_args(argv)
        if pre_args.config:
            defaults = load_config_file(pre_args.config)
            known = set()
            for p in subcommands.values():
                known |= {a.dest for a in p._actions}
            bad = set(defaults) - known
            if bad:
                raise ConfigError(f"unknown config keys: {sorted(bad)}")
            for p in subcommands.values():
                dests = {a.dest for a in p._actions}
                p.set_defaults(**{k: v for k, v in defaults.items() if k in dests})
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, OSError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2

    try:
        if getattr(args, "taus", None) is None and args.command in ("convergence", "local-order"):
            raise ConfigError("no step sizes")
        taus = parse_taus(args.taus) if getattr(args, "taus", None) else ()
        config = RunConfig(
            problem=args.problem,
            grid_size=int(args.grid_size) if args.grid_size is not None else None,
            scheme=args.scheme,
            correction=args.correction,
            taus=taus,
            tau_ref=float(args.tau_ref) if getattr(args, "tau_ref", None) is not None else None,
            substeps=int(args.substeps),
            norm=getattr(args, "norm", "final"),
            out=args.out,
        )
        if args.command == "convergence":
            return cmd_convergence(config)
        if args.command == "local-order":
            anchor = float(args.anchor) if args.anchor is not None else None
            return cmd_local_order(config, anchor)
        if args.command == "table3":
            anchor = float(args.anchor) if args.anchor is not None else None
            return cmd_table3(config, parse_taus(args.taus_local),
                              parse_taus(args.taus_global), anchor,
                              args.sidecar, args.zero_reaction)
        if args.command == "multiplier":
            if args.tau is None:
                raise ConfigError("multiplier needs --tau")
            return cmd_multiplier(config, float(args.tau))
        raise ConfigError(f"unknown command {args.command!r}")
    except SingularMatrixError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 3
    except (ArithmeticError, RuntimeError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
