"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 solver divergence, 4 I/O error.
The default output directory is ``$DDEPI_OUTPUT_DIR`` (``./ddepi_out`` if unset).
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, pde1d, stability
from .core import ConfigError, ConvergenceError, ModelParams
from .models import SIRD
from .scenario import (load_scenario, resolve_config, shipped_scenarios, simulate, write_csv,
                       write_outputs)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4
OUTPUT_ENV = "DDEPI_OUTPUT_DIR"

# Fields that do not enter the ODE, or that the ODE cannot see; ignored when pairing runs.
_COMPARE_IGNORED = ("nu_s", "nu_e", "nu_i", "nu_r", "allee_A", "phi_e", "sigma_rate")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "ddepi_out"))


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else default_output_dir()


# ---------------------------------------------------------------- run


def cmd_run(args) -> int:
    s = load_scenario(resolve_config(args.config))
    art = write_outputs(simulate(s), _out_dir(args))
    summ = art.summary
    print(f"{s.label}: {len(art.result.times)} rows -> {art.totals_csv}")
    for key in ("initial_theorem_verdict", "initial_root_verdict", "peak_i", "peak_i_time",
                "first_negative", "d_increment_envelope", "instability", "diverged_at"):
        if key in summ:
            v = summ[key]
            print(f"  {key} = {v!r}" if isinstance(v, float) else f"  {key} = {v}")
    for p in art.snapshot_csvs:
        print(f"  snapshot {p}")
    return EXIT_OK


# ---------------------------------------------------------------- stability


def _parse_point(text: str) -> stability.CharPoint:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--point expects 'a,b', got {text!r}") from None
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ConfigError(f"--point must be finite, got {text!r}")
    return stability.CharPoint(a, b)


_STABILITY_PLOT = """# gnuplot script; run from this directory: gnuplot plot.gp
set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 1400,600
set output 'stability.png'
set multiplot layout 1,2
set xlabel 'a'; set ylabel 'b'
plot 'boundary.csv' using 2:3 with lines title 'boundary', \\
     'point.csv' using 1:2 with points pt 7 title 'point'
set xlabel 'Re'; set ylabel 'Im'
plot 'roots.csv' using 2:3 with points pt 7 title 'roots'
unset multiplot
"""


def cmd_stability(args) -> int:
    lines = []
    if args.point is not None:
        if any(v is not None for v in (args.phi_r, args.phi_d, args.sigma)):
            raise ConfigError("use either --point or --phi-r/--phi-d/--sigma, not both")
        point = _parse_point(args.point)
        verdict = stability.is_stable(point, args.k_max)
        lines.append(f"{verdict.label} (margin {verdict.margin!r}) "
                     f"oscillatory={'yes' if verdict.oscillatory else 'no'} criterion={verdict.criterion_used.value}")
    else:
        missing = [f for f, v in (("--phi-r", args.phi_r), ("--phi-d", args.phi_d), ("--sigma", args.sigma)) if v is None]
        if missing:
            raise ConfigError(f"missing {', '.join(missing)} (or give --point a,b)")
        if not args.sigma > 0:
            raise ConfigError(f"--sigma must be > 0, got {args.sigma!r}")
        p = ModelParams(phi_r=args.phi_r, phi_d=args.phi_d, sigma_delay=args.sigma, mu=args.mu, alpha=args.alpha,
                        beta_e=args.beta_e, beta_i=args.beta_i, allee_A=args.allee_A)
        verdict = stability.theorem31_check(p)
        lines.append(f"{verdict.label} (margin {verdict.margin!r}) "
                     f"oscillatory={'yes' if verdict.oscillatory else 'no'} criterion={verdict.criterion_used.value}")
        point = stability.decoupled_point(p)
        if p.allee_A > 0:
            lines.append(f"contractivity: {stability.contractivity_check(p).describe()}")
        roots_verdict = stability.is_stable(point, args.k_max)
        lines.append(f"rightmost_root: {roots_verdict.describe()}")
    roots = stability.characteristic_roots(point, args.k_max)
    lam = roots.rightmost
    lines.append(f"point a={point.a!r} b={point.b!r} rightmost={lam.real!r}{lam.imag:+.17g}j "
                 f"max_residual={float(roots.residuals().max()):.3e}")

    out = _out_dir(args) / "stability" if not args.out else Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "roots.csv", ["branch", "re", "im"],
              [(k, float(r.real), float(r.imag)) for k, r in roots])
    phis = np.linspace(0.0, math.pi, args.boundary_samples + 2)[1:-1]
    write_csv(out / "boundary.csv", ["phi", "a", "b"],
              [(phi, *stability.boundary_curve(phi)) for phi in phis])
    write_csv(out / "point.csv", ["a", "b"], [tuple(point)])
    (out / "plot.gp").write_text(_STABILITY_PLOT)
    lines.append(f"wrote {out / 'roots.csv'} {out / 'boundary.csv'}")
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------- compare


def _compare_view(p: ModelParams) -> ModelParams:
    return p.replace(**{k: 0.0 for k in _COMPARE_IGNORED})


def compatibility_problems(ode, pde) -> list[str]:
    """Reasons two scenarios cannot be paired (empty when compatible)."""
    problems = []
    if ode.model != "delay_sird_ode":
        problems.append(f"--ode-config must be a delay_sird_ode scenario, got {ode.model}")
    if pde.model != "delay_sird_pde1d":
        problems.append(f"--pde-config must be a delay_sird_pde1d scenario, got {pde.model}")
    if problems:
        return problems
    if ode.params.sigma_delay != pde.params.sigma_delay:
        problems.append(f"delay differs: ode sigma={ode.params.sigma_delay} vs pde sigma={pde.params.sigma_delay}")
    ode_s = ode.raw_schedule().map(_compare_view)
    pde_s = pde.raw_schedule().map(_compare_view)
    if ode_s.initial != pde_s.initial:
        diff = [k for k, v in ode_s.initial.to_dict().items()
                if v != getattr(pde_s.initial, k) and k != "sigma_delay"]
        if diff:
            problems.append(f"parameters differ (as printed): {', '.join(diff)}")
    elif ode_s != pde_s:
        problems.append("schedules differ: "
                        f"ode events at {[t for t, _ in ode_s.breakpoints[1:]]}, "
                        f"pde events at {[t for t, _ in pde_s.breakpoints[1:]]}")
    if (ode.grid.t0, ode.grid.t_end, ode.grid.dt) != (pde.grid.t0, pde.grid.t_end, pde.grid.dt):
        problems.append(f"time grids differ: ode {ode.grid} vs pde {pde.grid}")
    if pde.params.allee_A > 0:
        problems.append("the pde uses an Allee threshold (A > 0); the ODE has no counterpart")
    return problems


def compare_runs(ode, pde, match_initial: bool = False):
    """Run both scenarios and return ``(times, ode_scaled, pde_totals, metrics)``.

    The ODE, solved in persons with contact rates divided by ``normalize_by``,
    is divided by ``normalize_by`` to put it in the PDE's units.  With
    ``match_initial`` the ODE starts from the PDE's integrated initial totals.
    """
    scale = ode.normalize_by or 1.0
    if match_initial:
        totals0 = pde.initial_state() @ pde1d.Grid1D(pde.nx).weights
        ode = dataclasses.replace(ode, initial={k: float(v) * scale for k, v in zip(SIRD, totals0)})
    r_ode = simulate(ode)
    r_pde = simulate(pde)
    n = min(len(r_ode.times), len(r_pde.times))
    t = r_pde.times[:n]
    a = r_ode.totals[:n] / scale
    b = r_pde.totals[:n]
    d_scale = np.max(np.abs(b[:, 3]))
    peak_ode = analysis.peak(t, a[:, 1])
    peak_pde = analysis.peak(t, b[:, 1])
    metrics = {
        "max_rel_state_diff": float(np.max(analysis.relative_state_error(a, b))),
        "max_rel_d_diff": float(np.max(np.abs(a[:, 3] - b[:, 3])) / d_scale) if d_scale > 0 else 0.0,
        "peak_i_ode": peak_ode[0],
        "peak_i_pde": peak_pde[0],
        "peak_i_rel_diff": abs(peak_ode[0] - peak_pde[0]) / abs(peak_pde[0]),
        "peak_i_time_ode": peak_ode[1],
        "peak_i_time_pde": peak_pde[1],
        "final_d_ode": float(a[-1, 3]),
        "final_d_pde": float(b[-1, 3]),
    }
    return t, a, b, metrics


def cmd_compare(args) -> int:
    ode = load_scenario(resolve_config(args.ode_config))
    pde = load_scenario(resolve_config(args.pde_config))
    problems = compatibility_problems(ode, pde)
    if problems:
        raise ConfigError("incompatible scenarios:\n  " + "\n  ".join(problems))
    t, a, b, metrics = compare_runs(ode, pde, args.match_initial)
    out = _out_dir(args) / f"compare_{ode.label}__{pde.label}"
    out.mkdir(parents=True, exist_ok=True)
    cols = ["S", "I", "R", "D"]
    write_csv(out / "paired.csv", ["t"] + [f"{c}_ode" for c in cols] + [f"{c}_pde" for c in cols],
              np.column_stack([t, a, b]))
    (out / "metrics.txt").write_text("".join(f"{k} = {v!r}\n" for k, v in metrics.items()))
    verdict = "exact reduction" if metrics["max_rel_state_diff"] < 1e-6 else "approximation"
    print(f"{ode.label} vs {pde.label}: {verdict}; max_rel_state_diff={metrics['max_rel_state_diff']:.3e} "
          f"max_rel_d_diff={metrics['max_rel_d_diff']:.3e} peak_i_rel_diff={metrics['peak_i_rel_diff']:.3e} "
          f"-> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- sweep / list


def _sweep_one(config: str, out: str):
    try:
        s = load_scenario(resolve_config(config))
        art = write_outputs(simulate(s), out)
        return EXIT_OK, f"ok {s.label} instability={art.summary['instability']} -> {art.directory}"
    except ConfigError as e:
        return EXIT_CONFIG, f"config-error {config}: {e}"
    except ConvergenceError as e:
        return EXIT_DIVERGED, f"diverged {config}: {e}"
    except OSError as e:
        return EXIT_IO, f"io-error {config}: {e}"


def cmd_sweep(args) -> int:
    configs = list(args.configs)
    if args.all:
        configs += [str(p) for p in shipped_scenarios()]
    if not configs:
        raise ConfigError("no scenarios given (pass config paths or --all)")
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
    out = str(_out_dir(args))
    if args.jobs == 1:
        results = [_sweep_one(c, out) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, configs, [out] * len(configs)))
    for _, line in results:
        print(line)
    return max(code for code, _ in results)


def cmd_list(args) -> int:
    for p in shipped_scenarios():
        s = load_scenario(p)
        print(f"{p.stem:40s} {s.model:18s} {s.description}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ddepi", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario and write totals, summary and snapshots")
    r.add_argument("--config", required=True, help="scenario file, or the name of a shipped scenario")
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./ddepi_out)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("stability", help="stability verdict, characteristic roots and boundary curve",
                       description="Give either --point a,b (use --point=-a,b for negative a) "
                                   "or --phi-r/--phi-d/--sigma.")
    s.add_argument("--point", help="scaled point a,b of y' = a y(t) + b y(t-1)")
    s.add_argument("--phi-r", type=float)
    s.add_argument("--phi-d", type=float)
    s.add_argument("--sigma", type=float, help="incubation delay (days)")
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--alpha", type=float, default=0.0)
    s.add_argument("--beta-e", type=float, default=0.0, help="only used by the contractivity check")
    s.add_argument("--beta-i", type=float, default=0.0, help="only used by the contractivity check")
    s.add_argument("--allee-A", type=float, default=0.0, help="> 0 adds the contractivity check")
    s.add_argument("--k-max", type=int, default=stability.K_MAX)
    s.add_argument("--boundary-samples", type=int, default=400)
    s.add_argument("--out", help="directory for roots.csv and boundary.csv")
    s.set_defaults(func=cmd_stability)

    c = sub.add_parser("compare", help="ODE vs spatially integrated PDE")
    c.add_argument("--ode-config", required=True)
    c.add_argument("--pde-config", required=True)
    c.add_argument("--match-initial", action="store_true",
                   help="start the ODE from the PDE's integrated initial totals")
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    w = sub.add_parser("sweep", help="run several scenarios concurrently")
    w.add_argument("configs", nargs="*")
    w.add_argument("--all", action="store_true", help="include every shipped scenario")
    w.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    ls = sub.add_parser("list-scenarios", help="list shipped scenarios")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"ddepi: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as e:
        print(f"ddepi: solver diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as e:
        print(f"ddepi: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
