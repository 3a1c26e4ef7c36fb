"""Scenario files: load, validate, run, and write outputs.

A scenario file is JSON with four sections::

    {
      "label": "ode_table1_sigma5",
      "description": "...",                 # optional
      "model": {
        "type": "delay_sird_ode",           # | seird_ode | linearized_dde | delay_sird_pde1d
        "params": {"beta_e": 0.225, ...},   # ModelParams fields (contact rates unnormalized)
        "normalize_by": 1000,               # optional; divides beta_e, beta_i (ODE models)
        "initial": {"s": 999, "i": 1}       # constant history; PDE: {"profile": "two_centre"}
      },                                    #   or {"profile": "uniform", "s": .., "i": ..}
      "grid": {"t0": 0, "t_end": 267, "dt": 0.25, "nx": 2000},   # nx: PDE only
      "schedule": [{"t": 30, "scale": {"beta_e": 0.25}, "set": {}}],
      "output": {"snapshots": [0, 140, 267], "allow_divergence": false}
    }

Schedule events apply cumulatively: each one scales (then overwrites) the
parameter set in force just before it.  Outputs of a run land in
``<out>/<label>/``: ``totals.csv``, ``summary.txt``, ``plot.gp`` and, for the
PDE, ``snapshots/t<time>.csv``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, integrator, pde1d, stability
from .core import (ConfigError, ConvergenceError, ModelParams, ParamSchedule, TimeGrid,
                   delay_steps, normalize_ode_params, schedule_from_events)
from .models import LINEARIZED, SEIRD, SIRD, DelaySirdRhs, LinearizedDelayRhs, SeirdRhs

MODELS = ("delay_sird_ode", "seird_ode", "delay_sird_pde1d", "linearized_dde")
_STATE_KEYS = {
    "delay_sird_ode": SIRD,
    "seird_ode": SEIRD,
    "linearized_dde": LINEARIZED,
    "delay_sird_pde1d": SIRD,
}
_PARAM_NAMES = {f.name for f in dataclasses.fields(ModelParams)}


class ScenarioDiverged(ConvergenceError):
    def __init__(self, label: str, err: ConvergenceError):
        self.label = label
        RuntimeError.__init__(self, f"[{label}] {err}")
        self.t, self.residual, self.iterations = err.t, err.residual, err.iterations


@dataclass(frozen=True)
class ScheduleEvent:
    t: float
    scale: dict = field(default_factory=dict)
    set: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OutputSpec:
    snapshots: tuple = ()
    allow_divergence: bool = False


@dataclass(frozen=True)
class Scenario:
    label: str
    model: str
    params: ModelParams
    grid: TimeGrid
    initial: dict
    schedule: tuple = ()
    normalize_by: float | None = None
    nx: int | None = None
    output: OutputSpec = OutputSpec()
    description: str = ""

    @property
    def is_pde(self) -> bool:
        return self.model == "delay_sird_pde1d"

    @property
    def columns(self) -> tuple[str, ...]:
        return _STATE_KEYS[self.model]

    def raw_schedule(self) -> ParamSchedule:
        """Schedule with parameters as printed (no normalization)."""
        return schedule_from_events(self.params, [(e.t, e.scale, e.set) for e in self.schedule])

    def param_schedule(self) -> ParamSchedule:
        """Schedule used by the solver (contact rates normalized if requested)."""
        sched = self.raw_schedule()
        if self.normalize_by is not None:
            sched = sched.map(lambda p: normalize_ode_params(p, self.normalize_by))
        return sched

    def initial_state(self) -> np.ndarray:
        if self.is_pde:
            grid = pde1d.Grid1D(self.nx)
            if self.initial.get("profile", "two_centre") == "two_centre":
                return pde1d.initial_conditions(grid)
            return pde1d.uniform_state(grid, *(float(self.initial.get(k, 0.0)) for k in SIRD))
        vals = {k: float(self.initial.get(k, 0.0)) for k in self.columns}
        if "n0" in self.initial:
            vals["s"] = float(self.initial["n0"]) - sum(vals.get(k, 0.0) for k in ("e", "i", "r"))
        return np.array([vals[k] for k in self.columns])

    @property
    def n0(self) -> float:
        u = self.initial_state()
        if self.is_pde:
            return float(pde1d.integrate_field(u[:3].sum(axis=0), pde1d.Grid1D(self.nx)))
        if self.model == "linearized_dde":
            return float(u[0])
        return float(u[:-1].sum())

    def to_dict(self) -> dict:
        model = {"type": self.model, "params": self.params.to_dict(), "initial": dict(self.initial)}
        if self.normalize_by is not None:
            model["normalize_by"] = self.normalize_by
        grid = {"t0": self.grid.t0, "t_end": self.grid.t_end, "dt": self.grid.dt}
        if self.nx is not None:
            grid["nx"] = self.nx
        out = {"label": self.label}
        if self.description:
            out["description"] = self.description
        out.update(
            model=model,
            grid=grid,
            schedule=[{"t": e.t, "scale": dict(e.scale), "set": dict(e.set)} for e in self.schedule],
            output={"snapshots": list(self.output.snapshots), "allow_divergence": self.output.allow_divergence},
        )
        return out


# ---------------------------------------------------------------- loading


def _number(errors, path, value, positive=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        errors.append(f"{path}: expected a finite number, got {value!r}")
        return None
    if positive and value <= 0:
        errors.append(f"{path}: must be > 0, got {value!r}")
        return None
    return float(value)


def _param_dict(errors, path, d):
    if not isinstance(d, dict):
        errors.append(f"{path}: expected an object")
        return {}
    out = {}
    for k, v in d.items():
        if k not in _PARAM_NAMES:
            errors.append(f"{path}.{k}: unknown parameter")
            continue
        x = _number(errors, f"{path}.{k}", v)
        if x is not None and x < 0:
            errors.append(f"{path}.{k}: must be >= 0, got {v!r}")
        elif x is not None:
            out[k] = x
    return out


def scenario_from_dict(data: dict) -> Scenario:
    """Validate a parsed scenario document; all problems are reported at once."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError("scenario document must be a JSON object")
    unknown = set(data) - {"label", "description", "model", "grid", "schedule", "output"}
    errors += [f"{k}: unknown section" for k in sorted(unknown)]

    label = data.get("label")
    if not isinstance(label, str) or not label or "/" in label:
        errors.append(f"label: expected a non-empty name without '/', got {label!r}")

    model = data.get("model") if isinstance(data.get("model"), dict) else None
    if model is None:
        errors.append("model: missing section")
        model = {}
    mtype = model.get("type")
    if mtype not in MODELS:
        errors.append(f"model.type: expected one of {', '.join(MODELS)}, got {mtype!r}")

    params = None
    pdict = _param_dict(errors, "model.params", model.get("params", {}))
    try:
        params = ModelParams(**pdict)
    except ConfigError as e:
        errors.append(f"model.params: {e}")

    normalize_by = _number(errors, "model.normalize_by", model.get("normalize_by"), positive=True, allow_none=True)
    if normalize_by is not None and mtype == "delay_sird_pde1d":
        errors.append("model.normalize_by: not applicable to the PDE model")

    initial = model.get("initial", {})
    if not isinstance(initial, dict):
        errors.append("model.initial: expected an object")
        initial = {}
    if mtype in _STATE_KEYS:
        allowed = set(_STATE_KEYS[mtype])
        if mtype == "delay_sird_pde1d":
            allowed |= {"profile"}
            prof = initial.get("profile", "two_centre")
            if prof not in ("two_centre", "uniform"):
                errors.append(f"model.initial.profile: expected 'two_centre' or 'uniform', got {prof!r}")
        elif mtype != "linearized_dde":
            allowed |= {"n0"}
        for k, v in initial.items():
            if k not in allowed:
                errors.append(f"model.initial.{k}: not a state of {mtype}")
            elif k != "profile":
                _number(errors, f"model.initial.{k}", v)

    g = data.get("grid") if isinstance(data.get("grid"), dict) else None
    grid = nx = None
    if g is None:
        errors.append("grid: missing section")
    else:
        t0 = _number(errors, "grid.t0", g.get("t0", 0.0))
        t_end = _number(errors, "grid.t_end", g.get("t_end"))
        dt = _number(errors, "grid.dt", g.get("dt"), positive=True)
        if None not in (t0, t_end, dt):
            try:
                grid = TimeGrid(t0, t_end, dt)
            except ConfigError as e:
                errors.append(f"grid: {e}")
        if "nx" in g:
            nx = g["nx"]
            if isinstance(nx, bool) or not isinstance(nx, int) or nx < 2:
                errors.append(f"grid.nx: expected an integer >= 2, got {nx!r}")
                nx = None
        if mtype == "delay_sird_pde1d" and nx is None and "nx" not in g:
            nx = pde1d.N_DEFAULT
        if mtype != "delay_sird_pde1d" and "nx" in g:
            errors.append("grid.nx: only meaningful for delay_sird_pde1d")

    if params is not None and grid is not None and mtype in ("delay_sird_ode", "delay_sird_pde1d", "linearized_dde"):
        try:
            delay_steps(params.sigma_delay, grid.dt)
        except ConfigError as e:
            errors.append(f"model.params.sigma_delay: {e}")

    events = []
    sched = data.get("schedule", [])
    if not isinstance(sched, list):
        errors.append("schedule: expected a list")
        sched = []
    last = -math.inf
    for k, ev in enumerate(sched):
        path = f"schedule[{k}]"
        if not isinstance(ev, dict):
            errors.append(f"{path}: expected an object")
            continue
        extra = set(ev) - {"t", "scale", "set"}
        errors += [f"{path}.{x}: unknown key" for x in sorted(extra)]
        t = _number(errors, f"{path}.t", ev.get("t"))
        if t is not None:
            if t < 0:
                errors.append(f"{path}.t: must be >= 0")
            if t <= last:
                errors.append(f"{path}.t: times must be strictly increasing")
            last = t
        scale = _param_dict(errors, f"{path}.scale", ev.get("scale", {}))
        values = _param_dict(errors, f"{path}.set", ev.get("set", {}))
        if "sigma_delay" in scale or "sigma_delay" in values:
            errors.append(f"{path}: the delay cannot change during a run")
        if t is not None:
            events.append(ScheduleEvent(t, scale, values))

    o = data.get("output", {})
    output = OutputSpec()
    if not isinstance(o, dict):
        errors.append("output: expected an object")
    else:
        snaps = o.get("snapshots", [])
        if not isinstance(snaps, list):
            errors.append("output.snapshots: expected a list of times")
            snaps = []
        snaps = [_number(errors, f"output.snapshots[{k}]", v) for k, v in enumerate(snaps)]
        if snaps and mtype != "delay_sird_pde1d":
            errors.append("output.snapshots: only available for the PDE model")
        if grid is not None:
            for k, s in enumerate(snaps):
                if s is not None and not (grid.t0 <= s <= grid.t_end and
                                          math.isclose((s - grid.t0) / grid.dt, round((s - grid.t0) / grid.dt), abs_tol=1e-9)):
                    errors.append(f"output.snapshots[{k}]: {s} is not a grid time in [{grid.t0}, {grid.t_end}]")
        allow = o.get("allow_divergence", False)
        if not isinstance(allow, bool):
            errors.append("output.allow_divergence: expected true/false")
            allow = False
        output = OutputSpec(tuple(s for s in snaps if s is not None), allow)

    description = data.get("description", "")
    if not isinstance(description, str):
        errors.append("description: expected a string")

    if errors:
        raise ConfigError("invalid scenario:\n  " + "\n  ".join(errors))
    return Scenario(
        label=label, model=mtype, params=params, grid=grid, initial=dict(initial),
        schedule=tuple(events), normalize_by=normalize_by, nx=nx if mtype == "delay_sird_pde1d" else None,
        output=output, description=description,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such scenario file") from None
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: parse error at line {e.lineno} column {e.colno}: {e.msg}") from None
    try:
        return scenario_from_dict(data)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None


def dump_scenario(s: Scenario) -> str:
    return json.dumps(s.to_dict(), indent=2) + "\n"


def write_scenario(s: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(dump_scenario(s))
    return path


def shipped_dir() -> Path:
    return Path(str(resources.files("ddepi") / "scenarios"))


def shipped_scenarios() -> list[Path]:
    return sorted(shipped_dir().glob("*.cfg"))


def resolve_config(name) -> Path:
    """A path as given, else the shipped scenario of that name (with or without ``.cfg``)."""
    p = Path(name)
    if p.exists():
        return p
    for cand in (shipped_dir() / p.name, shipped_dir() / f"{p.name}.cfg"):
        if cand.exists():
            return cand
    return p


# ---------------------------------------------------------------- running


@dataclass
class RunResult:
    """Solver output before anything is written to disk."""

    scenario: Scenario
    times: np.ndarray
    totals: np.ndarray  # (n_times, len(columns))
    snapshots: dict = field(default_factory=dict)
    diverged_at: float | None = None

    @property
    def columns(self) -> tuple[str, ...]:
        return self.scenario.columns

    def series(self, name: str) -> np.ndarray:
        return self.totals[:, self.columns.index(name)]


@dataclass
class RunArtifacts:
    label: str
    directory: Path
    totals_csv: Path
    summary_txt: Path
    snapshot_csvs: list
    summary: dict
    result: RunResult


def _build_system(s: Scenario):
    sched = s.param_schedule()
    if s.model == "delay_sird_ode":
        return DelaySirdRhs(sched)
    if s.model == "seird_ode":
        return SeirdRhs(sched)
    if s.model == "linearized_dde":
        return LinearizedDelayRhs(sched)
    return pde1d.PdeSystem(sched, pde1d.Grid1D(s.nx))


def simulate(s: Scenario, tol: float = integrator.PICARD_TOL) -> RunResult:
    """Run the solver for ``s``; PDE runs keep only totals and snapshots."""
    system = _build_system(s)
    u0 = s.initial_state()
    n_total = s.grid.n_steps + 1
    totals = np.empty((n_total, len(s.columns)))
    snaps = {}
    want = {round((t - s.grid.t0) / s.grid.dt): t for t in s.output.snapshots}
    weights = pde1d.Grid1D(s.nx).weights if s.is_pde else None
    last = -1
    diverged_at = None
    try:
        for n, t, u in integrator.steps(system, integrator.constant_history(u0), s.grid, tol):
            totals[n] = u @ weights if s.is_pde else u
            if n in want:
                snaps[want[n]] = u.copy()
            last = n
    except ConvergenceError as e:
        if not s.output.allow_divergence:
            raise ScenarioDiverged(s.label, e) from e
        diverged_at = e.t
    return RunResult(s, s.grid.times[: last + 1], totals[: last + 1], snaps, diverged_at)


def _stability_summary(p: ModelParams, model: str) -> dict:
    out = {}
    if model == "seird_ode" or p.sigma_delay <= 0:
        return out
    thm = stability.theorem31_check(p)
    out["theorem_verdict"] = thm.label
    out["theorem_margin"] = thm.margin
    point = stability.decoupled_point(p)
    root = stability.is_stable(point)
    rightmost = stability.characteristic_roots(point).rightmost
    out["char_point"] = f"{point.a!r},{point.b!r}"
    out["rightmost_root"] = f"{rightmost.real!r}{rightmost.imag:+.17g}j"
    out["root_verdict"] = root.label
    out["oscillatory"] = "yes" if thm.oscillatory else "no"
    if model == "delay_sird_pde1d" and p.allee_A > 0:
        out["contractivity_verdict"] = stability.contractivity_check(p).label
    return out


def summarize(result: RunResult) -> dict:
    s = result.scenario
    t = result.times
    summary = {"label": s.label, "model": s.model}
    params_final = s.param_schedule()(float(t[-1]))
    summary.update({f"initial_{k}": v for k, v in _stability_summary(s.param_schedule().initial, s.model).items()})
    if params_final != s.param_schedule().initial:
        summary.update({f"final_{k}": v for k, v in _stability_summary(params_final, s.model).items()})
    for k, name in enumerate(result.columns):
        v, tp = analysis.peak(t, result.totals[:, k])
        summary[f"peak_{name}"] = v
        summary[f"peak_{name}_time"] = tp
    for k, name in enumerate(result.columns):
        summary[f"final_{name}"] = float(result.totals[-1, k])
    neg = [(analysis.first_negative(t, result.totals[:, k]), name) for k, name in enumerate(result.columns)]
    neg = [x for x in neg if x[0] is not None]
    if neg:
        tn, name = min(neg)
        summary["first_negative"] = f"{name}@{tn!r}"
    else:
        summary["first_negative"] = "never"
    if "d" in result.columns and len(t) > 3:
        ratios = analysis.envelope_ratios(t[1:], analysis.increments(result.series("d")))
        summary["d_increment_envelope_ratios"] = " ".join(f"{r:.6g}" for r in ratios) or "-"
        trend = analysis.envelope_trend(ratios)
        summary["d_increment_envelope"] = trend
    else:
        trend = "none"
    theorem_unstable = summary.get("initial_theorem_verdict") == "UNSTABLE" or summary.get("final_theorem_verdict") == "UNSTABLE"
    summary["diverged_at"] = result.diverged_at if result.diverged_at is not None else "never"
    summary["instability"] = "yes" if (theorem_unstable or trend == "growing" or result.diverged_at is not None) else "no"
    return summary


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def totals_table(result: RunResult):
    """Header and rows for ``totals.csv`` (upper-case compartment names plus N)."""
    cols = result.columns
    header = ["t"] + [c.upper() for c in cols]
    rows = result.totals
    if "n" not in cols:
        living = [k for k, c in enumerate(cols) if c != "d"]
        header.append("N")
        rows = np.column_stack([rows, rows[:, living].sum(axis=1)])
    return header, np.column_stack([result.times, rows])


_PLOT_SCRIPT = """# gnuplot script; run from this directory: gnuplot plot.gp
set datafile separator ','
set key autotitle columnhead
set xlabel 'days'
set terminal pngcairo size 1000,700
set output 'totals.png'
plot {series}
"""


def write_outputs(result: RunResult, out_dir) -> RunArtifacts:
    s = result.scenario
    d = Path(out_dir) / s.label
    d.mkdir(parents=True, exist_ok=True)
    header, table = totals_table(result)
    totals_csv = write_csv(d / "totals.csv", header, table)
    snaps = []
    if result.snapshots:
        sd = d / "snapshots"
        sd.mkdir(exist_ok=True)
        x = pde1d.Grid1D(s.nx).x
        for t, u in sorted(result.snapshots.items()):
            snaps.append(write_csv(sd / f"t{t:08.2f}.csv", ["x", "s", "i", "r", "d"], np.column_stack([x, u.T])))
    summary = summarize(result)
    summary_txt = d / "summary.txt"
    summary_txt.write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in summary.items()))
    series = ", ".join(f"'totals.csv' using 1:{k + 2} with lines" for k in range(len(header) - 1))
    (d / "plot.gp").write_text(_PLOT_SCRIPT.format(series=series))
    return RunArtifacts(s.label, d, totals_csv, summary_txt, snaps, summary, result)


def run_scenario(s: Scenario, out_dir) -> RunArtifacts:
    """Simulate ``s`` and write ``<out_dir>/<label>/{totals.csv,summary.txt,plot.gp,snapshots/}``."""
    return write_outputs(simulate(s), out_dir)
