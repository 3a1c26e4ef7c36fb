"""Parameter containers, time grids and piecewise-constant parameter schedules."""

from __future__ import annotations

import bisect
import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration: bad parameters, grids, schedules or scenario files."""


class ConvergenceError(RuntimeError):
    """The implicit stage solve did not converge."""

    def __init__(self, t: float, residual: float, iterations: int):
        self.t = t
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Picard iteration did not converge at t={t:g} "
            f"after {iterations} iterations (relative increment {residual:.3e})"
        )


@dataclass(frozen=True)
class ModelParams:
    """Rate constants shared by the delay SIRD, SEIRD and 1D PDE models.

    Contact rates ``beta_e`` and ``beta_i`` are kept as printed in the
    parameter tables (unnormalized); use :func:`normalize_ode_params` to
    divide them by the reference population for ODE runs.

    ``phi_e`` and ``sigma_rate`` are only read by the SEIRD baseline.
    ``allee_A`` and the ``nu_*`` diffusion coefficients are only read by the
    PDE solver.
    """

    alpha: float = 0.0
    mu: float = 0.0
    beta_e: float = 0.0
    beta_i: float = 0.0
    phi_r: float = 0.0
    phi_d: float = 0.0
    phi_e: float = 0.0
    sigma_rate: float = 0.0
    sigma_delay: float = 0.0
    allee_A: float = 0.0
    nu_s: float = 0.0
    nu_e: float = 0.0
    nu_i: float = 0.0
    nu_r: float = 0.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ConfigError(f"{f.name} must be a number, got {v!r}")
            if not math.isfinite(v):
                raise ConfigError(f"{f.name} must be finite, got {v!r}")
            if v < 0:
                raise ConfigError(f"{f.name} must be >= 0, got {v!r}")
            object.__setattr__(self, f.name, float(v))

    @property
    def removal_rate(self) -> float:
        return self.phi_d + self.phi_r

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def scaled(self, factors: dict) -> "ModelParams":
        """Return a copy with the named fields multiplied by the given factors."""
        return self.replace(**{k: getattr(self, k) * v for k, v in factors.items()})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown parameter(s): {', '.join(unknown)}")
        return cls(**data)


# Baseline rates; contact rates unnormalized, ODE runs divide them by n(0) = 1000.
TABLE1 = ModelParams(
    beta_e=9 / 40,
    beta_i=3 / 32,
    phi_r=1 / 32,
    phi_e=1 / 8,
    phi_d=3 / 640,
    mu=0.0,
    alpha=0.0,
    nu_s=3.75e-5,
    nu_e=0.75e-3,
    nu_i=0.75e-10,
    nu_r=3.75e-5,
)


def normalize_ode_params(p: ModelParams, n0: float) -> ModelParams:
    """Divide the contact rates by the reference population ``n0``."""
    if not n0 > 0:
        raise ConfigError(f"normalization population must be > 0, got {n0!r}")
    return p.replace(beta_e=p.beta_e / n0, beta_i=p.beta_i / n0)


class ParamSchedule:
    """Piecewise-constant parameters; entry k is in force on ``[t_k, t_{k+1})``."""

    def __init__(self, breakpoints: Iterable[tuple[float, ModelParams]]):
        bps = [(float(t), p) for t, p in breakpoints]
        if not bps:
            raise ConfigError("schedule needs at least one breakpoint")
        if bps[0][0] != 0.0:
            raise ConfigError(f"first schedule breakpoint must be at t=0, got {bps[0][0]}")
        times = [t for t, _ in bps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError(f"schedule times must be strictly increasing: {times}")
        self._times = tuple(times)
        self._params = tuple(p for _, p in bps)

    @classmethod
    def constant(cls, p: ModelParams) -> "ParamSchedule":
        return cls([(0.0, p)])

    @property
    def breakpoints(self) -> tuple[tuple[float, ModelParams], ...]:
        return tuple(zip(self._times, self._params))

    @property
    def initial(self) -> ModelParams:
        return self._params[0]

    def map(self, fn) -> "ParamSchedule":
        return ParamSchedule((t, fn(p)) for t, p in self.breakpoints)

    def __eq__(self, other):
        return isinstance(other, ParamSchedule) and self.breakpoints == other.breakpoints

    def __repr__(self):
        return f"ParamSchedule({list(self.breakpoints)!r})"

    def __call__(self, t: float) -> ModelParams:
        return params_at(self, t)


def params_at(schedule: ParamSchedule, t: float) -> ModelParams:
    """Parameter set of the last breakpoint with time <= t."""
    k = bisect.bisect_right(schedule._times, t) - 1
    if k < 0:
        raise ValueError(f"time before schedule start: t={t} < {schedule._times[0]}")
    return schedule._params[k]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t0, t0+dt, ..., t0+n_steps*dt``.

    ``t_end`` is snapped onto the grid (rounded to the nearest whole step).
    """

    t0: float
    t_end: float
    dt: float
    n_steps: int = dataclasses.field(init=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not self.t_end > self.t0:
            raise ConfigError(f"t_end must exceed t0 ({self.t_end} <= {self.t0})")
        n = round((self.t_end - self.t0) / self.dt)
        if n < 1:
            raise ConfigError("time grid must contain at least one step")
        object.__setattr__(self, "n_steps", int(n))
        object.__setattr__(self, "t_end", self.t0 + n * self.dt)

    def time(self, n: int) -> float:
        return self.t0 + n * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def delay_steps(self, delay: float) -> int:
        """Number of steps ``m`` spanning ``delay``; must be a positive integer."""
        return delay_steps(delay, self.dt)


def delay_steps(delay: float, dt: float) -> int:
    if not delay > 0:
        raise ConfigError(f"delay must be > 0, got {delay}")
    m = round(delay / dt)
    if m < 1 or not math.isclose(m * dt, delay, rel_tol=1e-12, abs_tol=1e-12):
        raise ConfigError(
            f"delay {delay} is not an integer multiple of dt={dt} "
            f"(ratio {delay / dt:.6g}); choose dt dividing the delay"
        )
    return int(m)


def schedule_from_events(base: ModelParams, events: Sequence[tuple[float, dict, dict]]) -> ParamSchedule:
    """Build a schedule from ``(t, scale, set)`` events applied cumulatively to ``base``.

    Each event multiplies fields by ``scale`` then overwrites fields from ``set``,
    starting from the parameter set in force just before it.
    """
    bps = [(0.0, base)]
    current = base
    for t, scale, values in events:
        current = current.scaled(dict(scale)).replace(**dict(values))
        if float(t) == 0.0:
            bps[0] = (0.0, current)
        else:
            bps.append((float(t), current))
    return ParamSchedule(bps)
