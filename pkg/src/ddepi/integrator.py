"""Fixed-step BDF2 method of steps for systems with a single constant delay.

A *system* is any object exposing

``delay``
    the constant lag (0 for an ordinary ODE),
``rhs(t, u, u_lag)``
    the right-hand side ``F(t, u(t), u(t - delay))``.

It may also provide ``picard_update(t, u, u_lag, known, gamma)`` returning the
next fixed-point iterate for the stage equation ``u = known + gamma * F(t, u, u_lag)``.
Without it the plain Picard map ``known + gamma * F(t, u, u_lag)`` is used.

The delay must be a whole number ``m`` of steps, so the delayed argument of
step ``n`` is always the stored state ``u^{n-m}`` (or a history sample), never an
interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .core import ConvergenceError, TimeGrid, delay_steps

PICARD_TOL = 1e-10
PICARD_MAX_ITER = 100
ANDERSON_DEPTH = 5

HistoryFunction = Callable[[float], np.ndarray]


def constant_history(state) -> HistoryFunction:
    """History equal to ``state`` on the whole initial interval."""
    value = np.array(state, dtype=float)
    value.setflags(write=False)

    def history(t: float) -> np.ndarray:
        return value

    return history


class HistoryBuffer:
    """Ring buffer of the most recent computed states plus the sampled history.

    Index ``k >= 0`` addresses the computed state ``u^k``; ``k < 0`` addresses the
    history function sampled at ``t0 + k*dt``.
    """

    def __init__(self, history: HistoryFunction, dt: float, m: int, t0: float = 0.0, capacity: int | None = None):
        self.m = int(m)
        self.dt = dt
        self.t0 = t0
        # BDF2 also needs u^{n-1}, u^{n-2}.
        self.capacity = capacity if capacity is not None else max(self.m, 2) + 1
        self._ring: list = [None] * self.capacity
        self._count = 0
        self._history = [np.asarray(history(t0 + k * dt), dtype=float) for k in range(-self.m, 0)]

    def __len__(self) -> int:
        return self._count

    def push(self, state: np.ndarray) -> None:
        self._ring[self._count % self.capacity] = state
        self._count += 1

    def __getitem__(self, k: int) -> np.ndarray:
        if k < 0:
            if k < -self.m:
                raise IndexError(f"history index {k} precedes the initial interval [-{self.m}, 0)")
            return self._history[k + self.m]
        if k >= self._count or k < self._count - self.capacity:
            raise IndexError(
                f"state u^{k} not in buffer (holds u^{max(self._count - self.capacity, 0)}"
                f"..u^{self._count - 1}); buffer sizing bug"
            )
        return self._ring[k % self.capacity]


def delayed_lookup(buf: HistoryBuffer, n: int, m: int) -> np.ndarray:
    """State ``u^{n-m}``: a stored step or, for ``n < m``, the sampled history."""
    return buf[n - m]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __iter__(self):
        return iter(zip(self.times, self.states))

    def __len__(self):
        return len(self.times)


def _picard(system, t, guess, u_lag, known, gamma, tol, max_iter, depth=0):
    """Fixed-point iteration on the Picard map, Anderson-mixed over the last
    ``depth`` iterates (``depth=0`` is the plain iteration).

    The returned value is always an image of the Picard map itself.
    """
    update = getattr(system, "picard_update", None)

    def picard_map(v):
        if update is not None:
            return update(t, v, u_lag, known, gamma)
        return known + gamma * system.rhs(t, v, u_lag)

    x = guess
    g = picard_map(x)
    f_hist, g_hist = [], []
    inc = np.inf
    for it in range(1, max_iter + 1):
        if not np.all(np.isfinite(g)):
            raise ConvergenceError(t, float("nan"), it)
        f = g - x
        inc_abs = np.max(np.abs(f))
        scale = np.max(np.abs(g))
        inc = inc_abs / scale if scale > 0 else inc_abs
        if inc_abs <= tol * scale:
            return g
        if depth:
            f_hist.append(f.ravel())
            g_hist.append(g.ravel())
            if len(f_hist) > depth + 1:
                del f_hist[0], g_hist[0]
        if len(f_hist) > 1:
            d_f = np.diff(np.asarray(f_hist), axis=0).T
            d_g = np.diff(np.asarray(g_hist), axis=0).T
            coef = np.linalg.lstsq(d_f, f_hist[-1], rcond=None)[0]
            x = (g_hist[-1] - d_g @ coef).reshape(g.shape)
        else:
            x = g
        g = picard_map(x)
    raise ConvergenceError(t, float(inc), max_iter)


def steps(system, history: HistoryFunction, grid: TimeGrid, tol: float = PICARD_TOL,
          max_iter: int = PICARD_MAX_ITER, anderson_depth: int = ANDERSON_DEPTH) -> Iterator[tuple[int, float, np.ndarray]]:
    """Yield ``(n, t_n, u^n)`` for ``n = 0..grid.n_steps``.

    Step 1 is implicit Euler, later steps BDF2; each implicit stage is solved
    by (Anderson-mixed) Picard iteration until the relative increment drops
    below ``tol``.
    Only ``O(m)`` states are retained, so long PDE runs stay cheap in memory.
    """
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    delay = float(getattr(system, "delay", 0.0))
    m = delay_steps(delay, grid.dt) if delay > 0 else 0
    dt = grid.dt

    buf = HistoryBuffer(history, dt, m, t0=grid.t0)
    u0 = np.array(history(grid.t0), dtype=float)
    buf.push(u0)
    yield 0, grid.t0, u0

    for n in range(1, grid.n_steps + 1):
        t = grid.time(n)
        u_lag = delayed_lookup(buf, n, m) if m else None
        prev = buf[n - 1]
        if n == 1:
            known, gamma = prev, dt
        else:
            known, gamma = (4.0 * prev - buf[n - 2]) / 3.0, 2.0 * dt / 3.0
        u = _picard(system, t, prev, u_lag, known, gamma, tol, max_iter, anderson_depth)
        buf.push(u)
        yield n, t, u


def integrate(system, history: HistoryFunction, grid: TimeGrid, tol: float = PICARD_TOL,
              max_iter: int = PICARD_MAX_ITER, anderson_depth: int = ANDERSON_DEPTH) -> Trajectory:
    """Integrate ``system`` over ``grid`` and return all ``n_steps + 1`` states."""
    times = grid.times
    states = None
    for n, _, u in steps(system, history, grid, tol, max_iter, anderson_depth):
        if states is None:
            states = np.empty((grid.n_steps + 1,) + u.shape)
        states[n] = u
    return Trajectory(times, states)


class ScalarDde:
    """``y'(t) = a*y(t) + b*y(t - delay)``; a test and analysis workhorse."""

    def __init__(self, a: float, b: float, delay: float):
        self.a, self.b, self.delay = a, b, delay

    def rhs(self, t, u, u_lag):
        out = self.a * u
        if u_lag is not None:
            out = out + self.b * u_lag
        return out
