"""1D delay reaction-diffusion SIRD model on [0, 1] with no-flux boundaries.

Nodes ``x_j = j*dx`` (``j = 0..N``) each own a control volume of width ``dx``,
halved at the two boundary nodes; those volumes are exactly the trapezoid
weights, so the discrete diffusion operator conserves the trapezoid total to
rounding error.

A state is an array of shape ``(4, N + 1)`` holding the ``s, i, r, d`` fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import integrator
from .core import ModelParams, ParamSchedule, TimeGrid

N_DEFAULT = 2000
N_FLOOR = 1e-12
COMPONENTS = ("s", "i", "r", "d")


@dataclass(frozen=True)
class Grid1D:
    n_cells: int = N_DEFAULT

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError(f"need at least 2 cells, got {self.n_cells}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_cells + 1)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.n_cells + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


def susceptible_profile(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (
        np.exp(-(x + 1.0) ** 4)
        + np.exp(-(x - 0.35) ** 2 / 1e-2)
        + (np.exp(-(x - 0.62) ** 4 / 1e-5)
           + np.exp(-(x - 0.52) ** 4 / 1e-5)
           + np.exp(-(x - 0.42) ** 4 / 1e-5)) / 8.0
        + np.exp(-(x - 0.735) ** 4 / 1e-5) / 4.0
    )


def infected_profile(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.exp(-(x - 0.75) ** 4 / 1e-5) / 20.0 + np.exp(-(x - 0.55) ** 4 / 1e-5) / 200.0


def initial_conditions(grid: Grid1D = Grid1D()) -> np.ndarray:
    """Two-centre population with an outbreak seeded in the lesser centre."""
    x = grid.x
    u = np.zeros((4, x.size))
    u[0] = susceptible_profile(x)
    u[1] = infected_profile(x)
    return u


def uniform_state(grid: Grid1D, s: float, i: float, r: float = 0.0, d: float = 0.0) -> np.ndarray:
    return np.outer([s, i, r, d], np.ones(grid.n_cells + 1))


def integrate_field(u, grid_or_dx) -> float:
    """Trapezoidal integral over [0, 1]."""
    u = np.asarray(u, dtype=float)
    if isinstance(grid_or_dx, Grid1D):
        w = grid_or_dx.weights
    else:
        w = np.full(u.shape[-1], float(grid_or_dx))
        w[0] = w[-1] = 0.5 * float(grid_or_dx)
    return u @ w


def _face_conductance(n: np.ndarray, nu: float, dx: float) -> np.ndarray:
    # n < 0 (nonphysical excursions) would turn the flux into backward diffusion
    return nu * np.maximum(0.5 * (n[:-1] + n[1:]), 0.0) / dx


def diffusion_operator(u, n, nu: float, dx: float) -> np.ndarray:
    """Conservative approximation of ``d/dx(nu * n * du/dx)`` with zero boundary flux.

    Face fluxes use the arithmetic mean of ``n``; boundary nodes divide by
    their half-width control volume.
    """
    u = np.asarray(u, dtype=float)
    n = np.asarray(n, dtype=float)
    if u.shape != n.shape:
        raise ValueError(f"field shapes differ: {u.shape} vs {n.shape}")
    flux = _face_conductance(n, nu, dx) * (u[1:] - u[:-1])
    out = np.zeros_like(u)
    out[:-1] += flux
    out[1:] -= flux
    out /= dx
    out[0] *= 2.0
    out[-1] *= 2.0
    return out


def _implicit_diffusion_solve(rhs: np.ndarray, n: np.ndarray, nu: float, dx: float, gamma: float) -> np.ndarray:
    """Solve ``(I - gamma*L(n)) u = rhs`` for the tridiagonal diffusion operator."""
    if nu == 0.0:
        return rhs.copy()
    c = gamma * _face_conductance(n, nu, dx)
    vol = np.full(rhs.size, dx)
    vol[0] = vol[-1] = 0.5 * dx
    ab = np.zeros((3, rhs.size))
    ab[0, 1:] = -c / vol[:-1]
    ab[2, :-1] = -c / vol[1:]
    ab[1] = 1.0
    ab[1, :-1] += c / vol[:-1]
    ab[1, 1:] += c / vol[1:]
    return solve_banded((1, 1), ab, rhs, overwrite_ab=True, check_finite=False)


def allee_factor(n: np.ndarray, A: float) -> np.ndarray | float:
    if A == 0.0:
        return 1.0
    return 1.0 - A / np.maximum(n, N_FLOOR)


def reaction_terms(u: np.ndarray, u_lag: np.ndarray, p: ModelParams) -> np.ndarray:
    s, i, r, _ = u
    i_lag = u_lag[1]
    n = s + i + r
    contact = allee_factor(n, p.allee_A) * s * (p.beta_e * i + p.beta_i * i_lag)
    out = np.empty_like(u)
    out[0] = p.alpha * n - contact - p.mu * s
    out[1] = contact - p.removal_rate * i_lag - p.mu * i
    out[2] = p.phi_r * i_lag - p.mu * r
    out[3] = p.phi_d * i_lag
    return out


def _diffusivities(p: ModelParams):
    return (p.nu_s, p.nu_i, p.nu_r)


def pde_rhs(t, u, u_lag, p: ModelParams, dx: float) -> np.ndarray:
    """Semi-discrete right-hand side: pointwise reactions plus n-weighted diffusion of s, i, r."""
    out = reaction_terms(u, u_lag, p)
    n = u[0] + u[1] + u[2]
    for k, nu in enumerate(_diffusivities(p)):
        if nu:
            out[k] += diffusion_operator(u[k], n, nu, dx)
    return out


class PdeSystem:
    """Semi-discrete system for :mod:`ddepi.integrator`.

    The Picard map treats diffusion implicitly with ``n`` frozen at the current
    iterate and reactions explicitly at the current iterate.
    """

    components = COMPONENTS

    def __init__(self, schedule: ParamSchedule, grid: Grid1D):
        if isinstance(schedule, ModelParams):
            schedule = ParamSchedule.constant(schedule)
        self.schedule = schedule
        self.grid = grid
        self.delay = schedule.initial.sigma_delay

    def rhs(self, t, u, u_lag):
        return pde_rhs(t, u, u_lag, self.schedule(t), self.grid.dx)

    def picard_update(self, t, u, u_lag, known, gamma):
        p = self.schedule(t)
        b = known + gamma * reaction_terms(u, u_lag, p)
        n = u[0] + u[1] + u[2]
        out = np.empty_like(u)
        for k, nu in enumerate(_diffusivities(p)):
            out[k] = _implicit_diffusion_solve(b[k], n, nu, self.grid.dx, gamma)
        out[3] = b[3]
        return out


@dataclass
class PdeResult:
    times: np.ndarray
    totals: np.ndarray  # (n_steps + 1, 4): integrated s, i, r, d
    snapshots: dict = field(default_factory=dict)  # t -> state
    grid: Grid1D = field(default_factory=Grid1D)


def run_pde(schedule: ParamSchedule, time_grid: TimeGrid, grid: Grid1D = Grid1D(),
            initial: np.ndarray | None = None, snapshot_times=(), tol: float = integrator.PICARD_TOL) -> PdeResult:
    """Integrate the PDE with constant-in-time history equal to ``initial``.

    Only integrated totals and the requested snapshots are kept.
    """
    if initial is None:
        initial = initial_conditions(grid)
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (4, grid.n_cells + 1):
        raise ValueError(f"initial state has shape {initial.shape}, expected {(4, grid.n_cells + 1)}")
    system = PdeSystem(schedule, grid)
    want = {round((t - time_grid.t0) / time_grid.dt): float(t) for t in snapshot_times}
    w = grid.weights
    totals = np.empty((time_grid.n_steps + 1, 4))
    snaps = {}
    for n, t, u in integrator.steps(system, integrator.constant_history(initial), time_grid, tol):
        totals[n] = u @ w
        if n in want:
            snaps[want[n]] = u.copy()
    return PdeResult(time_grid.times, totals, snaps, grid)
