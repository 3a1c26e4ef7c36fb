"""Right-hand sides for the delay SIRD ODE, the SEIRD baseline and the linearization.

State layouts (all ``float`` arrays):

* delay SIRD: ``(s, i, r, d)``
* SEIRD: ``(s, e, i, r, d)``
* linearized delay system: ``(n, i, r, d)``
"""

from __future__ import annotations

import numpy as np

from .core import ModelParams, ParamSchedule

SIRD = ("s", "i", "r", "d")
SEIRD = ("s", "e", "i", "r", "d")
LINEARIZED = ("n", "i", "r", "d")


def delay_sird_rhs(t, u, u_lag, p: ModelParams) -> np.ndarray:
    s, i, r, d = u
    i_lag = u_lag[1]
    n = s + i + r
    contact = p.beta_e * s * i + p.beta_i * s * i_lag
    return np.array([
        p.alpha * n - contact - p.mu * s,
        contact - (p.phi_d + p.phi_r) * i_lag - p.mu * i,
        p.phi_r * i_lag - p.mu * r,
        p.phi_d * i_lag,
    ])


def seird_rhs(t, u, p: ModelParams) -> np.ndarray:
    """Non-delay SEIRD ODE; ``sigma_rate`` is the incubation *rate*."""
    s, e, i, r, d = u
    n = s + e + i + r
    contact = p.beta_i * s * i + p.beta_e * s * e
    return np.array([
        p.alpha * n - contact - p.mu * s,
        contact - (p.sigma_rate + p.phi_e + p.mu) * e,
        p.sigma_rate * e - (p.phi_d + p.phi_r + p.mu) * i,
        p.phi_r * i + p.phi_e * e - p.mu * r,
        p.phi_d * i,
    ])


def linearized_rhs(t, u, u_lag, p: ModelParams) -> np.ndarray:
    """Linearization about the zero equilibrium, with ``n`` replacing ``s``.

    The ``n``-equation is the sum of the four linearized equations when ``n``
    counts everyone including the deceased (``s + i + r + d``) and
    ``alpha = 0``; with ``alpha > 0`` it differs from that sum by ``alpha * d``.
    It decouples from ``(i, r, d)``, so stability is decided by the ``i``-equation.
    """
    n, i, r, d = u
    i_lag = u_lag[1]
    return np.array([
        (p.alpha - p.mu) * n + p.mu * d,
        -(p.phi_d + p.phi_r) * i_lag - p.mu * i,
        p.phi_r * i_lag - p.mu * r,
        p.phi_d * i_lag,
    ])


class _ScheduledSystem:
    def __init__(self, schedule: ParamSchedule):
        if isinstance(schedule, ModelParams):
            schedule = ParamSchedule.constant(schedule)
        self.schedule = schedule
        self.delay = schedule.initial.sigma_delay
        for _, p in schedule.breakpoints:
            if p.sigma_delay != self.delay:
                raise ValueError("the delay must stay constant across the schedule")


class DelaySirdRhs(_ScheduledSystem):
    """Delay SIRD ODE driven by a (normalized) parameter schedule."""

    components = SIRD

    def rhs(self, t, u, u_lag):
        return delay_sird_rhs(t, u, u_lag, self.schedule(t))


class LinearizedDelayRhs(_ScheduledSystem):
    components = LINEARIZED

    def rhs(self, t, u, u_lag):
        return linearized_rhs(t, u, u_lag, self.schedule(t))


class SeirdRhs(_ScheduledSystem):
    components = SEIRD

    def __init__(self, schedule: ParamSchedule):
        super().__init__(schedule)
        self.delay = 0.0

    def rhs(self, t, u, u_lag=None):
        return seird_rhs(t, u, self.schedule(t))
