"""Linear stability of ``y'(t) = a*y(t) + b*y(t-1)`` and of the linearized epidemic models.

The characteristic equation ``lam = a + b*exp(-lam)`` is rewritten as
``(lam - a) * exp(lam - a) = b * exp(-a)``, so each Lambert W branch ``k``
yields one root ``lam_k = a + W_k(b*exp(-a))``.  Branch values seed a complex
Newton iteration on the original equation, which fixes the residual.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import lambertw

from .core import ModelParams

K_MAX = 25
RESIDUAL_TOL = 1e-10
MARGINAL_TOL = 1e-8
_NEWTON_TOL = 1e-12
_NEWTON_MAX_ITER = 60
# |Im(lam)| below this counts as a real root
_IMAG_TOL = 1e-10


class CharPoint(NamedTuple):
    """Point of the scaled ``(a, b)`` plane (``a = alpha*tau``, ``b = beta*tau``)."""

    a: float
    b: float


class Criterion(str, enum.Enum):
    RIGHTMOST_ROOT = "rightmost_root"
    THEOREM_BOUND = "theorem_bound"
    CONTRACTIVITY = "contractivity"


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    margin: float
    oscillatory: bool
    criterion_used: Criterion
    marginal: bool = False
    conclusive: bool = True

    @property
    def label(self) -> str:
        if not self.conclusive:
            return "INCONCLUSIVE"
        if self.marginal:
            return "MARGINAL"
        return "STABLE" if self.stable else "UNSTABLE"

    def describe(self) -> str:
        return (f"{self.label} margin={self.margin!r} "
                f"oscillatory={'yes' if self.oscillatory else 'no'} "
                f"criterion={self.criterion_used.value}")


@dataclass(frozen=True)
class RootSet:
    """Characteristic roots sorted by descending real part."""

    branches: tuple[int, ...]
    roots: np.ndarray
    point: CharPoint

    @property
    def rightmost_index(self) -> int:
        return 0

    @property
    def rightmost(self) -> complex:
        return complex(self.roots[0])

    def residuals(self) -> np.ndarray:
        a, b = self.point
        return np.abs(self.roots - a - b * np.exp(-self.roots))

    def __iter__(self):
        return iter(zip(self.branches, self.roots))

    def __len__(self):
        return len(self.roots)


class RootNotConverged(ArithmeticError):
    def __init__(self, branch: int, residual: float):
        self.branch = branch
        self.residual = residual
        super().__init__(f"Newton refinement failed on Lambert W branch {branch} (residual {residual:.3e})")


def _newton(a: float, b: float, lam: complex, branch: int) -> complex:
    for _ in range(_NEWTON_MAX_ITER):
        e = b * np.exp(-lam)
        f = lam - a - e
        if abs(f) <= _NEWTON_TOL * max(1.0, abs(lam), abs(e)):
            break
        step = f / (1.0 + e)
        lam = lam - step
        if abs(step) <= 1e-16 * max(1.0, abs(lam)):
            break
    res = abs(lam - a - b * np.exp(-lam))
    if not np.isfinite(res) or res >= RESIDUAL_TOL:
        raise RootNotConverged(branch, res)
    return complex(lam)


def characteristic_roots(p, k_max: int = K_MAX) -> RootSet:
    """The ``2*k_max + 1`` roots from Lambert W branches ``-k_max..k_max``."""
    a, b = CharPoint(*map(float, p))
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if b == 0.0:
        return RootSet((0,), np.array([complex(a)]), CharPoint(a, b))
    c = b * math.exp(-a)
    found = []
    for k in range(-k_max, k_max + 1):
        seed = a + complex(lambertw(c, k))
        found.append((k, _newton(a, b, seed, k)))
    found.sort(key=lambda kr: (-kr[1].real, -kr[1].imag))
    return RootSet(
        tuple(k for k, _ in found),
        np.array([r for _, r in found]),
        CharPoint(a, b),
    )


def boundary_curve(phi: float) -> CharPoint:
    """Parametric boundary ``(phi*cot(phi), -phi/sin(phi))`` of the stability region."""
    if not 0.0 < phi < math.pi:
        raise ValueError(f"phi must lie in (0, pi), got {phi}")
    return CharPoint(phi / math.tan(phi), -phi / math.sin(phi))


def is_stable(p, k_max: int = K_MAX) -> StabilityVerdict:
    """Classify by the rightmost characteristic root; ``|Re| < 1e-8`` is marginal."""
    lam = characteristic_roots(p, k_max).rightmost
    marginal = abs(lam.real) < MARGINAL_TOL
    return StabilityVerdict(
        stable=(not marginal) and lam.real < 0,
        margin=-lam.real,
        oscillatory=abs(lam.imag) > _IMAG_TOL,
        criterion_used=Criterion.RIGHTMOST_ROOT,
        marginal=marginal,
    )


def decoupled_point(p: ModelParams) -> CharPoint:
    """Scaled point of ``i' = -mu*i(t) - (phi_d + phi_r)*i(t - sigma)``."""
    s = p.sigma_delay
    # 0.0 - x rather than -x: avoids printing -0.0 for zero rates
    return CharPoint(0.0 - p.mu * s, 0.0 - p.removal_rate * s)


def theorem31_check(p: ModelParams) -> StabilityVerdict:
    """Sufficient delay-dependent bound ``(phi_d + phi_r) * sigma < pi/2`` with
    ``alpha < mu`` or ``alpha == mu == 0``."""
    if not p.sigma_delay > 0:
        raise ValueError("sigma_delay must be > 0")
    growth_ok = (p.alpha - p.mu < 0) or (p.alpha == 0 and p.mu == 0)
    x = p.removal_rate * p.sigma_delay
    return StabilityVerdict(
        stable=growth_ok and x < math.pi / 2,
        margin=math.pi / 2 - x,
        oscillatory=x >= 1 / math.e,
        criterion_used=Criterion.THEOREM_BOUND,
    )


def contractivity_check(p: ModelParams, delta_range=(0.0, 1.0)) -> StabilityVerdict:
    """Delay-independent sufficient condition ``a(t) + |b(t)| < 0`` for the
    Allee-linearized infected equation.

    With ``delta = s/n`` frozen, ``a = -mu - A*beta_e*delta`` and
    ``b = -(phi_d + phi_r) - A*beta_i*delta``, so the condition reads
    ``-mu - A*(beta_e - beta_i)*delta + phi_d + phi_r < 0``.  It is linear in
    ``delta``; the worst case sits at an end of ``delta_range``.
    A failed condition is inconclusive, not a proof of instability.
    """
    lo, hi = delta_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"delta_range must be a sub-interval of [0, 1], got {delta_range}")
    worst = max(
        -p.mu - p.allee_A * (p.beta_e - p.beta_i) * d + p.removal_rate
        for d in (lo, hi)
    )
    ok = worst < 0
    return StabilityVerdict(
        stable=ok,
        margin=-worst,
        oscillatory=p.removal_rate * p.sigma_delay >= 1 / math.e,
        criterion_used=Criterion.CONTRACTIVITY,
        conclusive=ok,
    )
