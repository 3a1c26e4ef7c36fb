"""Trajectory diagnostics: peaks, oscillation envelopes, sign excursions."""

from __future__ import annotations

import numpy as np
from scipy.signal import find_peaks

# peaks less prominent than this fraction of max|series| are rounding noise
PROMINENCE_FRACTION = 1e-6


def peak(times, series) -> tuple[float, float]:
    """Global maximum ``(value, time)`` over the discrete trajectory."""
    k = int(np.argmax(series))
    return float(series[k]), float(times[k])


def first_negative(times, series) -> float | None:
    neg = np.flatnonzero(np.asarray(series) < 0)
    return float(times[neg[0]]) if neg.size else None


def oscillation_peaks(times, series, onset_fraction: float = 0.1):
    """Times and amplitudes of the local maxima of ``|series|``.

    Extrema before ``|series|`` first reaches ``onset_fraction`` of its maximum
    are dropped; they are start-up ripples from the history discontinuity,
    not part of the oscillation.  So are maxima whose prominence is below
    ``PROMINENCE_FRACTION`` of the maximum (rounding noise on plateaus).
    """
    times = np.asarray(times, dtype=float)
    a = np.abs(np.asarray(series, dtype=float))
    if a.size < 3 or not np.any(a > 0):
        return np.empty(0), np.empty(0)
    onset = int(np.argmax(a >= onset_fraction * a.max()))
    k, _ = find_peaks(a, prominence=PROMINENCE_FRACTION * a.max())
    k = k[k >= onset]
    return times[k], a[k]


def envelope_ratios(times, series, t_min: float | None = None, onset_fraction: float = 0.1) -> np.ndarray:
    """Successive amplitude ratios of the oscillation peaks (optionally only peaks at ``t >= t_min``)."""
    t, amp = oscillation_peaks(times, series, onset_fraction)
    if t_min is not None:
        amp = amp[t >= t_min]
    if amp.size < 2:
        return np.empty(0)
    return amp[1:] / amp[:-1]


def increments(series) -> np.ndarray:
    return np.diff(np.asarray(series, dtype=float))


def envelope_trend(ratios, min_count: int = 3) -> str:
    """``growing``, ``decaying``, ``mixed`` or ``none`` (fewer than ``min_count`` ratios)."""
    ratios = np.asarray(ratios)
    if ratios.size < min_count:
        return "none"
    if np.all(ratios > 1):
        return "growing"
    if np.all(ratios < 1):
        return "decaying"
    return "mixed"


def relative_state_error(a, b) -> np.ndarray:
    """Per-row ``||a - b|| / ||b||`` (Euclidean); rows with ``b == 0`` use the absolute error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    num = np.linalg.norm(a - b, axis=-1)
    den = np.linalg.norm(b, axis=-1)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)
