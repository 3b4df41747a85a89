"""Epoch-level aggregation of order profiles and two-phase detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import OrderProfile

NOT_ENTERED = "not-entered"
NO_GAP_RISE = "none"


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    aggregate: OrderProfile
    train_loss: float
    test_loss: float

    @property
    def gap(self):
        return self.test_loss - self.train_loss

    @property
    def mean_order(self):
        return self.aggregate.mean_salient_order


@dataclass(frozen=True)
class PhaseReport:
    transition_epoch: int | str
    gap_rise_epoch: int | str
    alignment_offset: int | None
    phase1_trend: float | None
    phase2_trend: float | None
    smoothed_mean_order: np.ndarray
    smoothed_gap: np.ndarray
    epochs: np.ndarray

    @property
    def interior(self):
        return isinstance(self.transition_epoch, int) and self.transition_epoch != int(self.epochs[0])

    def as_dict(self):
        return {
            "transition_epoch": self.transition_epoch,
            "gap_rise_epoch": self.gap_rise_epoch,
            "alignment_offset": self.alignment_offset,
            "phase1_trend": self.phase1_trend,
            "phase2_trend": self.phase2_trend,
        }


def aggregate_epoch(profiles):
    """Element-wise mean of several order profiles sharing n."""
    profiles = list(profiles)
    if not profiles:
        raise ValueError("cannot aggregate an empty list of profiles")
    n = profiles[0].n
    if any(p.n != n for p in profiles):
        raise ValueError("all profiles must share n")
    j_pos = np.mean([p.j_pos for p in profiles], axis=0)
    j_neg = np.mean([p.j_neg for p in profiles], axis=0)
    counts = np.mean([p.counts for p in profiles], axis=0)
    return OrderProfile(n, j_pos, j_neg, counts)


def centered_moving_average(x, window):
    """Centered moving average; the window shrinks symmetrically-as-possible at the ends."""
    x = np.asarray(x, dtype=np.float64)
    if window <= 1:
        return x.copy()
    half_lo = (window - 1) // 2
    half_hi = window - 1 - half_lo
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(len(x))
    lo = np.maximum(idx - half_lo, 0)
    hi = np.minimum(idx + half_hi, len(x) - 1) + 1
    return (csum[hi] - csum[lo]) / (hi - lo)


def _slope(x, y):
    if len(x) < 2:
        return None
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    denom = (xc**2).sum()
    if denom == 0:
        return None
    return float((xc * (y - y.mean())).sum() / denom)


def _dedup(series):
    ordered = sorted(series, key=lambda r: r.epoch)
    out = []
    for rec in ordered:
        if out and out[-1].epoch == rec.epoch:
            continue
        out.append(rec)
    return out


def gap_rise_index(gap, window, theta):
    """First index whose forward difference exceeds ``theta * range`` and stays positive ``window`` steps."""
    gap = np.asarray(gap, dtype=np.float64)
    span = gap.max() - gap.min()
    if span <= 0:
        return None
    diff = np.diff(gap)
    need = max(int(window), 1)
    for i in range(len(diff) - need + 1):
        if diff[i] > theta * span and np.all(diff[i : i + need] > 0):
            return i
    return None


def detect_transition(series, smooth_window=3, theta=0.05):
    """Locate the end of the first phase and the start of the loss-gap rise.

    The transition is the epoch minimising the smoothed strength-weighted mean
    order; when that minimum is the last epoch the second phase has not been
    entered.  Records sharing an epoch are collapsed to the first one.
    """
    recs = _dedup(series)
    if len(recs) < 3:
        raise ValueError("need at least three epochs to detect a transition")
    epochs = np.array([r.epoch for r in recs])
    order = np.array([r.mean_order for r in recs])
    gap = np.array([r.gap for r in recs])
    if not np.all(np.isfinite(gap)):
        raise ValueError("losses must be finite")
    s_order = centered_moving_average(order, smooth_window)
    s_gap = centered_moving_average(gap, smooth_window)

    t_idx = int(np.argmin(s_order))
    if t_idx == len(recs) - 1:
        transition = NOT_ENTERED
        p1 = _slope(epochs, s_order)
        p2 = None
    else:
        transition = int(epochs[t_idx])
        p1 = _slope(epochs[: t_idx + 1], s_order[: t_idx + 1])
        p2 = _slope(epochs[t_idx:], s_order[t_idx:])

    g_idx = gap_rise_index(s_gap, smooth_window, theta)
    gap_rise = NO_GAP_RISE if g_idx is None else int(epochs[g_idx])
    offset = transition - gap_rise if isinstance(transition, int) and isinstance(gap_rise, int) else None
    return PhaseReport(transition, gap_rise, offset, p1, p2, s_order, s_gap, epochs)


@dataclass(frozen=True)
class FusiformCheck:
    passed: bool
    peak_order: int
    unimodal: bool
    strength: np.ndarray


def is_unimodal(values, slack=0.0):
    """Non-decreasing up to the maximum, non-increasing after it (dips up to ``slack`` allowed)."""
    v = np.asarray(values, dtype=np.float64)
    peak = int(np.argmax(v))
    rising = np.diff(v[: peak + 1])
    falling = np.diff(v[peak:])
    return bool(np.all(rising >= -slack) and np.all(falling <= slack))


def initial_fusiform_check(record, tolerance=1, smooth_window=3, slack_fraction=0.02):
    """Check that total salient strength per order is unimodal and peaks near n/2.

    ``record`` is an :class:`EpochRecord` or an :class:`OrderProfile`.  Dips
    smaller than ``slack_fraction`` of the peak strength are ignored.
    """
    profile = record.aggregate if isinstance(record, EpochRecord) else record
    strength = centered_moving_average(np.abs(profile.j_pos) + np.abs(profile.j_neg), smooth_window)
    peak = int(np.argmax(strength)) + 1
    slack = slack_fraction * float(strength.max()) if strength.max() > 0 else 0.0
    unimodal = is_unimodal(strength, slack)
    passed = unimodal and strength.max() > 0 and abs(peak - profile.n / 2) <= tolerance
    return FusiformCheck(bool(passed), peak, unimodal, strength)
