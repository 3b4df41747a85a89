"""Small deterministic inputs with known answers, shared by the CLI and the tests."""

from __future__ import annotations

import numpy as np

from .dynamics import EpochRecord
from .interactions import MaskedOutputTable
from .lattice import mask_from_vars, popcounts
from .metrics import OrderProfile


def planted_and_table(n=6, variables=(0, 1, 2), amplitude=5.0):
    """v(T) = amplitude when every planted variable is present, else 0."""
    m = mask_from_vars(variables)
    masks = np.arange(1 << n)
    return MaskedOutputTable(amplitude * ((masks & m) == m), {"fixture": "planted-and"})


def planted_or_table(n=6, variables=(0, 1), amplitude=3.0):
    """v(T) = amplitude when any planted variable is present, else 0."""
    m = mask_from_vars(variables)
    masks = np.arange(1 << n)
    return MaskedOutputTable(amplitude * ((masks & m) != 0), {"fixture": "planted-or"})


def linear_positive_table(n=8, seed=0):
    """v(T) = sum of positive weights over T; mean change at order k is k * mean(w)."""
    w = np.random.default_rng(seed).uniform(0.5, 1.5, size=n)
    masks = np.arange(1 << n)
    present = (masks[:, None] >> np.arange(n)) & 1
    return MaskedOutputTable(present @ w, {"fixture": "linear-positive", "weights": w.tolist()})


def order_dip_table(n=6, dip_order=3, depth=1.5):
    """v(T) = |T| except at |T| = dip_order, where it drops by ``depth``.

    With depth > 1 the mean output change falls from order dip_order - 1 to
    dip_order.
    """
    pc = popcounts(n).astype(np.float64)
    values = pc - depth * (pc == dip_order)
    return MaskedOutputTable(values, {"fixture": "order-dip"})


def random_tables(count, n, seed=0):
    rng = np.random.default_rng(seed)
    return [MaskedOutputTable(rng.normal(size=1 << n), {"sample_id": i}) for i in range(count)]


def v_shaped_series(epochs=41, vertex=16, n=10, depth=4.0, noise=0.0, seed=0, rise=6):
    """Synthetic epoch series whose mean order falls linearly to ``vertex`` and rises again.

    Each record's profile puts all mass at two adjacent orders so the
    strength-weighted mean order equals the target exactly.  The loss gap is
    flat until ``vertex``, climbs over the next ``rise`` epochs and then stays
    level.
    """
    rng = np.random.default_rng(seed)
    top = n / 2 + depth / 2
    records = []
    for e in range(epochs):
        target = top - depth * (1 - abs(e - vertex) / max(vertex, epochs - 1 - vertex))
        target += noise * rng.uniform(-1, 1)
        target = float(np.clip(target, 1, n))
        lo = int(np.floor(target))
        frac = target - lo
        j_pos = np.zeros(n)
        j_pos[lo - 1] += 1 - frac
        if frac > 0:
            j_pos[lo] += frac
        profile = OrderProfile(n, j_pos, np.zeros(n), (j_pos > 0).astype(float))
        train_loss = 1.0 / (1 + e)
        gap = 0.01 + 0.2 * min(max(e - vertex, 0), rise)
        records.append(EpochRecord(e, profile, train_loss, train_loss + gap))
    return records


def binomial_profile(n=10):
    from math import comb

    j = np.array([comb(n, k) for k in range(1, n + 1)], dtype=np.float64)
    return OrderProfile(n, j / 2, -j / 2, j)
