"""AND-OR interaction decomposition of masked model outputs.

Given the outputs ``v(x_T)`` of a model on all ``2**n`` masked versions of one
sample, the output is split per mask into an AND component and an OR
component that differ by a free offset ``gamma_T``:

    v_and(T) = 0.5 * (v(T) - v(empty)) + gamma_T
    v_or(T)  = 0.5 * (v(T) - v(empty)) - gamma_T

AND interactions are the Mobius transform of ``v_and``; OR interactions are
the complement-indexed transform of ``v_or``.  :func:`sparsify` chooses
``gamma`` to minimise the total L1 mass of both interaction sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit
from .lattice import (
    LatticeShapeError,
    as_lattice,
    mobius_transform,
    n_variables,
    popcounts,
    superset_complement_transform,
    superset_mobius_transform,
    vars_from_mask,
    zeta_transform,
)

DEFAULT_RHO = 0.5
DEFAULT_TAU_FRACTION = 0.05
MATCH_TOLERANCE = 1e-9


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class MaskedOutputTable:
    """Outputs ``v(x_T)`` for every mask ``T``; ``values[0]`` is the fully masked input."""

    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            arr = as_lattice(self.values)
        except LatticeShapeError as exc:
            raise DecompositionError(str(exc)) from exc
        if arr.ndim != 1:
            raise DecompositionError("a masked output table must be one-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self):
        return n_variables(self.values)

    @property
    def v_empty(self):
        return float(self.values[0])

    @property
    def scale(self):
        return max(1.0, float(np.max(np.abs(self.values))))

    @property
    def span(self):
        """max_T |v(T) - v(empty)|, the bound used for the gamma box."""
        return float(np.max(np.abs(self.values - self.values[0])))


@dataclass(frozen=True)
class GammaSplit:
    gamma: np.ndarray
    rho: float = DEFAULT_RHO

    @classmethod
    def zeros(cls, n, rho=DEFAULT_RHO):
        return cls(np.zeros(1 << n), rho)

    @classmethod
    def all_and(cls, table, rho=DEFAULT_RHO):
        """Put the whole output change into the AND component (OR interactions vanish)."""
        return cls(0.5 * (table.values - table.values[0]), rho)

    @classmethod
    def all_or(cls, table, rho=DEFAULT_RHO):
        return cls(-0.5 * (table.values - table.values[0]), rho)


@dataclass(frozen=True)
class InteractionSpectrum:
    n: int
    i_and: np.ndarray
    i_or: np.ndarray
    v_empty: float
    split: GammaSplit
    source_meta: dict = field(default_factory=dict)

    def l1(self):
        return float(np.abs(self.i_and).sum() + np.abs(self.i_or).sum())

    def max_abs(self):
        return float(max(np.abs(self.i_and).max(), np.abs(self.i_or).max()))


# --- decomposition ---------------------------------------------------------


def _check_split(table, split):
    gamma = np.asarray(split.gamma, dtype=np.float64)
    if gamma.shape != table.values.shape:
        raise DecompositionError(
            f"gamma has length {gamma.shape[-1] if gamma.ndim else 0}, table has {table.values.shape[0]}"
        )
    if split.rho < 0 or not math.isfinite(split.rho):
        raise DecompositionError(f"rho must be a finite non-negative number, got {split.rho}")
    if not np.all(np.isfinite(gamma)):
        raise DecompositionError("gamma contains non-finite entries")
    if gamma[0] != 0.0:
        raise DecompositionError("gamma of the empty set must be 0")
    bound = split.rho * table.span
    slack = 1e-12 * max(1.0, table.span)
    worst = float(np.max(np.abs(gamma)))
    if worst > bound + slack:
        raise DecompositionError(f"gamma violates the box constraint: max |gamma| = {worst:.6g} > {bound:.6g}")
    return gamma


def decompose(table, split=None, meta=None):
    """Split ``table`` into AND and OR interactions using the offsets in ``split``.

    With ``split=None`` the offsets are all zero.
    """
    if not isinstance(table, MaskedOutputTable):
        table = MaskedOutputTable(table)
    if split is None:
        split = GammaSplit.zeros(table.n)
    gamma = _check_split(table, split)
    half = 0.5 * (table.values - table.values[0])
    i_and = mobius_transform(half + gamma)
    i_or = superset_complement_transform(half - gamma)
    i_and[0] = 0.0
    i_or[0] = 0.0
    source = dict(table.meta)
    if meta:
        source.update(meta)
    return InteractionSpectrum(table.n, i_and, i_or, table.v_empty, split, source)


def l1_objective(table, gamma):
    """sum |I_and| + |I_or| for offsets ``gamma``, without the box check."""
    if not isinstance(table, MaskedOutputTable):
        table = MaskedOutputTable(table)
    gamma = np.asarray(gamma, dtype=np.float64)
    half = 0.5 * (table.values - table.values[0])
    i_and = mobius_transform(half + gamma)
    i_or = superset_complement_transform(half - gamma)
    return float(np.abs(i_and[1:]).sum() + np.abs(i_or[1:]).sum())


# --- sparsification --------------------------------------------------------


@dataclass(frozen=True)
class SparsifierConfig:
    """Settings for :func:`sparsify`.

    ``step_ratio`` sets the balance between primal and dual step sizes of the
    primal-dual iteration (the product of the two is fixed by the operator).
    Optimisation stops early once the duality gap falls below
    ``gap_tol * max(objective, 1e-12 * span)``.
    """

    rho: float = DEFAULT_RHO
    iters: int = 5000
    step_ratio: float = 0.2
    gap_tol: float = 1e-7
    seed: int = 0
    keep_trace: bool = True

    def __post_init__(self):
        if not (self.rho >= 0) or not math.isfinite(self.rho):
            raise ValueError(f"rho must be non-negative and finite, got {self.rho}")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")
        if not self.step_ratio > 0:
            raise ValueError("step_ratio must be positive")


@njit(cache=True, nogil=True)
def _mobius_row(x):
    size = x.shape[0]
    bit = 1
    while bit < size:
        for m in range(size):
            if m & bit:
                x[m] -= x[m ^ bit]
        bit <<= 1


@njit(cache=True, nogil=True)
def _superset_mobius_row(x):
    size = x.shape[0]
    bit = 1
    while bit < size:
        for m in range(size):
            if not m & bit:
                x[m] -= x[m | bit]
        bit <<= 1


@njit(cache=True, nogil=True)
def _pdhg_numba(c_and, c_or, bound, sigma_scale, tau_scale, row_w, col_w, iters, gap_tol, floor, trace):
    rows, size = c_and.shape
    best_gamma = np.zeros((rows, size))
    best_obj = np.empty(rows)
    dual_best = np.full(rows, -np.inf)
    used = np.zeros(rows, dtype=np.int64)
    converged = np.zeros(rows, dtype=np.bool_)
    keep = trace.shape[1] > 0
    g = np.empty(size)
    gbar = np.empty(size)
    ya = np.empty(size)
    yo = np.empty(size)
    ka = np.empty(size)
    ko = np.empty(size)
    ta = np.empty(size)
    to = np.empty(size)
    for r in range(rows):
        obj0 = 0.0
        for m in range(1, size):
            obj0 += abs(c_and[r, m]) + abs(c_or[r, m])
        best_obj[r] = obj0
        for m in range(size):
            g[m] = 0.0
            gbar[m] = 0.0
            ya[m] = 0.0
            yo[m] = 0.0
        b = bound[r]
        if b <= 0.0 or obj0 <= floor[r]:
            converged[r] = True
            for it in range(trace.shape[1]):
                trace[r, it] = obj0
            continue
        sig = sigma_scale[r]
        tau = tau_scale[r]
        for it in range(iters):
            # dual ascent on both interaction blocks
            for m in range(size):
                ka[m] = gbar[m]
                ko[m] = gbar[size - 1 - m]
            _mobius_row(ka)
            _mobius_row(ko)
            dual = 0.0
            for m in range(1, size):
                s = sig / row_w[m]
                va = ya[m] + s * (ka[m] + c_and[r, m])
                vo = yo[m] + s * (ko[m] + c_or[r, m])
                ya[m] = min(1.0, max(-1.0, va))
                yo[m] = min(1.0, max(-1.0, vo))
                dual += c_and[r, m] * ya[m] + c_or[r, m] * yo[m]
            ya[0] = 0.0
            yo[0] = 0.0
            # adjoint
            for m in range(size):
                ta[m] = ya[m]
                to[m] = yo[m]
            _superset_mobius_row(ta)
            _superset_mobius_row(to)
            penalty = 0.0
            for m in range(1, size):
                kt = ta[m] + to[size - 1 - m]
                penalty += abs(kt)
                gn = g[m] - (tau / col_w[m]) * kt
                gn = min(b, max(-b, gn))
                gbar[m] = 2.0 * gn - g[m]
                g[m] = gn
            gbar[0] = 0.0
            dual -= b * penalty
            if dual > dual_best[r]:
                dual_best[r] = dual
            # primal objective at the new point
            for m in range(size):
                ka[m] = g[m]
                ko[m] = -g[size - 1 - m]
            _mobius_row(ka)
            _mobius_row(ko)
            obj = 0.0
            for m in range(1, size):
                obj += abs(ka[m] + c_and[r, m]) + abs(c_or[r, m] - ko[m])
            if obj < best_obj[r]:
                best_obj[r] = obj
                for m in range(size):
                    best_gamma[r, m] = g[m]
            if keep:
                trace[r, it] = best_obj[r]
            used[r] = it + 1
            if best_obj[r] - dual_best[r] <= gap_tol * max(best_obj[r], floor[r]):
                converged[r] = True
                if keep:
                    for j in range(it + 1, trace.shape[1]):
                        trace[r, j] = best_obj[r]
                break
    return best_gamma, best_obj, dual_best, used, converged


def _pdhg_numpy(c_and, c_or, bound, sigma_scale, tau_scale, row_w, col_w, iters, gap_tol, floor, trace):
    rows, size = c_and.shape
    best_obj = np.abs(c_and[:, 1:]).sum(axis=1) + np.abs(c_or[:, 1:]).sum(axis=1)
    best_gamma = np.zeros((rows, size))
    dual_best = np.full(rows, -np.inf)
    used = np.zeros(rows, dtype=np.int64)
    converged = (bound <= 0.0) | (best_obj <= floor)
    keep = trace.shape[1] > 0
    if keep:
        trace[:] = best_obj[:, None]
    g = np.zeros((rows, size))
    gbar = np.zeros((rows, size))
    ya = np.zeros((rows, size))
    yo = np.zeros((rows, size))
    sig = (sigma_scale[:, None] / row_w[None, :])
    tau = (tau_scale[:, None] / col_w[None, :])
    b = bound[:, None]
    for it in range(iters):
        active = ~converged
        if not active.any():
            if keep:
                trace[:, it:] = best_obj[:, None]
            break
        ka = mobius_transform(gbar)
        ko = mobius_transform(gbar[:, ::-1])
        ya = np.clip(ya + sig * (ka + c_and), -1.0, 1.0)
        yo = np.clip(yo + sig * (ko + c_or), -1.0, 1.0)
        ya[:, 0] = 0.0
        yo[:, 0] = 0.0
        dual = (c_and * ya).sum(axis=1) + (c_or * yo).sum(axis=1)
        kt = superset_mobius_transform(ya) + superset_mobius_transform(yo)[:, ::-1]
        kt[:, 0] = 0.0
        dual -= bound * np.abs(kt).sum(axis=1)
        gn = np.clip(g - tau * kt, -b, b)
        gn[:, 0] = 0.0
        gbar_new = 2.0 * gn - g
        # frozen rows keep their state
        g = np.where(active[:, None], gn, g)
        gbar = np.where(active[:, None], gbar_new, gbar)
        dual_best = np.where(active, np.maximum(dual_best, dual), dual_best)
        ka = mobius_transform(g)
        ko = mobius_transform(-g[:, ::-1])
        obj = np.abs(ka[:, 1:] + c_and[:, 1:]).sum(axis=1) + np.abs(c_or[:, 1:] - ko[:, 1:]).sum(axis=1)
        better = active & (obj < best_obj)
        best_obj = np.where(better, obj, best_obj)
        best_gamma[better] = g[better]
        if keep:
            trace[:, it] = best_obj
        used[active] = it + 1
        newly = active & (best_obj - dual_best <= gap_tol * np.maximum(best_obj, floor))
        converged |= newly
    return best_gamma, best_obj, dual_best, used, converged


@dataclass(frozen=True)
class SparsifyResult:
    gamma: np.ndarray
    objective: float
    objective_at_zero: float
    dual_bound: float
    iterations: int
    converged: bool
    trace: np.ndarray


def _sparsify_arrays(values, cfg):
    """Run the primal-dual optimiser on a (rows, 2**n) stack of tables."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    rows, size = values.shape
    n = n_variables(values)
    half = 0.5 * (values - values[:, :1])
    c_and = mobius_transform(half)
    c_or = -mobius_transform(np.ascontiguousarray(half[:, ::-1]))
    c_and[:, 0] = 0.0
    c_or[:, 0] = 0.0
    span = np.max(np.abs(values - values[:, :1]), axis=1)
    bound = cfg.rho * span
    pc = popcounts(n).astype(np.float64)
    # diagonal preconditioner: row/column absolute sums of the stacked operator
    row_w = 2.0**pc
    col_w = 2.0 ** (n - pc) + 2.0**pc
    safe_span = np.where(span > 0, span, 1.0)
    sigma_scale = 1.0 / (cfg.step_ratio * safe_span)
    tau_scale = cfg.step_ratio * safe_span
    floor = 1e-12 * safe_span
    trace = np.zeros((rows, cfg.iters if cfg.keep_trace else 0))
    kernel = _pdhg_numba if _accel.use_numba() else _pdhg_numpy
    c_and = np.ascontiguousarray(c_and)
    c_or = np.ascontiguousarray(c_or)
    gamma, obj, dual, used, conv = kernel(
        c_and, c_or, bound, sigma_scale, tau_scale, row_w, col_w, int(cfg.iters), float(cfg.gap_tol), floor, trace
    )
    obj0 = np.abs(c_and[:, 1:]).sum(axis=1) + np.abs(c_or[:, 1:]).sum(axis=1)
    # clip against rounding so the returned split always passes the box check
    gamma = np.clip(gamma, -bound[:, None], bound[:, None])
    gamma[:, 0] = 0.0
    return gamma, obj, obj0, dual, used, conv, trace


def sparsify(table, cfg=None):
    """Choose the offsets gamma that make the interactions as sparse as possible.

    Minimises ``sum_S |I_and(S)| + |I_or(S)|`` subject to
    ``|gamma_T| <= rho * max_T |v(T) - v(empty)|`` with a diagonally
    preconditioned primal-dual iteration.  The best iterate is returned, so the
    objective never exceeds its value at gamma = 0.  Optimiser diagnostics go
    into ``source_meta['sparsify']``.
    """
    if not isinstance(table, MaskedOutputTable):
        table = MaskedOutputTable(table)
    cfg = cfg or SparsifierConfig()
    return sparsify_many([table], cfg)[0]


def sparsify_many(tables, cfg=None):
    """Sparsify several tables with the same ``n`` in one batched run."""
    cfg = cfg or SparsifierConfig()
    tables = [t if isinstance(t, MaskedOutputTable) else MaskedOutputTable(t) for t in tables]
    if not tables:
        return []
    sizes = {t.values.shape[0] for t in tables}
    if len(sizes) != 1:
        raise DecompositionError("all tables in a batch must share n")
    stack = np.stack([t.values for t in tables])
    gamma, obj, obj0, dual, used, conv, trace = _sparsify_arrays(stack, cfg)
    out = []
    for r, table in enumerate(tables):
        result = SparsifyResult(
            gamma=gamma[r],
            objective=float(obj[r]),
            objective_at_zero=float(obj0[r]),
            dual_bound=float(dual[r]) if np.isfinite(dual[r]) else float(obj[r]),
            iterations=int(used[r]),
            converged=bool(conv[r]),
            trace=trace[r],
        )
        out.append(decompose(table, GammaSplit(gamma[r], cfg.rho), meta={"sparsify": result}))
    return out


# --- saliency ----------------------------------------------------------------


@dataclass(frozen=True)
class TauRule:
    """Saliency threshold: ``rel`` scales the spectrum's largest effect, ``abs`` is literal."""

    kind: str = "rel"
    value: float = DEFAULT_TAU_FRACTION

    def __post_init__(self):
        if self.kind not in ("rel", "abs"):
            raise ValueError(f"tau kind must be 'rel' or 'abs', got {self.kind!r}")
        if not self.value >= 0:
            raise ValueError("tau must be non-negative")

    @classmethod
    def parse(cls, text):
        """Parse ``rel:<r>``, ``abs:<v>`` or a bare number (absolute)."""
        text = str(text).strip()
        if ":" in text:
            kind, _, val = text.partition(":")
            return cls(kind.strip().lower(), float(val))
        return cls("abs", float(text))

    def resolve(self, spectrum):
        if self.kind == "abs":
            return float(self.value)
        return float(self.value) * spectrum.max_abs()

    def __str__(self):
        return f"{self.kind}:{self.value:g}"


def resolve_tau(spectrum, tau):
    if tau is None:
        tau = TauRule()
    if isinstance(tau, TauRule):
        return tau.resolve(spectrum)
    if isinstance(tau, str):
        return TauRule.parse(tau).resolve(spectrum)
    tau = float(tau)
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return tau


def salient_flags(spectrum, tau=None):
    """Boolean masks over all subsets marking salient AND and OR effects."""
    t = resolve_tau(spectrum, tau)
    f_and = np.abs(spectrum.i_and) > t
    f_or = np.abs(spectrum.i_or) > t
    f_and[0] = False
    f_or[0] = False
    return f_and, f_or


def salient_sets(spectrum, tau=None):
    """Masks with ``|I| > tau`` for the AND and the OR branch (strict inequality)."""
    f_and, f_or = salient_flags(spectrum, tau)
    return frozenset(np.flatnonzero(f_and).tolist()), frozenset(np.flatnonzero(f_or).tolist())


def top_interactions(spectrum, count=5):
    """Largest effects as ``(branch, variables, value)`` tuples, by magnitude."""
    entries = []
    for branch, arr in (("and", spectrum.i_and), ("or", spectrum.i_or)):
        for m in np.flatnonzero(arr):
            entries.append((abs(float(arr[m])), branch, int(m), float(arr[m])))
    entries.sort(key=lambda e: (-e[0], e[1], e[2]))
    return [(b, vars_from_mask(m), val) for _, b, m, val in entries[:count]]


# --- universal matching ------------------------------------------------------


@dataclass(frozen=True)
class MatchReport:
    max_error: float
    mean_error: float
    worst_mask: int
    scale: float
    errors: np.ndarray

    def passed(self, tol=MATCH_TOLERANCE):
        return self.max_error <= tol * self.scale


def reconstruct(spectrum, and_keep=None, or_keep=None):
    """Rebuild v(x_T) for every T from the interaction effects.

    ``and_keep``/``or_keep`` optionally restrict the sums to boolean-selected
    subsets (the salient ones).
    """
    i_and = np.array(spectrum.i_and, dtype=np.float64)
    i_or = np.array(spectrum.i_or, dtype=np.float64)
    i_and[0] = 0.0
    i_or[0] = 0.0
    if and_keep is not None:
        i_and = np.where(and_keep, i_and, 0.0)
    if or_keep is not None:
        i_or = np.where(or_keep, i_or, 0.0)
    and_part = zeta_transform(i_and)
    # sum over S meeting T = total - sum over S inside the complement of T
    or_inside = zeta_transform(i_or)
    or_part = or_inside[-1] - or_inside[::-1]
    return and_part + or_part + spectrum.v_empty


def verify_universal_matching(spectrum, table, restrict_to_salient=False, tau=None):
    if not isinstance(table, MaskedOutputTable):
        table = MaskedOutputTable(table)
    if spectrum.n != table.n:
        raise DecompositionError(f"spectrum has n={spectrum.n} but table has n={table.n}")
    if restrict_to_salient:
        f_and, f_or = salient_flags(spectrum, tau)
        recon = reconstruct(spectrum, f_and, f_or)
    else:
        recon = reconstruct(spectrum)
    err = np.abs(recon - table.values)
    worst = int(np.argmax(err))
    return MatchReport(float(err[worst]), float(err.mean()), worst, table.scale, err)


# --- sparsity preconditions ---------------------------------------------------


@dataclass(frozen=True)
class ConditionResult:
    passed: bool | None
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StabilityConditions:
    high_order_absent: ConditionResult
    monotone_mean_output: ConditionResult
    polynomial_lower_bound: ConditionResult
    mean_outputs: np.ndarray

    @property
    def all_passed(self):
        flags = [self.high_order_absent.passed, self.monotone_mean_output.passed, self.polynomial_lower_bound.passed]
        return all(f is not False for f in flags)


def mean_output_by_order(table):
    """u(k) = mean over |S| = k of v(x_S) - v(empty), for k = 0..n."""
    if not isinstance(table, MaskedOutputTable):
        table = MaskedOutputTable(table)
    pc = popcounts(table.n)
    delta = table.values - table.values[0]
    sums = np.bincount(pc, weights=delta, minlength=table.n + 1)
    counts = np.bincount(pc, minlength=table.n + 1)
    return sums / counts


def _poly_violation(u, p, tol):
    """Largest violation of u(k') >= (k'/k)^p u(k) over 1 <= k' < k, with its pair."""
    worst, pair = -np.inf, None
    n = len(u) - 1
    for k in range(2, n + 1):
        kp = np.arange(1, k)
        gap = (kp / k) ** p * u[k] - u[kp] - tol
        j = int(np.argmax(gap))
        if gap[j] > worst:
            worst, pair = float(gap[j]), (int(kp[j]), k)
    return worst, pair


def fit_polynomial_exponent(u, tol=1e-9, p_min=0.1, p_max=10.0, grid=64, bisect_steps=60):
    """Smallest p in [p_min, p_max] with u(k') >= (k'/k)^p u(k) - tol for all k' <= k.

    Returns ``(p, witness)``; ``p`` is None when even ``p_max`` fails, in which
    case ``witness`` is the worst violating pair ``(k', k)`` at ``p_max``.
    """
    u = np.asarray(u, dtype=np.float64)
    if len(u) < 3:
        return p_min, None
    ps = np.geomspace(p_min, p_max, grid)
    ok = [_poly_violation(u, p, tol)[0] <= 0 for p in ps]
    if not any(ok):
        return None, _poly_violation(u, p_max, tol)[1]
    first = ok.index(True)
    if first == 0:
        return float(ps[0]), None
    lo, hi = ps[first - 1], ps[first]
    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        if _poly_violation(u, mid, tol)[0] <= 0:
            hi = mid
        else:
            lo = mid
    return float(hi), None


def check_stability_conditions(table, max_order, tol=1e-9, spectrum=None):
    """Evaluate the three output-stability conditions behind the sparsity bound.

    1. no AND interaction above ``max_order`` exceeds ``tol`` (needs ``spectrum``;
       reported as ``None`` otherwise);
    2. the mean output change over masks with k present variables is
       non-decreasing in k;
    3. a polynomial lower bound ``u(k') >= (k'/k)^p u(k)`` holds for some p > 0.
    """
    if not isinstance(table, MaskedOutputTable):
        table = MaskedOutputTable(table)
    n = table.n
    if not 0 <= max_order <= n:
        raise ValueError(f"max_order must lie in [0, {n}], got {max_order}")

    if spectrum is None:
        c1 = ConditionResult(None, {"reason": "no spectrum supplied"})
    else:
        pc = popcounts(n)
        high = np.abs(spectrum.i_and) * (pc > max_order)
        worst = int(np.argmax(high))
        c1 = ConditionResult(
            bool(high[worst] <= tol),
            {"max_order": max_order, "largest_high_order": float(high[worst]), "witness": vars_from_mask(worst)},
        )

    u = mean_output_by_order(table)
    witness = None
    for k in range(1, n + 1):
        prev = int(np.argmax(u[:k]))
        if u[prev] > u[k] + tol:
            witness = (prev, k)
            break
    c2 = ConditionResult(witness is None, {"mean_outputs": u.tolist(), "witness": witness})

    p, pair = fit_polynomial_exponent(u, tol)
    c3 = ConditionResult(p is not None, {"p": p, "witness": pair})
    return StabilityConditions(c1, c2, c3, u)


@dataclass(frozen=True)
class SparsityReport:
    tau: float
    salient_count: int
    n: int
    kappa_range: tuple
    conditions: StabilityConditions | None

    def bound_value(self, kappa):
        return self.n**kappa / self.tau if self.tau > 0 else math.inf


def sparsity_report(spectrum, table, tau=None, max_order=None, tol=1e-9):
    t = resolve_tau(spectrum, tau)
    f_and, f_or = salient_flags(spectrum, t)
    conds = None
    if max_order is not None:
        conds = check_stability_conditions(table, max_order, tol, spectrum)
    return SparsityReport(t, int(f_and.sum() + f_or.sum()), spectrum.n, (0.9, 1.2), conds)


def estimate_kappa(reports):
    """Fit log(count * tau) = kappa * log(n) + c by least squares.

    ``reports`` is a sequence of ``(n, tau, salient_count)``.  Returns
    ``(kappa, residual_rms)``.
    """
    arr = np.asarray(list(reports), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("reports must be (n, tau, salient_count) triples")
    if len(np.unique(arr[:, 0])) < 3:
        raise ValueError("need at least three distinct n values to fit kappa")
    if np.any(arr[:, 1] <= 0) or np.any(arr[:, 2] <= 0):
        raise ValueError("tau and salient counts must be positive")
    x = np.log(arr[:, 0])
    y = np.log(arr[:, 1] * arr[:, 2])
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))
