"""Order-wise interaction strengths, interaction vectors and Jaccard similarity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .interactions import salient_flags
from .lattice import masks_of_order, popcounts


@dataclass(frozen=True)
class OrderProfile:
    """Salient interaction strength per order k = 1..n (arrays are indexed by k - 1).

    ``counts`` is a float array so that averaged profiles keep fractional counts.
    """

    n: int
    j_pos: np.ndarray
    j_neg: np.ndarray
    counts: np.ndarray

    @property
    def orders(self):
        return np.arange(1, self.n + 1)

    @property
    def strength(self):
        return self.j_pos - self.j_neg

    @property
    def total_mass(self):
        return float(self.strength.sum())

    @property
    def mean_salient_order(self):
        """Strength-weighted mean order; 0 when there is no salient mass."""
        s = self.strength
        total = s.sum()
        if total <= 0:
            return 0.0
        return float((self.orders * s).sum() / total)

    @classmethod
    def zeros(cls, n):
        return cls(n, np.zeros(n), np.zeros(n), np.zeros(n))


def order_profile(spectrum, tau=None):
    """J_pos(k) and J_neg(k) over salient AND and OR effects of each order.

    ``tau`` accepts an absolute threshold, a :class:`~twophase.interactions.TauRule`
    or None for the default relative rule.
    """
    n = spectrum.n
    f_and, f_or = salient_flags(spectrum, tau)
    pc = popcounts(n)
    a = np.where(f_and, spectrum.i_and, 0.0)
    o = np.where(f_or, spectrum.i_or, 0.0)
    pos = np.maximum(a, 0.0) + np.maximum(o, 0.0)
    neg = np.minimum(a, 0.0) + np.minimum(o, 0.0)
    j_pos = np.bincount(pc, weights=pos, minlength=n + 1)[1:]
    j_neg = np.bincount(pc, weights=neg, minlength=n + 1)[1:]
    counts = np.bincount(pc, weights=f_and.astype(float) + f_or.astype(float), minlength=n + 1)[1:]
    return OrderProfile(n, j_pos, j_neg, counts)


# --- vectorisation -----------------------------------------------------------


BRANCHES = ("and", "or", "sum", "both")


@dataclass(frozen=True)
class OrderVector:
    """Order-k effects over the k-subsets in ascending mask order.

    The ``"both"`` branch stores the AND block followed by the OR block, so its
    length is twice C(n, k).
    """

    n: int
    k: int
    values: np.ndarray
    branch: str = "sum"

    def __post_init__(self):
        expected = math.comb(self.n, self.k) * (2 if self.branch == "both" else 1)
        if len(self.values) != expected:
            raise ValueError(f"order-{self.k} {self.branch} vector over n={self.n} must have length {expected}")


def vectorize_order(spectrum, k, branch="sum"):
    """Effects of all k-subsets in ascending mask order.

    ``branch`` is ``"and"``, ``"or"``, ``"sum"`` (AND + OR per subset) or
    ``"both"`` (AND block then OR block, each effect its own coordinate).
    """
    n = spectrum.n
    if not 1 <= k <= n:
        raise ValueError(f"order k must lie in [1, {n}], got {k}")
    masks = masks_of_order(n, k)
    branch = branch.lower()
    if branch == "and":
        vals = spectrum.i_and[masks]
    elif branch == "or":
        vals = spectrum.i_or[masks]
    elif branch == "sum":
        vals = spectrum.i_and[masks] + spectrum.i_or[masks]
    elif branch == "both":
        vals = np.concatenate([spectrum.i_and[masks], spectrum.i_or[masks]])
    else:
        raise ValueError(f"branch must be one of {BRANCHES}, got {branch!r}")
    return OrderVector(n, k, np.array(vals, dtype=np.float64), branch)


def _values(v):
    return np.asarray(v.values if isinstance(v, OrderVector) else v, dtype=np.float64)


def signed_split(w):
    """Concatenate the positive part and the negated negative part of ``w``."""
    w = np.asarray(w, dtype=np.float64)
    return np.concatenate([np.maximum(w, 0.0), np.maximum(-w, 0.0)])


def jaccard_similarity(a, b):
    """Weighted Jaccard similarity of two signed vectors after :func:`signed_split`.

    Two all-zero vectors have similarity 1.
    """
    if isinstance(a, OrderVector) and isinstance(b, OrderVector) and (a.n, a.k, a.branch) != (b.n, b.k, b.branch):
        raise ValueError(f"cannot compare order-{a.k}/n={a.n}/{a.branch} with order-{b.k}/n={b.n}/{b.branch}")
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    ha, hb = signed_split(va), signed_split(vb)
    top = np.maximum(ha, hb).sum()
    if top == 0.0:
        return 1.0
    return float(np.minimum(ha, hb).sum() / top)


# --- category means and generalisation curves ------------------------------------


@dataclass(frozen=True)
class CategoryMeanVector:
    k: int
    category: int
    mean: OrderVector
    sample_count: int


def category_means(spectra, categories, k, branch="both"):
    """Mean order-k interaction vector per category, as a dict category -> CategoryMeanVector."""
    spectra = list(spectra)
    categories = list(categories)
    if len(spectra) != len(categories):
        raise ValueError("need one category id per spectrum")
    out = {}
    for c in sorted(set(categories)):
        members = [vectorize_order(s, k, branch).values for s, cat in zip(spectra, categories) if cat == c]
        # contiguous last axis -> numpy uses pairwise summation
        stacked = np.ascontiguousarray(np.array(members).T)
        mean = stacked.sum(axis=1) / len(members)
        n = spectra[0].n
        out[c] = CategoryMeanVector(k, c, OrderVector(n, k, mean, branch), len(members))
    return out


def generalization_curve(train_means, test_means):
    """Mean over categories of the train/test Jaccard similarity, per order.

    Both arguments are iterables of :class:`CategoryMeanVector`.  Returns a dict
    mapping order k to the category-averaged similarity.
    """
    train = {(m.k, m.category): m for m in train_means}
    test = {(m.k, m.category): m for m in test_means}
    if set(train) != set(test):
        missing = sorted(set(train) ^ set(test))
        raise ValueError(f"unmatched (order, category) pairs between train and test: {missing}")
    per_order = {}
    for key in sorted(train):
        per_order.setdefault(key[0], []).append(jaccard_similarity(train[key].mean, test[key].mean))
    return {k: float(np.mean(v)) for k, v in per_order.items()}


def similarity_by_order(train_spectra, train_cats, test_spectra, test_cats, branch="both", orders=None):
    """Category means on both splits and their generalisation curve.

    The default ``"both"`` branch keeps AND and OR effects as separate
    coordinates.  Summing them is ill-suited here: under an even split the
    order-n AND and OR effects cancel exactly for even n.
    """
    n = train_spectra[0].n
    orders = orders or range(1, n + 1)
    shared = sorted(set(train_cats) & set(test_cats))
    tr_means, te_means = [], []
    for k in orders:
        tr = category_means(train_spectra, train_cats, k, branch)
        te = category_means(test_spectra, test_cats, k, branch)
        tr_means += [tr[c] for c in shared]
        te_means += [te[c] for c in shared]
    return generalization_curve(tr_means, te_means)


# --- Gaussian noise model of an untrained network ----------------------------------


def expected_order_strength(n, k, sigma):
    """Closed-form (E[Psi_pos(k)], E[Psi_neg(k)]) for i.i.d. N(0, sigma^2) effects.

    Each of the C(n, k) effects contributes P(I > 0) * E|I| = 0.5 * sigma * sqrt(2 / pi).
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if not 1 <= k <= n:
        raise ValueError(f"order k must lie in [1, {n}]")
    e_pos = math.comb(n, k) * sigma / math.sqrt(2.0 * math.pi)
    return e_pos, -e_pos


@dataclass(frozen=True)
class MonteCarloStrengths:
    mean_pos: np.ndarray
    mean_neg: np.ndarray
    se_pos: np.ndarray
    se_neg: np.ndarray
    trials: int


MC_BATCH = 1000


def fusiform_monte_carlo(n, sigma, trials, seed=0):
    """Empirical per-order means of Psi_pos and Psi_neg under i.i.d. Gaussian effects.

    Trials are drawn in fixed batches of ``MC_BATCH``, each from its own child
    stream of ``SeedSequence(seed)``, so batches can be evaluated in any order
    or in parallel with identical totals.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    pc = popcounts(n)
    onehot = np.zeros((1 << n, n + 1))
    onehot[np.arange(1 << n), pc] = 1.0
    n_batches = -(-trials // MC_BATCH)
    children = np.random.SeedSequence(seed).spawn(n_batches)
    sum_pos = np.zeros(n + 1)
    sum_neg = np.zeros(n + 1)
    sq_pos = np.zeros(n + 1)
    sq_neg = np.zeros(n + 1)
    done = 0
    for child in children:
        m = min(MC_BATCH, trials - done)
        draws = np.random.default_rng(child).normal(0.0, sigma, size=(m, 1 << n))
        pos = np.maximum(draws, 0.0) @ onehot
        neg = np.minimum(draws, 0.0) @ onehot
        sum_pos += pos.sum(axis=0)
        sum_neg += neg.sum(axis=0)
        sq_pos += (pos**2).sum(axis=0)
        sq_neg += (neg**2).sum(axis=0)
        done += m
    mean_pos = sum_pos / trials
    mean_neg = sum_neg / trials
    if trials > 1:
        var_pos = np.maximum(sq_pos / trials - mean_pos**2, 0.0) * trials / (trials - 1)
        var_neg = np.maximum(sq_neg / trials - mean_neg**2, 0.0) * trials / (trials - 1)
    else:
        var_pos = np.zeros(n + 1)
        var_neg = np.zeros(n + 1)
    return MonteCarloStrengths(
        mean_pos[1:], mean_neg[1:], np.sqrt(var_pos[1:] / trials), np.sqrt(var_neg[1:] / trials), trials
    )
