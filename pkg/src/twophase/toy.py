"""Small deterministic ReLU classifier, synthetic data with planted patterns, and masking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .interactions import MaskedOutputTable

MAX_INPUTS = 12
MAX_MASKED = 12


class ScoreDefinition(str, Enum):
    LOGIT = "logit"
    LOG_ODDS = "logodds"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown score definition {value!r}; expected 'logit' or 'logodds'")


# --- network ---------------------------------------------------------------


def _relu(x):
    return np.maximum(x, 0.0)


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class ToyNetwork:
    """Fully connected ReLU network ``sizes[0] -> ... -> sizes[-1]`` producing class logits."""

    sizes: tuple
    weights: list
    biases: list
    seed: int = 0

    @classmethod
    def create(cls, sizes, seed=0, gain=1.0, bias_scale=0.0):
        """He-normal weights scaled by ``gain``; biases drawn from N(0, bias_scale^2)."""
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 3 or len(sizes) > 5:
            raise ValueError("a toy network has 1 to 3 hidden layers")
        if sizes[0] > MAX_INPUTS:
            raise ValueError(f"at most {MAX_INPUTS} inputs are supported")
        if sizes[-1] < 2:
            raise ValueError("need at least two output classes")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, gain * math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            biases.append(rng.normal(0.0, bias_scale, size=fan_out) if bias_scale > 0 else np.zeros(fan_out))
        return cls(sizes, weights, biases, seed)

    @property
    def n_inputs(self):
        return self.sizes[0]

    @property
    def n_classes(self):
        return self.sizes[-1]

    def copy(self):
        return ToyNetwork(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.seed)

    def forward(self, X):
        h = np.asarray(X, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = _relu(h)
        return h

    def loss(self, X, y):
        if len(y) == 0:
            return float("nan")
        logp = log_softmax(self.forward(X))
        return float(-logp[np.arange(len(y)), y].mean())

    def loss_and_grad(self, X, y):
        """Mean cross-entropy and its gradient as ``(loss, dweights, dbiases)``."""
        X = np.asarray(X, dtype=np.float64)
        acts = [X]
        pre = []
        h = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = _relu(z) if i < last else z
            acts.append(h)
        logp = log_softmax(h)
        m = len(y)
        loss = float(-logp[np.arange(m), y].mean())
        delta = np.exp(logp)
        delta[np.arange(m), y] -= 1.0
        delta /= m
        dws = [None] * len(self.weights)
        dbs = [None] * len(self.weights)
        for i in range(last, -1, -1):
            dws[i] = acts[i].T @ delta
            dbs[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        return loss, dws, dbs

    def flat_params(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b.ravel()]
        return np.concatenate(parts)

    def set_flat_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].copy()
            pos += b.size
        if pos != flat.size:
            raise ValueError(f"expected {pos} parameters, got {flat.size}")


# --- data --------------------------------------------------------------------


@dataclass(frozen=True)
class Pattern:
    """A planted rule: ``kind`` 'and' fires when all ``variables`` are on, 'or' when any is."""

    label: int
    kind: str
    variables: tuple

    def fires(self, z):
        sub = z[:, list(self.variables)]
        return sub.all(axis=1) if self.kind == "and" else sub.any(axis=1)


DEFAULT_PATTERNS = (
    Pattern(1, "and", (0, 1)),
    Pattern(2, "and", (2, 3)),
    Pattern(2, "or", (4,)),
)


@dataclass(frozen=True)
class DatasetSpec:
    """Generator settings.

    Latent bits ``z`` are i.i.d. fair coins; features are ``2 z - 1`` plus
    Gaussian noise of scale ``feature_noise``.  The label is the class of the
    first firing pattern in ``patterns`` (class 0 when none fires).  A fraction
    ``label_noise`` of the training labels is replaced by a different random
    class.
    """

    n_features: int = 10
    n_classes: int = 3
    patterns: tuple = DEFAULT_PATTERNS
    n_train: int = 200
    n_test: int = 1000
    feature_noise: float = 0.3
    label_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_features <= MAX_INPUTS:
            raise ValueError(f"n_features must lie in [1, {MAX_INPUTS}]")
        for p in self.patterns:
            if p.kind not in ("and", "or"):
                raise ValueError(f"pattern kind must be 'and' or 'or', got {p.kind!r}")
            if not p.variables or any(v < 0 or v >= self.n_features for v in p.variables):
                raise ValueError(f"pattern {p} refers to variables outside 0..{self.n_features - 1}")
            if not 0 <= p.label < self.n_classes:
                raise ValueError(f"pattern {p} has a label outside 0..{self.n_classes - 1}")
        if not 0 <= self.label_noise <= 1:
            raise ValueError("label_noise must lie in [0, 1]")


@dataclass(frozen=True)
class ToyDataset:
    X: np.ndarray
    y: np.ndarray
    clean_y: np.ndarray
    is_train: np.ndarray
    baselines: np.ndarray
    spec: DatasetSpec
    relabeled: np.ndarray = field(default=None)

    @property
    def category(self):
        """Category of each sample: its ground-truth (clean) class."""
        return self.clean_y

    @property
    def train_idx(self):
        return np.flatnonzero(self.is_train)

    @property
    def test_idx(self):
        return np.flatnonzero(~self.is_train)


def planted_labels(z, spec):
    labels = np.zeros(len(z), dtype=np.int64)
    done = np.zeros(len(z), dtype=bool)
    for p in spec.patterns:
        hit = p.fires(z) & ~done
        labels[hit] = p.label
        done |= hit
    return labels


def generate_dataset(spec):
    rng = np.random.default_rng(spec.seed)
    total = spec.n_train + spec.n_test
    z = rng.random((total, spec.n_features)) < 0.5
    X = (2.0 * z - 1.0) + spec.feature_noise * rng.normal(size=(total, spec.n_features))
    clean = planted_labels(z, spec)
    order = rng.permutation(total)
    X, clean = X[order], clean[order]
    is_train = np.zeros(total, dtype=bool)
    is_train[: spec.n_train] = True
    y = clean.copy()
    flipped = np.zeros(total, dtype=bool)
    if spec.label_noise > 0:
        n_flip = int(round(spec.label_noise * spec.n_train))
        idx = rng.choice(spec.n_train, size=n_flip, replace=False)
        shift = rng.integers(1, spec.n_classes, size=n_flip)
        y[idx] = (y[idx] + shift) % spec.n_classes
        flipped[idx] = True
    baselines = X.mean(axis=0)
    return ToyDataset(X, y, clean, is_train, baselines, spec, flipped)


@dataclass(frozen=True)
class LabelNoiseResult:
    dataset: ToyDataset
    relabeled: np.ndarray
    ties: bool


def inject_label_noise(dataset, network, count_per_class):
    """Relabel the least confident training samples of each class to the runner-up class.

    For every class c, the ``count_per_class`` training samples currently
    labelled c with the lowest predicted probability of c get the label of
    the highest-scoring other class.  Equal confidences are ordered by sample
    index; ``ties`` reports whether that happened.
    """
    if count_per_class < 0:
        raise ValueError("count_per_class must be non-negative")
    y = dataset.y.copy()
    relabeled = np.zeros(len(y), dtype=bool)
    if count_per_class == 0:
        return LabelNoiseResult(dataset, relabeled, False)
    logits = network.forward(dataset.X)
    probs = np.exp(log_softmax(logits))
    ties = False
    train = dataset.train_idx
    for c in range(network.n_classes):
        members = train[dataset.y[train] == c]
        if count_per_class > len(members):
            raise ValueError(f"class {c} has only {len(members)} training samples, cannot relabel {count_per_class}")
        conf = probs[members, c]
        if len(np.unique(conf)) < len(conf):
            ties = True
        pick = members[np.lexsort((members, conf))[:count_per_class]]
        other = logits[pick].copy()
        other[:, c] = -np.inf
        y[pick] = np.argmax(other, axis=1)
        relabeled[pick] = True
    prior = dataset.relabeled if dataset.relabeled is not None else np.zeros(len(y), dtype=bool)
    new = replace(dataset, y=y, relabeled=prior | relabeled)
    return LabelNoiseResult(new, relabeled, ties)


# --- training ----------------------------------------------------------------


def default_schedule(epochs, dense=32):
    """Every epoch up to ``dense``, then powers of two, always including ``epochs``."""
    picks = set(range(0, min(dense, epochs) + 1))
    p = 1
    while p <= epochs:
        if p > dense:
            picks.add(p)
        p *= 2
    picks.add(epochs)
    return sorted(picks)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 256
    lr: float = 0.05
    batch: int = 16
    seed: int = 0
    schedule: tuple | None = None

    def checkpoint_epochs(self):
        if self.schedule is None:
            return default_schedule(self.epochs)
        return sorted({e for e in self.schedule if 0 <= e <= self.epochs})


@dataclass
class TrainResult:
    checkpoints: dict
    train_loss: np.ndarray
    test_loss: np.ndarray
    diverged: bool = False
    last_epoch: int = 0

    def network(self, epoch):
        return self.checkpoints[epoch]


def train(network, dataset, cfg):
    """Plain minibatch SGD on the training split; ``network`` is not modified.

    Losses are recorded for epoch 0 (before any update) through ``cfg.epochs``.
    A non-finite loss stops training; checkpoints up to the last finite epoch
    are kept.
    """
    if cfg.epochs < 0 or cfg.batch < 1 or cfg.lr < 0:
        raise ValueError("invalid training configuration")
    net = network.copy()
    rng = np.random.default_rng(cfg.seed)
    tr, te = dataset.train_idx, dataset.test_idx
    Xtr, ytr = dataset.X[tr], dataset.y[tr]
    Xte, yte = dataset.X[te], dataset.y[te]
    wanted = set(cfg.checkpoint_epochs())
    checkpoints = {}
    train_loss = np.full(cfg.epochs + 1, np.nan)
    test_loss = np.full(cfg.epochs + 1, np.nan)
    train_loss[0] = net.loss(Xtr, ytr)
    test_loss[0] = net.loss(Xte, yte)
    if 0 in wanted:
        checkpoints[0] = net.copy()
    last = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(tr))
        for start in range(0, len(order), cfg.batch):
            idx = order[start : start + cfg.batch]
            _, dws, dbs = net.loss_and_grad(Xtr[idx], ytr[idx])
            for i in range(len(net.weights)):
                net.weights[i] -= cfg.lr * dws[i]
                net.biases[i] -= cfg.lr * dbs[i]
        lt, ls = net.loss(Xtr, ytr), net.loss(Xte, yte)
        if not (np.isfinite(lt) and np.isfinite(ls)):
            return TrainResult(checkpoints, train_loss[: epoch], test_loss[: epoch], True, last)
        train_loss[epoch], test_loss[epoch] = lt, ls
        last = epoch
        if epoch in wanted:
            checkpoints[epoch] = net.copy()
    return TrainResult(checkpoints, train_loss, test_loss, False, last)


# --- masking -----------------------------------------------------------------

LOG_ODDS_CLAMP = math.log((1 - 1e-15) / 1e-15)


def mask_inputs(x, variables, baselines):
    """All ``2**m`` masked copies of ``x``; row T keeps variables[j] iff bit j of T is set."""
    variables = list(variables)
    m = len(variables)
    masks = np.arange(1 << m)
    keep = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)
    out = np.repeat(np.asarray(x, dtype=np.float64)[None, :], 1 << m, axis=0)
    for j, var in enumerate(variables):
        out[~keep[:, j], var] = baselines[var]
    return out


def scores(logits, label, score):
    """Scalar output per row for the ground-truth ``label``; returns ``(values, clamped)``."""
    score = ScoreDefinition.parse(score)
    if score is ScoreDefinition.LOGIT:
        return logits[:, label].copy(), False
    others = np.delete(logits, label, axis=1)
    top = others.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(others - top).sum(axis=1))
    raw = logits[:, label] - lse
    clipped = np.clip(raw, -LOG_ODDS_CLAMP, LOG_ODDS_CLAMP)
    return clipped, bool(np.any(clipped != raw))


def emit_masked_table(network, x, label, variables, baselines, score=ScoreDefinition.LOGIT, meta=None):
    """Outputs of ``network`` on every masking of the chosen ``variables`` of ``x``."""
    if len(variables) > MAX_MASKED:
        raise ValueError(f"at most {MAX_MASKED} masked variables are supported")
    if len(set(variables)) != len(variables):
        raise ValueError("masked variables must be distinct")
    score = ScoreDefinition.parse(score)
    logits = network.forward(mask_inputs(x, variables, baselines))
    values, clamped = scores(logits, int(label), score)
    info = {"score": score.value, "baseline": "mean", "variables": list(map(int, variables)), "clamped": clamped}
    if meta:
        info.update(meta)
    return MaskedOutputTable(values, info)


def choose_variables(n_features, m, rng):
    """Seeded draw of m distinct features, kept in ascending order."""
    if m > n_features:
        raise ValueError(f"cannot mask {m} of {n_features} features")
    return tuple(sorted(int(i) for i in rng.choice(n_features, size=m, replace=False)))
