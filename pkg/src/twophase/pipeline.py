"""End-to-end toy experiments: train, emit tables, extract interactions, analyse."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import EpochRecord, aggregate_epoch, detect_transition, initial_fusiform_check
from .interactions import SparsifierConfig, TauRule, decompose, sparsify_many
from .metrics import order_profile, similarity_by_order
from .toy import (
    DatasetSpec,
    Pattern,
    ScoreDefinition,
    ToyNetwork,
    TrainConfig,
    choose_variables,
    emit_masked_table,
    generate_dataset,
    inject_label_noise,
    train,
)

GAMMA_MODES = ("zero", "sparsify")

# one AND rule and one OR rule, both low order
TOY_PATTERNS = (Pattern(1, "and", (0, 1)), Pattern(2, "or", (2,)))


@dataclass(frozen=True)
class ToyExperimentConfig:
    """Every knob of a toy run.  ``seed`` determines all random streams."""

    seed: int = 0
    hidden: tuple = (64, 64)
    init_gain: float = 0.1
    bias_scale: float = 0.0
    epochs: int = 256
    lr: float = 0.1
    batch: int = 16
    n_features: int = 10
    n_classes: int = 3
    patterns: tuple = TOY_PATTERNS
    n_train: int = 200
    n_test: int = 1000
    feature_noise: float = 0.3
    label_noise: float = 0.2
    n_masked: int = 10
    samples: int = 20
    similarity_samples: int = 30
    gamma: str = "zero"
    rho: float = 0.5
    iters: int = 1000
    tau: TauRule = field(default_factory=TauRule)
    score: str = "logit"
    smooth_window: int = 3
    theta: float = 0.05
    checkpoint_every: int | None = 8

    def __post_init__(self):
        if self.gamma not in GAMMA_MODES:
            raise ValueError(f"gamma mode must be one of {GAMMA_MODES}, got {self.gamma!r}")
        if self.n_masked > self.n_features:
            raise ValueError("cannot mask more variables than there are features")
        if self.samples < 1:
            raise ValueError("need at least one analysed sample")
        ScoreDefinition.parse(self.score)

    def streams(self):
        """Independent integer seeds for data, init, training and sample selection."""
        return [int(s) for s in np.random.SeedSequence(self.seed).generate_state(5)]

    def dataset_spec(self, label_noise=None):
        return DatasetSpec(
            n_features=self.n_features,
            n_classes=self.n_classes,
            patterns=self.patterns,
            n_train=self.n_train,
            n_test=self.n_test,
            feature_noise=self.feature_noise,
            label_noise=self.label_noise if label_noise is None else label_noise,
            seed=self.streams()[0],
        )

    def network(self):
        sizes = (self.n_features,) + tuple(self.hidden) + (self.n_classes,)
        return ToyNetwork.create(sizes, seed=self.streams()[1], gain=self.init_gain, bias_scale=self.bias_scale)

    def train_config(self):
        schedule = None
        if self.checkpoint_every:
            schedule = tuple(sorted(set(range(0, self.epochs + 1, self.checkpoint_every)) | {self.epochs}))
        return TrainConfig(epochs=self.epochs, lr=self.lr, batch=self.batch, seed=self.streams()[2], schedule=schedule)

    def sparsifier(self):
        return SparsifierConfig(rho=self.rho, iters=self.iters, keep_trace=False)


def extract(tables, cfg):
    """Spectra for ``tables`` under the configured gamma mode."""
    if cfg.gamma == "sparsify":
        return sparsify_many(tables, cfg.sparsifier())
    return [decompose(t) for t in tables]


@dataclass(frozen=True)
class AnalysisSet:
    """Samples analysed at every checkpoint, each with its fixed masked variables."""

    indices: np.ndarray
    labels: np.ndarray
    variables: tuple


def pick_samples(dataset, pool, count, labels, cfg, rng):
    pool = np.asarray(pool)
    take = min(count, len(pool))
    idx = np.sort(rng.choice(pool, size=take, replace=False))
    variables = tuple(choose_variables(cfg.n_features, cfg.n_masked, rng) for _ in idx)
    return AnalysisSet(idx, np.asarray(labels)[idx], variables)


def emit_tables(network, dataset, sel, cfg, epoch=None):
    out = []
    for i, label, vars_ in zip(sel.indices, sel.labels, sel.variables):
        meta = {"sample_id": int(i), "epoch": epoch}
        out.append(emit_masked_table(network, dataset.X[i], label, vars_, dataset.baselines, cfg.score, meta))
    return out


def profiles_for(network, dataset, sel, cfg, epoch=None, on_tables=None):
    tables = emit_tables(network, dataset, sel, cfg, epoch)
    if on_tables is not None:
        on_tables(epoch, tables)
    spectra = extract(tables, cfg)
    return [order_profile(s, cfg.tau) for s in spectra], spectra


@dataclass
class ToyRunResult:
    config: ToyExperimentConfig
    records: list
    report: object
    fusiform: object
    similarity: dict
    train_loss: np.ndarray
    test_loss: np.ndarray
    analysed: AnalysisSet
    final_network: ToyNetwork


def _stratified(pool, labels, per_class, rng):
    picks = []
    for c in np.unique(labels[pool]):
        members = pool[labels[pool] == c]
        take = min(per_class, len(members))
        picks.append(rng.choice(members, size=take, replace=False))
    return np.sort(np.concatenate(picks))


def similarity_curve(network, dataset, cfg, rng):
    """Train/test Jaccard similarity per order, categories given by the clean labels."""
    cat = dataset.category
    tr = _stratified(dataset.train_idx, cat, cfg.similarity_samples, rng)
    te = _stratified(dataset.test_idx, cat, cfg.similarity_samples, rng)
    sides = []
    for idx in (tr, te):
        variables = tuple(choose_variables(cfg.n_features, cfg.n_masked, rng) for _ in idx)
        sel = AnalysisSet(idx, cat[idx], variables)
        spectra = extract(emit_tables(network, dataset, sel, cfg), cfg)
        sides.append((spectra, list(cat[idx])))
    (s_tr, c_tr), (s_te, c_te) = sides
    return similarity_by_order(s_tr, c_tr, s_te, c_te)


def run_toy_experiment(cfg, with_similarity=True, on_tables=None):
    """Train a toy network and track its interaction profile over checkpoints.

    ``on_tables(epoch, tables)`` is called with the tables emitted at each
    checkpoint, before extraction.
    """
    dataset = generate_dataset(cfg.dataset_spec())
    result = train(cfg.network(), dataset, cfg.train_config())
    rng = np.random.default_rng(cfg.streams()[3])
    sel = pick_samples(dataset, dataset.train_idx, cfg.samples, dataset.y, cfg, rng)
    records = []
    for epoch in sorted(result.checkpoints):
        profiles, _ = profiles_for(result.checkpoints[epoch], dataset, sel, cfg, epoch, on_tables)
        records.append(EpochRecord(epoch, aggregate_epoch(profiles), float(result.train_loss[epoch]), float(result.test_loss[epoch])))
    report = detect_transition(records, cfg.smooth_window, cfg.theta)
    fusiform = initial_fusiform_check(records[0], smooth_window=cfg.smooth_window)
    final = result.checkpoints[max(result.checkpoints)]
    similarity = {}
    if with_similarity:
        similarity = similarity_curve(final, dataset, cfg, np.random.default_rng(cfg.streams()[4]))
    return ToyRunResult(cfg, records, report, fusiform, similarity, result.train_loss, result.test_loss, sel, final)


@dataclass
class NoisyLabelResult:
    relabeled_idx: np.ndarray
    clean_idx: np.ndarray
    relabeled_orders: np.ndarray
    clean_orders: np.ndarray
    ties: bool

    @property
    def relabeled_mean(self):
        return float(self.relabeled_orders.mean())

    @property
    def clean_mean(self):
        return float(self.clean_orders.mean())

    @property
    def effect(self):
        return self.relabeled_mean - self.clean_mean


def run_noisy_label_experiment(cfg, count_per_class=2, clean_count=None):
    """Relabel hard samples of a trained model, retrain, and compare their final-epoch orders.

    The reference model is trained on the noise-free dataset.  Its least
    confident ``count_per_class`` training samples per class move to their
    runner-up class, and a fresh network with the same initialisation is
    trained on the result.  Mean salient orders are then measured on the
    relabeled samples and on ``clean_count`` clean ones (default: all of
    them).
    """
    base = generate_dataset(cfg.dataset_spec(label_noise=0.0))
    init = cfg.network()
    tcfg = cfg.train_config()
    ref = train(init, base, tcfg)
    noise = inject_label_noise(base, ref.checkpoints[max(ref.checkpoints)], count_per_class)
    noisy = noise.dataset
    retrained = train(init, noisy, tcfg)
    final = retrained.checkpoints[max(retrained.checkpoints)]

    rng = np.random.default_rng(cfg.streams()[3])
    bad = np.flatnonzero(noise.relabeled)
    clean_pool = np.setdiff1d(noisy.train_idx, bad)
    clean_count = len(clean_pool) if clean_count is None else clean_count
    orders = []
    for pool, count in ((bad, len(bad)), (clean_pool, clean_count)):
        sel = pick_samples(noisy, pool, count, noisy.y, cfg, rng)
        profiles, _ = profiles_for(final, noisy, sel, cfg, tcfg.epochs)
        orders.append((sel.indices, np.array([p.mean_salient_order for p in profiles])))
    (bad_idx, bad_orders), (clean_idx, clean_orders) = orders
    return NoisyLabelResult(bad_idx, clean_idx, bad_orders, clean_orders, noise.ties)
