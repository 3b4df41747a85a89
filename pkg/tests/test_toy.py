import numpy as np
import pytest

from twophase.interactions import decompose, sparsify, top_interactions
from twophase.pipeline import ToyExperimentConfig, run_noisy_label_experiment
from twophase.toy import (
    DatasetSpec,
    Pattern,
    ToyNetwork,
    TrainConfig,
    default_schedule,
    emit_masked_table,
    generate_dataset,
    inject_label_noise,
    mask_inputs,
    planted_labels,
    scores,
    train,
)


def small_spec(**kw):
    base = dict(n_features=6, n_classes=3, n_train=120, n_test=60, feature_noise=0.0, seed=4)
    base.update(kw)
    return DatasetSpec(**base)


# --- data ------------------------------------------------------------------------


def test_dataset_is_deterministic():
    a, b = generate_dataset(small_spec()), generate_dataset(small_spec())
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_zero_label_noise_follows_rule():
    ds = generate_dataset(small_spec())
    z = ds.X > 0
    assert np.array_equal(ds.y, planted_labels(z, ds.spec))
    assert np.array_equal(ds.y, ds.clean_y)


def test_label_noise_flips_expected_count():
    ds = generate_dataset(small_spec(label_noise=0.25))
    flipped = ds.y != ds.clean_y
    assert flipped.sum() == 30
    assert np.all(ds.is_train[flipped])


def test_invalid_pattern_rejected():
    with pytest.raises(ValueError):
        small_spec(patterns=(Pattern(1, "xor", (0,)),))
    with pytest.raises(ValueError):
        small_spec(patterns=(Pattern(1, "and", (9,)),))


# --- network and training ---------------------------------------------------------


def test_gradient_matches_finite_differences(rng):
    net = ToyNetwork.create((5, 7, 6, 3), seed=1, bias_scale=0.1)
    X = rng.normal(size=(9, 5))
    y = rng.integers(0, 3, 9)
    _, dws, dbs = net.loss_and_grad(X, y)
    analytic = np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in zip(dws, dbs)])
    flat = net.flat_params()
    probe = net.copy()
    h = 1e-6
    numeric = np.zeros_like(flat)
    for i in range(len(flat)):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        probe.set_flat_params(up)
        lu = probe.loss(X, y)
        probe.set_flat_params(dn)
        numeric[i] = (lu - probe.loss(X, y)) / (2 * h)
    assert np.max(np.abs(numeric - analytic)) < 1e-5


def test_flat_params_round_trip():
    net = ToyNetwork.create((4, 5, 2), seed=0)
    other = ToyNetwork.create((4, 5, 2), seed=1)
    other.set_flat_params(net.flat_params())
    assert np.array_equal(other.forward(np.eye(4)), net.forward(np.eye(4)))
    with pytest.raises(ValueError):
        other.set_flat_params(np.zeros(3))


def test_training_is_deterministic():
    ds = generate_dataset(small_spec())
    net = ToyNetwork.create((6, 16, 3), seed=2)
    cfg = TrainConfig(epochs=5, lr=0.1, seed=3)
    a, b = train(net, ds, cfg), train(net, ds, cfg)
    assert np.array_equal(a.train_loss, b.train_loss) and np.array_equal(a.test_loss, b.test_loss)
    assert np.array_equal(a.checkpoints[5].flat_params(), b.checkpoints[5].flat_params())


def test_zero_learning_rate_keeps_losses():
    ds = generate_dataset(small_spec())
    res = train(ToyNetwork.create((6, 8, 3), seed=0), ds, TrainConfig(epochs=4, lr=0.0))
    assert np.all(res.train_loss == res.train_loss[0])
    assert np.all(res.test_loss == res.test_loss[0])


def test_training_leaves_input_network_untouched():
    ds = generate_dataset(small_spec())
    net = ToyNetwork.create((6, 8, 3), seed=0)
    keep = net.flat_params().copy()
    train(net, ds, TrainConfig(epochs=2))
    assert np.array_equal(net.flat_params(), keep)


def test_zero_noise_reaches_full_train_accuracy():
    spec = small_spec(patterns=(Pattern(1, "and", (0, 1)), Pattern(2, "or", (2,))))
    ds = generate_dataset(spec)
    net = ToyNetwork.create((6, 32, 3), seed=0)
    res = train(net, ds, TrainConfig(epochs=150, lr=0.1, seed=0, schedule=(150,)))
    final = res.checkpoints[150]
    tr = ds.train_idx
    pred = np.argmax(final.forward(ds.X[tr]), axis=1)
    assert np.all(pred == ds.y[tr])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_stops_training():
    ds = generate_dataset(small_spec())
    res = train(ToyNetwork.create((6, 8, 3), seed=0, gain=50.0), ds, TrainConfig(epochs=20, lr=1e6))
    assert res.diverged
    assert len(res.train_loss) <= 21


def test_default_schedule_contents():
    s = default_schedule(256)
    assert s[:33] == list(range(33))
    assert s[33:] == [64, 128, 256]
    assert default_schedule(10) == list(range(11))


# --- relabeling -------------------------------------------------------------------


def test_zero_count_leaves_dataset():
    ds = generate_dataset(small_spec())
    res = inject_label_noise(ds, ToyNetwork.create((6, 8, 3)), 0)
    assert res.dataset is ds and not res.relabeled.any()


def test_lowest_confidence_samples_relabeled():
    ds = generate_dataset(small_spec(feature_noise=0.3))
    net = ToyNetwork.create((6, 8, 3), seed=5, gain=3.0, bias_scale=0.5)
    res = inject_label_noise(ds, net, 3)
    logits = net.forward(ds.X)
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    tr = ds.train_idx
    for c in range(3):
        members = tr[ds.y[tr] == c]
        expected = set(members[np.argsort(probs[members, c], kind="stable")[:3]])
        picked = set(np.flatnonzero(res.relabeled & (ds.y == c)))
        assert picked == expected
        for i in picked:
            other = logits[i].copy()
            other[c] = -np.inf
            assert res.dataset.y[i] == np.argmax(other)
    assert res.relabeled.sum() == 9
    assert not res.ties


def test_uniform_network_flags_ties():
    ds = generate_dataset(small_spec())
    net = ToyNetwork.create((6, 8, 3), seed=0, gain=0.0)
    res = inject_label_noise(ds, net, 2)
    assert res.ties
    tr = ds.train_idx
    for c in range(3):
        members = tr[ds.y[tr] == c]
        assert set(np.flatnonzero(res.relabeled & (ds.y == c))) == set(members[:2])


def test_too_many_relabels_rejected():
    ds = generate_dataset(small_spec(n_train=6))
    with pytest.raises(ValueError):
        inject_label_noise(ds, ToyNetwork.create((6, 8, 3)), 50)


# --- masking ----------------------------------------------------------------------


def test_full_mask_is_unmasked_score(rng):
    net = ToyNetwork.create((6, 8, 3), seed=1)
    x = rng.normal(size=6)
    table = emit_masked_table(net, x, 2, (0, 2, 5), np.zeros(6))
    assert table.values[-1] == pytest.approx(net.forward(x[None])[0, 2])
    assert table.meta["variables"] == [0, 2, 5]


def test_ignored_feature_has_no_effect(rng):
    net = ToyNetwork.create((4, 8, 2), seed=3)
    net.weights[0][1, :] = 0.0
    table = emit_masked_table(net, rng.normal(size=4), 0, (0, 1, 2, 3), rng.normal(size=4))
    bit = 1 << 1
    for t in range(16):
        if not t & bit:
            assert table.values[t] == table.values[t | bit]


def test_baseline_equal_to_input_gives_constant_table(rng):
    net = ToyNetwork.create((5, 8, 3), seed=0)
    x = rng.normal(size=5)
    table = emit_masked_table(net, x, 1, (0, 1, 2, 3, 4), x.copy())
    assert np.all(table.values == table.values[0])
    spec = decompose(table)
    assert np.all(spec.i_and == 0) and np.all(spec.i_or == 0)


def test_mask_rows_follow_bit_convention():
    rows = mask_inputs(np.array([1.0, 2.0, 3.0]), (0, 2), np.array([-1.0, -2.0, -3.0]))
    assert np.array_equal(rows, [[-1, 2, -3], [1, 2, -3], [-1, 2, 3], [1, 2, 3]])


def test_log_odds_clamped():
    logits = np.array([[1000.0, -1000.0, -1000.0], [0.0, 0.0, 0.0]])
    vals, clamped = scores(logits, 0, "logodds")
    assert clamped and np.isfinite(vals).all()
    assert vals[1] == pytest.approx(np.log(1 / 2))


def test_emit_rejects_bad_variables():
    net = ToyNetwork.create((4, 4, 2))
    with pytest.raises(ValueError):
        emit_masked_table(net, np.zeros(4), 0, (1, 1), np.zeros(4))


def test_trained_network_recovers_planted_and():
    spec = DatasetSpec(n_features=6, n_classes=2, patterns=(Pattern(1, "and", (0, 1)),), n_train=200, n_test=10,
                       feature_noise=0.1, seed=0)
    ds = generate_dataset(spec)
    net = train(ToyNetwork.create((6, 32, 2), seed=0), ds, TrainConfig(epochs=100, lr=0.1, schedule=(100,)))
    final = net.checkpoints[100]
    x = np.array([1.0, 1.0, -1, -1, -1, -1])
    table = emit_masked_table(final, x, 1, tuple(range(6)), ds.baselines)
    top = top_interactions(sparsify(table), 3)
    assert ("and", (0, 1)) in [(b, v) for b, v, _ in top]


# --- phase-1 property -------------------------------------------------------------


def test_noisy_experiment_runs_and_is_deterministic():
    cfg = ToyExperimentConfig(seed=1, epochs=32, checkpoint_every=8, samples=4)
    a = run_noisy_label_experiment(cfg)
    b = run_noisy_label_experiment(cfg)
    assert np.array_equal(a.relabeled_orders, b.relabeled_orders)
    assert len(a.relabeled_idx) == 2 * cfg.n_classes
    assert not set(a.relabeled_idx) & set(a.clean_idx)
