import numpy as np
import pytest

from conftest import lp_floor
from twophase.fixtures import linear_positive_table, order_dip_table, planted_and_table, planted_or_table
from twophase.interactions import (
    DecompositionError,
    GammaSplit,
    MaskedOutputTable,
    SparsifierConfig,
    TauRule,
    check_stability_conditions,
    decompose,
    estimate_kappa,
    l1_objective,
    mean_output_by_order,
    reconstruct,
    salient_sets,
    sparsify,
    sparsify_many,
    top_interactions,
    verify_universal_matching,
)
from twophase.lattice import mask_from_vars


def random_feasible_split(table, rng, rho=0.5):
    g = rng.uniform(-1, 1, size=table.values.shape) * rho * table.span
    g[0] = 0.0
    return GammaSplit(g, rho)


# --- decompose --------------------------------------------------------------


def test_constant_table_has_no_interactions():
    spec = decompose(MaskedOutputTable(np.full(32, 2.5)))
    assert np.all(spec.i_and == 0) and np.all(spec.i_or == 0)
    assert spec.v_empty == 2.5


def test_all_and_split_reduces_to_mobius():
    table = MaskedOutputTable([0.0, 1.0, 2.0, 5.0])
    spec = decompose(table, GammaSplit.all_and(table, rho=1.0))
    assert np.allclose(spec.i_or, 0)
    assert np.allclose(spec.i_and, [0, 1, 2, 2])


def test_all_or_split_leaves_no_and_effects(rng):
    table = MaskedOutputTable(rng.normal(size=16))
    spec = decompose(table, GammaSplit.all_or(table, rho=1.0))
    assert np.allclose(spec.i_and, 0, atol=1e-12)
    assert verify_universal_matching(spec, table).passed()


@pytest.mark.parametrize("seed", range(5))
def test_matching_with_random_feasible_split(seed):
    rng = np.random.default_rng(seed)
    table = MaskedOutputTable(rng.normal(size=64) * 10)
    spec = decompose(table, random_feasible_split(table, rng))
    assert verify_universal_matching(spec, table).max_error < 1e-9 * table.scale


def test_reconstruct_matches_brute_force_sums(rng):
    n = 4
    table = MaskedOutputTable(rng.normal(size=1 << n))
    spec = decompose(table, random_feasible_split(table, rng))
    for t in range(1 << n):
        total = spec.v_empty
        total += sum(spec.i_and[s] for s in range(1, 1 << n) if s & ~t == 0)
        total += sum(spec.i_or[s] for s in range(1, 1 << n) if s & t)
        assert abs(total - table.values[t]) < 1e-10


def test_zeroed_effect_error_equals_its_magnitude(rng):
    table = MaskedOutputTable(rng.normal(size=32))
    spec = decompose(table)
    s = mask_from_vars([1, 3])
    mag = abs(spec.i_and[s])
    spec.i_and[s] = 0.0
    rep = verify_universal_matching(spec, table)
    assert rep.max_error == pytest.approx(mag, abs=1e-12)
    supersets = [t for t in range(32) if t & s == s]
    assert np.allclose(rep.errors[supersets], mag)
    assert np.allclose(np.delete(rep.errors, supersets), 0, atol=1e-12)


def test_decompose_is_linear_in_table(rng):
    a, b = rng.normal(size=(2, 32))
    sa, sb, sab = decompose(a), decompose(b), decompose(a + 3 * b)
    assert np.allclose(sab.i_and, sa.i_and + 3 * sb.i_and)
    assert np.allclose(sab.i_or, sa.i_or + 3 * sb.i_or)


def test_box_violation_rejected():
    table = MaskedOutputTable([0.0, 1.0, 2.0, 4.0])
    g = np.array([0.0, 0.0, 0.0, 2.5])
    with pytest.raises(DecompositionError, match="box"):
        decompose(table, GammaSplit(g, 0.5))


def test_nonzero_empty_gamma_rejected():
    table = MaskedOutputTable([0.0, 1.0, 2.0, 4.0])
    with pytest.raises(DecompositionError):
        decompose(table, GammaSplit(np.array([0.1, 0, 0, 0]), 0.5))


def test_gamma_length_mismatch_rejected():
    with pytest.raises(DecompositionError):
        decompose(MaskedOutputTable(np.zeros(8)), GammaSplit.zeros(2))


def test_bad_table_rejected():
    with pytest.raises(DecompositionError):
        MaskedOutputTable(np.zeros(6))
    with pytest.raises(DecompositionError):
        MaskedOutputTable([0.0, np.inf])


# --- sparsify ---------------------------------------------------------------


def test_planted_and_reaches_floor():
    table = planted_and_table()
    spec = sparsify(table)
    res = spec.source_meta["sparsify"]
    assert res.objective == pytest.approx(5.0, rel=0.01)
    assert res.dual_bound <= res.objective + 1e-9
    top = top_interactions(spec, 1)[0]
    assert top[:2] == ("and", (0, 1, 2))
    assert top[2] == pytest.approx(5.0, rel=0.01)
    others = np.abs(np.concatenate([spec.i_and, spec.i_or]))
    others[mask_from_vars((0, 1, 2))] = 0
    assert others.max() < 0.05 * 5


def test_planted_or_goes_to_or_branch():
    table = planted_or_table()
    spec = sparsify(table)
    s = mask_from_vars((0, 1))
    assert spec.i_or[s] == pytest.approx(3.0, rel=0.01)
    assert np.abs(spec.i_and).sum() < 0.05 * 3
    assert spec.source_meta["sparsify"].objective == pytest.approx(3.0, rel=0.01)


@pytest.mark.parametrize("seed", range(3))
def test_sparsify_matches_lp_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    values = rng.normal(size=32)
    best, _ = lp_floor(values)
    spec = sparsify(MaskedOutputTable(values), SparsifierConfig(iters=20000))
    res = spec.source_meta["sparsify"]
    assert res.objective == pytest.approx(best, rel=1e-4)
    assert res.dual_bound <= best + 1e-6 * best
    assert spec.l1() == pytest.approx(res.objective, rel=1e-9)


def test_sparsify_never_worse_than_zero_split(rng):
    for _ in range(5):
        table = MaskedOutputTable(rng.normal(size=64))
        res = sparsify(table, SparsifierConfig(iters=50)).source_meta["sparsify"]
        assert res.objective <= res.objective_at_zero + 1e-12


def test_sparsify_keeps_matching_and_box(rng):
    table = MaskedOutputTable(rng.normal(size=128))
    spec = sparsify(table)
    assert verify_universal_matching(spec, table).passed()
    assert np.max(np.abs(spec.split.gamma)) <= 0.5 * table.span + 1e-12


def test_best_so_far_trace_is_monotone(rng):
    table = MaskedOutputTable(rng.normal(size=64))
    trace = sparsify(table, SparsifierConfig(iters=300, gap_tol=0)).source_meta["sparsify"].trace
    used = trace[trace > 0]
    assert np.all(np.diff(used) <= 1e-12)


def test_constant_table_objective_zero():
    res = sparsify(MaskedOutputTable(np.full(16, 4.0))).source_meta["sparsify"]
    assert res.objective == 0.0


def test_rho_zero_gives_even_split(rng):
    table = MaskedOutputTable(rng.normal(size=32))
    spec = sparsify(table, SparsifierConfig(rho=0.0))
    assert np.all(spec.split.gamma == 0)


def test_batched_equals_single(rng):
    tables = [MaskedOutputTable(rng.normal(size=32)) for _ in range(3)]
    cfg = SparsifierConfig(iters=200)
    many = sparsify_many(tables, cfg)
    for t, s in zip(tables, many):
        assert np.array_equal(sparsify(t, cfg).split.gamma, s.split.gamma)


def test_batch_rejects_mixed_n():
    with pytest.raises(DecompositionError):
        sparsify_many([MaskedOutputTable(np.zeros(4)), MaskedOutputTable(np.zeros(8))])


def test_l1_objective_matches_spectrum(rng):
    table = MaskedOutputTable(rng.normal(size=16))
    split = random_feasible_split(table, rng)
    assert l1_objective(table, split.gamma) == pytest.approx(decompose(table, split).l1())


# --- saliency ---------------------------------------------------------------


def test_nothing_salient_below_tau(rng):
    spec = decompose(rng.uniform(-0.1, 0.1, size=16))
    assert salient_sets(spec, 10.0) == (frozenset(), frozenset())


def test_planted_and_salient_set():
    spec = sparsify(planted_and_table())
    f_and, f_or = salient_sets(spec, TauRule("rel", 0.25))
    assert f_and == {mask_from_vars((0, 1, 2))}
    assert f_or == frozenset()
    rep = verify_universal_matching(spec, planted_and_table(), restrict_to_salient=True, tau=TauRule("rel", 0.25))
    assert rep.max_error < 0.05 * 5


def test_tau_zero_returns_all_nonzero(rng):
    spec = decompose(rng.normal(size=16))
    f_and, f_or = salient_sets(spec, 0.0)
    assert f_and == set(np.flatnonzero(spec.i_and)) - {0}
    assert f_or == set(np.flatnonzero(spec.i_or)) - {0}


def test_tau_is_strict():
    spec = decompose([0.0, 1.0, 2.0, 3.0])
    f_and, _ = salient_sets(spec, 0.5)
    assert mask_from_vars([0]) not in f_and


def test_tau_rule_parsing():
    assert TauRule.parse("rel:0.1") == TauRule("rel", 0.1)
    assert TauRule.parse("0.3") == TauRule("abs", 0.3)
    with pytest.raises(ValueError):
        TauRule.parse("pct:1")
    with pytest.raises(ValueError):
        TauRule("abs", -1)


# --- stability conditions ----------------------------------------------------


def test_linear_positive_table_passes():
    table = linear_positive_table()
    w = np.array(table.meta["weights"])
    u = mean_output_by_order(table)
    assert np.allclose(u, np.arange(9) * w.mean())
    res = check_stability_conditions(table, max_order=1, spectrum=decompose(table, GammaSplit.all_and(table, 1.0)))
    assert res.high_order_absent.passed
    assert res.monotone_mean_output.passed
    assert res.polynomial_lower_bound.detail["p"] == pytest.approx(1.0, abs=1e-6)


def test_constant_table_passes_non_strictly():
    res = check_stability_conditions(MaskedOutputTable(np.full(16, 1.0)), max_order=0)
    assert res.monotone_mean_output.passed and res.polynomial_lower_bound.passed
    assert res.all_passed


def test_dip_table_fails_with_witness():
    res = check_stability_conditions(order_dip_table(), max_order=6)
    assert not res.monotone_mean_output.passed
    assert res.monotone_mean_output.detail["witness"] == (2, 3)


def test_high_order_condition_detects_effect():
    table = planted_and_table()
    res = check_stability_conditions(table, max_order=2, spectrum=sparsify(table))
    assert res.high_order_absent.passed is False
    assert res.high_order_absent.detail["witness"] == (0, 1, 2)


def test_max_order_out_of_range():
    with pytest.raises(ValueError):
        check_stability_conditions(MaskedOutputTable(np.zeros(8)), max_order=4)


# --- kappa -------------------------------------------------------------------


def test_kappa_planted_exact():
    tau = 0.5
    reports = [(n, tau, 3.0 * n / tau) for n in (6, 8, 10, 12)]
    kappa, rms = estimate_kappa(reports)
    assert kappa == pytest.approx(1.0, abs=1e-6)
    assert rms < 1e-9


def test_kappa_noisy(rng):
    tau = 0.2
    reports = [(n, tau, 2.0 * n**1.2 / tau * rng.uniform(0.99, 1.01)) for n in range(6, 15)]
    kappa, _ = estimate_kappa(reports)
    assert 1.1 <= kappa <= 1.3


def test_kappa_needs_three_distinct_n():
    with pytest.raises(ValueError):
        estimate_kappa([(6, 0.1, 10), (8, 0.1, 12), (8, 0.1, 13)])


def test_reconstruct_with_keep_masks_drops_effects(rng):
    table = MaskedOutputTable(rng.normal(size=8))
    spec = decompose(table)
    none = np.zeros(8, dtype=bool)
    assert np.allclose(reconstruct(spec, none, none), table.v_empty)
