import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from vmbqc.errors import CapacityError, ConfigError
from vmbqc.models import (
    TWO_PI,
    CorrectionSchedule,
    ModelSpec,
    byproduct_weight,
    canonical_angles,
    enumerate_byproducts,
    exact_channel_distribution,
    make_restricted,
    placement_model,
    propagate_batch,
    random_target,
    run_distilled_unitary,
    run_flipped,
    run_unitary,
    sample_byproducts,
    sample_counts,
    sample_model,
    unitary_limit,
)
from vmbqc.pauli import propagate
from vmbqc.statevector import ClusterGeometry, exact_probabilities, sample_bitstrings, total_variation


def tv(a, b):
    return 0.5 * np.abs(np.asarray(a) - np.asarray(b)).sum()


def unitary_dist(angles, geom):
    return exact_probabilities(run_unitary(angles, np.zeros(geom.shape, dtype=int), geom))


# -- byproduct sampling and weights -----------------------------------------

def test_p_one_never_draws_byproducts():
    sched = CorrectionSchedule.with_shared_p(np.ones((4, 3), dtype=bool), 1.0)
    assert not sample_byproducts(sched, np.random.default_rng(0), shots=1000).any()


@pytest.mark.parametrize("p, expected", [(0.0, 0.5), (0.135, 0.4325)])
def test_byproduct_frequency(p, expected):
    mask = np.zeros((3, 2), dtype=bool)
    mask[1, 0] = True
    sched = CorrectionSchedule.with_shared_p(mask, p)
    n = 100_000
    s = sample_byproducts(sched, np.random.default_rng(5), shots=n)
    assert not s[:, ~mask].any()
    freq = s[:, 1, 0].mean()
    assert abs(freq - expected) < 5 * np.sqrt(expected * (1 - expected) / n)


def test_single_site_weights():
    mask = np.zeros((3, 2), dtype=bool)
    mask[0, 1] = True
    sched = CorrectionSchedule.with_shared_p(mask, 0.3)
    s = np.zeros((3, 2), dtype=int)
    assert byproduct_weight(s, sched) == pytest.approx(0.65)
    s[0, 1] = 1
    assert byproduct_weight(s, sched) == pytest.approx(0.35)
    s[2, 0] = 1
    with pytest.raises(ConfigError):
        byproduct_weight(s, sched)


@settings(max_examples=20, deadline=None)
@given(k=st.integers(0, 16), seed=st.integers(0, 1000))
def test_enumerated_weights_sum_to_one(k, seed):
    rng = np.random.default_rng(seed)
    mask = np.zeros((4, 4), dtype=bool)
    mask.flat[rng.choice(16, size=k, replace=False)] = True
    sched = CorrectionSchedule.per_site(rng.uniform(0, 1, (4, 4)), mask)
    patterns, weights = enumerate_byproducts(sched)
    assert len(patterns) == 2**k
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    for i in rng.choice(len(patterns), size=min(4, len(patterns)), replace=False):
        assert weights[i] == pytest.approx(byproduct_weight(patterns[i], sched), rel=1e-12)


def test_enumeration_cap():
    sched = CorrectionSchedule.with_shared_p(np.ones((5, 4), dtype=bool), 0.5)
    with pytest.raises(CapacityError):
        enumerate_byproducts(sched)
    model = make_restricted("A", ClusterGeometry(5, 4), np.zeros((5, 4)), 0.5)
    with pytest.raises(CapacityError):
        exact_channel_distribution(model)


# -- circuits ----------------------------------------------------------------

def test_run_unitary_matches_oracle():
    rng = np.random.default_rng(11)
    geom = ClusterGeometry(3, 2)
    angles = rng.uniform(0, TWO_PI, geom.shape)
    np.testing.assert_allclose(unitary_dist(angles, geom), oracles.born(oracles.circuit_state(angles)), atol=1e-12)


def test_single_byproduct_changes_distribution_as_propagation_predicts():
    rng = np.random.default_rng(12)
    geom = ClusterGeometry(3, 2)
    angles = rng.uniform(0, TWO_PI, geom.shape)
    base = unitary_dist(angles, geom)
    for q in range(3):
        for j in range(2):
            s = np.zeros(geom.shape, dtype=int)
            s[q, j] = 1
            got = exact_probabilities(run_unitary(angles, s, geom))
            np.testing.assert_allclose(got, oracles.born(oracles.circuit_state(angles, s)), atol=1e-12)
            flips, terminal = propagate(s)
            # Born probabilities only see the X part of the terminal string
            relabelled = exact_probabilities(run_flipped(angles, flips, geom))[np.arange(8) ^ terminal.x_mask]
            np.testing.assert_allclose(got, relabelled, atol=1e-12)
            if flips.any() or terminal.x_mask:
                assert tv(got, base) > 1e-6


def test_distilled_routes_agree():
    geom = ClusterGeometry(5, 3)
    rng = np.random.default_rng(13)
    angles = rng.uniform(0, TWO_PI, geom.shape)
    s = np.zeros(geom.shape, dtype=int)
    s[2, 0] = 1
    a = run_distilled_unitary(angles, s, geom, via="pauli")
    b = run_distilled_unitary(angles, s, geom, via="flips")
    flips = np.zeros(geom.shape, dtype=bool)
    flips[2, 1] = flips[1, 2] = flips[3, 2] = True
    c = run_flipped(angles, flips, geom)
    np.testing.assert_allclose(exact_probabilities(a), exact_probabilities(c), atol=1e-10)
    np.testing.assert_allclose(exact_probabilities(b), exact_probabilities(c), atol=1e-12)
    zero = np.zeros(geom.shape, dtype=int)
    np.testing.assert_allclose(run_distilled_unitary(angles, zero, geom, via="pauli"), run_unitary(angles, zero, geom))


def test_distilled_last_layer_byproduct_is_invisible():
    geom = ClusterGeometry(4, 3)
    angles = np.random.default_rng(14).uniform(0, TWO_PI, geom.shape)
    for q in range(4):
        s = np.zeros(geom.shape, dtype=int)
        s[q, 2] = 1
        got = exact_probabilities(run_distilled_unitary(angles, s, geom, via="pauli"))
        np.testing.assert_allclose(got, unitary_dist(angles, geom), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(3, 6), d=st.integers(1, 4), seed=st.integers(0, 10**6))
def test_batched_propagation_agrees(n, d, seed):
    s = np.random.default_rng(seed).integers(0, 2, (5, n, d))
    flips, x, z = propagate_batch(s)
    for b in range(5):
        f, p = propagate(s[b])
        np.testing.assert_array_equal(flips[b], f)
        assert (x[b], z[b]) == (p.x_mask, p.z_mask)


# -- restricted variants and exact channels ------------------------------------

@pytest.mark.parametrize("tag, count", [("A", 35), ("B", 7), ("C", 5), ("D", 1)])
def test_restricted_mask_sizes(tag, count):
    model = make_restricted(tag, ClusterGeometry(7, 5), np.zeros((7, 5)), 0.5)
    assert model.schedule.num_masked == count
    if tag == "B":
        assert model.schedule.mask[:, 0].all()
    if tag in "CD":
        assert model.schedule.mask[3].sum() == count


def test_restricted_rejects_bad_input():
    geom = ClusterGeometry(3, 1)
    with pytest.raises(ConfigError):
        make_restricted("E", geom, np.zeros((3, 1)), 0.5)
    with pytest.raises(ConfigError):
        make_restricted("A", geom, np.zeros((3, 1)), 1.5)


@pytest.mark.parametrize("tag", ["A", "B", "C", "D"])
@pytest.mark.parametrize("distilled", [False, True])
def test_unitary_limit(tag, distilled):
    geom = ClusterGeometry(4, 3)
    angles = np.random.default_rng(15).uniform(0, TWO_PI, geom.shape)
    model = make_restricted(tag, geom, angles, 1.0, distilled=distilled)
    assert total_variation(exact_channel_distribution(model), unitary_dist(angles, geom)) < 1e-12
    assert total_variation(exact_channel_distribution(unitary_limit(model)), unitary_dist(angles, geom)) < 1e-12


@pytest.mark.parametrize("tag", ["A", "B", "C", "D"])
@pytest.mark.parametrize("p", [0.0, 0.135, 0.5, 1.0])
def test_channel_normalisation_and_oracle(tag, p):
    geom = ClusterGeometry(3, 2)
    angles = np.random.default_rng(16).uniform(0, TWO_PI, geom.shape)
    model = make_restricted(tag, geom, angles, p)
    dist = exact_channel_distribution(model)
    assert dist.sum() == pytest.approx(1.0, abs=1e-10) and (dist >= 0).all()
    np.testing.assert_allclose(dist, oracles.channel_distribution(angles, model.schedule.probabilities), atol=1e-12)


@pytest.mark.parametrize("p", [0.0, 0.25, 0.5, 0.75, 1.0])
@pytest.mark.parametrize("distilled", [False, True])
def test_model_d_two_term_mixture(p, distilled):
    geom = ClusterGeometry(5, 3)
    angles = np.random.default_rng(17).uniform(0, TWO_PI, geom.shape)
    model = make_restricted("D", geom, angles, p, distilled=distilled)
    s = np.zeros(geom.shape, dtype=int)
    s[2, 0] = 1
    run = run_distilled_unitary if distilled else run_unitary
    flipped = exact_probabilities(run(angles, s, geom))
    want = (1 - p) / 2 * flipped + (1 + p) / 2 * unitary_dist(angles, geom)
    np.testing.assert_allclose(exact_channel_distribution(model), want, atol=1e-12)


def test_distilled_layer_d_placement_equals_unitary():
    geom = ClusterGeometry(7, 4)
    angles = np.random.default_rng(18).uniform(0, 1, geom.shape)
    model = placement_model(geom, angles, [(3, 3)], 0.135)
    assert total_variation(exact_channel_distribution(model), unitary_dist(angles, geom)) < 1e-12
    assert placement_model(geom, angles, [], 0.135).variant == "unitary"


# -- sampling ------------------------------------------------------------------

def test_unitary_sampling_equals_statevector_sampling():
    geom = ClusterGeometry(4, 2)
    angles = np.random.default_rng(19).uniform(0, TWO_PI, geom.shape)
    model = ModelSpec.unitary(geom, angles)
    a = sample_model(model, 1000, np.random.default_rng(3))
    b = sample_bitstrings(run_unitary(angles, np.zeros(geom.shape, dtype=int), geom), 1000, np.random.default_rng(3))
    assert a == b


def test_sampling_is_deterministic():
    geom = ClusterGeometry(4, 2)
    model = make_restricted("A", geom, np.random.default_rng(20).uniform(0, TWO_PI, geom.shape), 0.4)
    assert sample_model(model, 2000, np.random.default_rng(1)) == sample_model(model, 2000, np.random.default_rng(1))


def test_model_d_p_zero_sampling():
    geom = ClusterGeometry(5, 3)
    model = make_restricted("D", geom, np.random.default_rng(21).uniform(0, TWO_PI, geom.shape), 0.0)
    samples = sample_model(model, 100_000, np.random.default_rng(2))
    assert tv(samples.empirical(), exact_channel_distribution(model)) < 0.02


def test_model_a_sampling_matches_exact():
    geom = ClusterGeometry(3, 1)
    model = make_restricted("A", geom, np.random.default_rng(22).uniform(0, TWO_PI, geom.shape), 0.5)
    samples = sample_model(model, 1_000_000, np.random.default_rng(4))
    assert tv(samples.empirical(), exact_channel_distribution(model)) < 0.005


@pytest.mark.parametrize("n", [3, 5])
def test_sampling_convergence_gate(n):
    geom = ClusterGeometry(n, 2)
    model = make_restricted("B", geom, np.random.default_rng(n).uniform(0, TWO_PI, geom.shape), 0.3, distilled=True)
    shots = 20_000
    exact = exact_channel_distribution(model)
    bound = 3 / np.sqrt(shots) * 2 ** (n / 2)
    assert tv(sample_model(model, shots, np.random.default_rng(8)).empirical(), exact) < bound
    assert tv(sample_counts(model, shots, np.random.default_rng(9)) / shots, exact) < bound


def test_random_target():
    geom = ClusterGeometry(4, 3)
    t = random_target(geom, np.random.default_rng(0), (0, 1), (0.9, 1.0))
    assert not t.schedule.shared and t.schedule.mask.all()
    assert ((t.schedule.probabilities >= 0.9) & (t.schedule.probabilities <= 1)).all()
    assert ((t.angles >= 0) & (t.angles < 1)).all()
    assert random_target(geom, np.random.default_rng(0), p_range=(1, 1)).variant == "unitary"
    with pytest.raises(ConfigError):
        random_target(geom, np.random.default_rng(0), p_range=(0.9, 1.2))


# -- model records -------------------------------------------------------------

def test_angles_are_canonicalised():
    a = canonical_angles([[-0.5, 7.0, TWO_PI]])
    assert ((a >= 0) & (a < TWO_PI)).all()
    assert a[0, 0] == pytest.approx(TWO_PI - 0.5) and a[0, 2] == 0.0
    with pytest.raises(ConfigError):
        canonical_angles([[np.nan]])


def test_unitary_variant_requires_empty_mask():
    geom = ClusterGeometry(3, 1)
    sched = CorrectionSchedule.with_shared_p(np.ones((3, 1), dtype=bool), 0.5)
    with pytest.raises(ConfigError):
        ModelSpec(geom, np.zeros((3, 1)), sched, "unitary")


def test_schedule_invariants():
    with pytest.raises(ConfigError):
        CorrectionSchedule(np.ones((2, 2), dtype=bool), np.array([[0.1, 0.2], [0.1, 0.1]]), shared=True)
    sched = CorrectionSchedule.with_shared_p(np.eye(3, dtype=bool), 0.4)
    assert sched.p == 0.4
    assert (sched.probabilities[~sched.mask] == 1).all()


def test_model_round_trip(tmp_path):
    geom = ClusterGeometry(4, 3)
    rng = np.random.default_rng(23)
    for model in (
        make_restricted("C", geom, rng.uniform(0, TWO_PI, geom.shape), 0.37, distilled=True),
        random_target(geom, rng),
        ModelSpec.unitary(geom, rng.uniform(0, TWO_PI, geom.shape)),
    ):
        path = tmp_path / "m.json"
        model.save(path, seed=5)
        back = ModelSpec.load(path)
        assert back.variant == model.variant and back.geometry == model.geometry
        np.testing.assert_array_equal(back.angles, model.angles)
        np.testing.assert_array_equal(back.schedule.mask, model.schedule.mask)
        np.testing.assert_array_equal(back.schedule.probabilities, model.schedule.probabilities)
        assert back.schedule.shared == model.schedule.shared
