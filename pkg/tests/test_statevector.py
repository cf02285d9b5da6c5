import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from vmbqc.errors import CapacityError, ConfigError
from vmbqc.models import run_unitary
from vmbqc.pauli import PauliString
from vmbqc.statevector import (
    ClusterGeometry,
    SampleSet,
    apply_clifford_layer,
    apply_pauli,
    apply_z_rotation,
    bitstring_to_index,
    exact_probabilities,
    index_to_bitstring,
    init_plus_state,
    sample_bitstrings,
)


def random_state(n, rng):
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


@pytest.mark.parametrize("n", [3, 7])
def test_plus_state_amplitudes(n):
    psi = init_plus_state(ClusterGeometry(n, 1))
    assert psi.shape == (2**n,)
    np.testing.assert_allclose(psi, 2.0 ** (-n / 2))


def test_width_limits():
    with pytest.raises(ConfigError):
        ClusterGeometry(2, 1)
    with pytest.raises(CapacityError):
        ClusterGeometry(15, 1)
    ClusterGeometry(15, 1, max_width=15)


def test_rotation_phase_rule():
    rng = np.random.default_rng(0)
    psi = random_state(4, rng)
    out = apply_z_rotation(psi, 2, 0.3)
    for x in range(16):
        b = (x >> 2) & 1
        assert out[x] == pytest.approx(psi[x] * np.exp(1j * (-1) ** b * 0.3), abs=1e-14)


def test_rotation_zero_and_inverse():
    rng = np.random.default_rng(1)
    psi = random_state(3, rng)
    np.testing.assert_array_equal(apply_z_rotation(psi, 0, 0.0), psi)
    back = apply_z_rotation(apply_z_rotation(psi, 1, 0.7), 1, -0.7)
    np.testing.assert_allclose(back, psi, atol=1e-12)


def test_rotation_by_pi_keeps_z_probabilities():
    psi = init_plus_state(ClusterGeometry(3, 1))
    np.testing.assert_allclose(exact_probabilities(apply_z_rotation(psi, 0, np.pi)), 1 / 8, atol=1e-15)


def test_rotation_rejects_bad_qubit():
    with pytest.raises(ConfigError):
        apply_z_rotation(init_plus_state(ClusterGeometry(3, 1)), 3, 0.1)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_clifford_layer_matches_dense_matrix(n):
    rng = np.random.default_rng(n)
    psi = random_state(n, rng)
    np.testing.assert_allclose(apply_clifford_layer(psi), oracles.t_c(n) @ psi, atol=1e-12)


def test_clifford_layer_round_trip():
    rng = np.random.default_rng(2)
    psi = random_state(5, rng)
    fwd = apply_clifford_layer(apply_clifford_layer(psi))
    back = apply_clifford_layer(apply_clifford_layer(fwd, adjoint=True), adjoint=True)
    np.testing.assert_allclose(back, psi, atol=1e-12)
    assert np.linalg.norm(fwd) == pytest.approx(1.0, abs=1e-10)


def test_t_c_conjugates_z3_to_x3():
    n = 5
    tc = oracles.t_c(n)
    conj = tc @ oracles.on_qubit(oracles.Z, 2, n) @ tc.conj().T
    np.testing.assert_allclose(conj, oracles.on_qubit(oracles.X, 2, n), atol=1e-12)


def test_n3_zero_angles_matches_oracle():
    geom = ClusterGeometry(3, 1)
    got = exact_probabilities(run_unitary(np.zeros((3, 1)), np.zeros((3, 1)), geom))
    want = oracles.born(oracles.circuit_state(np.zeros((3, 1))))
    np.testing.assert_allclose(got, want, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(3, 4),
    depth=st.integers(1, 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_circuits_match_dense_oracle(n, depth, seed):
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0, 2 * np.pi, (n, depth))
    s = rng.integers(0, 2, (n, depth))
    got = exact_probabilities(run_unitary(angles, s, ClusterGeometry(n, depth)))
    want = oracles.born(oracles.circuit_state(angles, s))
    np.testing.assert_allclose(got, want, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(3, 4), x=st.integers(0, 15), z=st.integers(0, 15), seed=st.integers(0, 1000))
def test_apply_pauli_matches_matrix_up_to_phase(n, x, z, seed):
    x &= (1 << n) - 1
    z &= (1 << n) - 1
    psi = random_state(n, np.random.default_rng(seed))
    pauli = PauliString(n, x, z)
    got = apply_pauli(psi, pauli)
    want = oracles.pauli_matrix(n, pauli.x_sites, pauli.z_sites) @ psi
    overlap = np.vdot(want, got)
    assert abs(overlap) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(got, overlap * want, atol=1e-12)
    np.testing.assert_allclose(np.abs(apply_pauli(got, pauli)), np.abs(psi), atol=1e-12)


def test_identity_pauli_and_width_check():
    psi = random_state(3, np.random.default_rng(3))
    np.testing.assert_array_equal(apply_pauli(psi, PauliString.identity(3)), psi)
    with pytest.raises(ConfigError):
        apply_pauli(psi, PauliString.identity(4))


def test_z_before_layer_equals_x_relabelling_after():
    # Z_q then T_c equals T_c then X_q, so the Born vector is relabelled by flipping bit q
    n = 3
    psi = init_plus_state(ClusterGeometry(n, 1))
    psi = apply_z_rotation(psi, 0, 0.4)
    base = exact_probabilities(apply_clifford_layer(psi))
    for q in range(n):
        flipped = exact_probabilities(apply_clifford_layer(apply_pauli(psi, PauliString.from_sites(n, z=[q]))))
        want = oracles.born(oracles.t_c(n) @ oracles.on_qubit(oracles.Z, q, n) @ psi)
        np.testing.assert_allclose(flipped, want, atol=1e-12)
        np.testing.assert_allclose(flipped, base[np.arange(8) ^ (1 << q)], atol=1e-12)


def test_exact_probabilities_examples():
    np.testing.assert_allclose(exact_probabilities(init_plus_state(ClusterGeometry(3, 1))), 1 / 8)
    psi = np.zeros(8, dtype=complex)
    psi[bitstring_to_index("010")] = 1
    p = exact_probabilities(psi)
    assert p[bitstring_to_index("010")] == 1.0 and p.sum() == 1.0


def test_bit_order():
    # qubit 0 is the least significant bit and is printed first
    assert bitstring_to_index("100") == 1
    assert index_to_bitstring(1, 3) == "100"
    assert index_to_bitstring(6, 3) == "011"
    for x in range(16):
        assert bitstring_to_index(index_to_bitstring(x, 4)) == x


def test_point_mass_sampling():
    psi = np.zeros(8, dtype=complex)
    psi[5] = 1
    s = sample_bitstrings(psi, 100, np.random.default_rng(0))
    assert set(s.outcomes.tolist()) == {5}


def test_uniform_sampling_frequencies():
    n, shots = 3, 100_000
    s = sample_bitstrings(init_plus_state(ClusterGeometry(n, 1)), shots, np.random.default_rng(7))
    p = 2.0**-n
    sigma = np.sqrt(shots * p * (1 - p))
    assert np.all(np.abs(s.counts() - shots * p) < 5 * sigma)


def test_sampling_is_deterministic_and_rejects_zero_shots():
    psi = init_plus_state(ClusterGeometry(4, 1))
    a = sample_bitstrings(psi, 500, np.random.default_rng(42))
    b = sample_bitstrings(psi, 500, np.random.default_rng(42))
    assert a == b
    with pytest.raises(ConfigError):
        sample_bitstrings(psi, 0, np.random.default_rng(42))


def test_sampleset_file_round_trip(tmp_path):
    s = SampleSet.from_bitstrings(["101", "000", "111"], [2, 1, 3])
    assert len(s) == 6
    path = tmp_path / "data.txt"
    s.save(path, seed=9)
    lines = path.read_text().splitlines()
    assert lines[0] == "# width=3 shots=6 seed=9"
    assert lines[1:3] == ["101", "101"]
    assert SampleSet.load(path) == s
    path.write_text("# width=3 shots=5\n101\n")
    with pytest.raises(ConfigError):
        SampleSet.load(path)


def test_sampleset_rejects_ragged_strings():
    with pytest.raises(ConfigError):
        SampleSet.from_bitstrings(["101", "01"])
