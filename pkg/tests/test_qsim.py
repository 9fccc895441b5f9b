import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qets.errors import CapacityError, ValidationError
from qets.qsim import (
    Circuit, CNot, Histogram, NoiseParams, RotY, apply_gate, basis_state, dumps_circuit,
    dumps_histogram, expectation_z, loads_circuit, loads_histogram, probabilities, run_noisy,
    run_statevector, sample, z_from_histogram, zero_state,
)

from conftest import bell, random_circuit


def test_roty_half_turn_flips():
    out = apply_gate(zero_state(1), RotY(0, math.pi))
    assert abs(abs(out[1]) - 1) < 1e-12


def test_roty_zero_is_identity(rng):
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    np.testing.assert_allclose(apply_gate(psi, RotY(1, 0.0)), psi)


def test_cnot_truth_table():
    out = apply_gate(basis_state("10"), CNot(0, 1))
    np.testing.assert_allclose(out, basis_state("11"))
    out = apply_gate(basis_state("00"), CNot(0, 1))
    np.testing.assert_allclose(out, basis_state("00"))


def test_qubit_zero_is_leftmost_bit():
    out = run_statevector(Circuit(2, (RotY(0, math.pi / 2),)))
    c = math.cos(math.pi / 4)
    np.testing.assert_allclose(out, [c, 0, c, 0], atol=1e-12)


def test_empty_circuit():
    np.testing.assert_allclose(run_statevector(Circuit(2)), basis_state("00"))


def test_bell_state():
    out = run_statevector(bell())
    np.testing.assert_allclose(out, np.array([1, 0, 0, 1]) / math.sqrt(2), atol=1e-12)


def test_capacity_limit():
    with pytest.raises(CapacityError):
        run_statevector(Circuit(27))
    with pytest.raises(CapacityError):
        run_statevector(Circuit(5), limit=4)


def test_gate_validation():
    with pytest.raises(ValidationError):
        CNot(1, 1)
    with pytest.raises(ValidationError):
        RotY(0, float("nan"))
    with pytest.raises(ValidationError):
        Circuit(2, (RotY(2, 0.1),))


@pytest.mark.parametrize("theta", [0.0, math.pi / 3, math.pi / 2])
def test_expectation_roty(theta):
    state = run_statevector(Circuit(1, (RotY(0, theta),)))
    assert expectation_z(state, 0) == pytest.approx(math.cos(theta), abs=1e-12)


def test_expectation_basis():
    assert expectation_z(basis_state("0"), 0) == 1.0
    assert expectation_z(basis_state("1"), 0) == -1.0


@given(st.integers(1, 5), st.integers(0, 30), st.integers(0, 2**31))
def test_unitarity(n, depth, seed):
    state = run_statevector(random_circuit(n, depth, np.random.default_rng(seed)))
    assert abs(np.linalg.norm(state) - 1) < 1e-12
    assert abs(probabilities(state).sum() - 1) < 1e-12


def test_sample_deterministic_state():
    assert sample(basis_state("01"), 100, seed=0).counts == {"01": 100}


def test_sample_bell_statistics():
    h = sample(run_statevector(bell()), 100_000, seed=5)
    assert abs(h.counts["00"] / h.shots - 0.5) < 0.01
    assert set(h.counts) <= {"00", "11"}


def test_sample_same_seed_identical():
    psi = run_statevector(random_circuit(4, 20, np.random.default_rng(2)))
    assert sample(psi, 1000, 9).counts == sample(psi, 1000, 9).counts


def test_noise_zero_matches_noiseless():
    circ = random_circuit(4, 20, np.random.default_rng(3))
    noisy = run_noisy(circ, NoiseParams(0, 0, 0), 2000, seed=11)
    clean = sample(run_statevector(circ), 2000, seed=11)
    assert noisy.counts == clean.counts


def test_certain_readout_flip():
    assert run_noisy(Circuit(1), NoiseParams(0, 0, 1.0), 50, seed=0).counts == {"1": 50}


def test_full_depolarizing_fixed_point():
    rng = np.random.default_rng(4)
    circ = random_circuit(3, 40, rng)
    shots = 100_000
    h = run_noisy(circ, NoiseParams(0.75, 0.75, 0.0), shots, seed=1)
    assert abs(z_from_histogram(h, 0)) < 3 / math.sqrt(shots)


def test_noisy_seed_determinism():
    circ = random_circuit(4, 30, np.random.default_rng(6))
    p = NoiseParams(0.01, 0.05, 0.02)
    assert run_noisy(circ, p, 3000, 8).counts == run_noisy(circ, p, 3000, 8).counts


def test_noise_validation():
    with pytest.raises(ValidationError):
        NoiseParams(p1=1.5)
    with pytest.raises(ValidationError):
        run_noisy(Circuit(1), NoiseParams(), 0, 1)


@pytest.mark.parametrize("counts,expected", [
    ({"00": 300, "10": 300}, 0.0),
    ({"00": 600}, 1.0),
    ({"10": 450, "00": 150}, -0.5),
])
def test_z_from_histogram(counts, expected):
    assert z_from_histogram(Histogram(counts), 0) == expected


def test_histogram_validation():
    with pytest.raises(ValidationError):
        Histogram({"0": 1, "01": 1})
    with pytest.raises(ValidationError):
        Histogram({"0a": 1})
    with pytest.raises(ValidationError):
        Histogram({})


@given(st.integers(1, 4), st.integers(0, 25), st.integers(0, 2**31))
def test_circuit_text_roundtrip(n, depth, seed):
    circ = random_circuit(n, depth, np.random.default_rng(seed))
    assert loads_circuit(dumps_circuit(circ)) == circ


@given(st.dictionaries(st.text("01", min_size=3, max_size=3), st.integers(1, 10**6), min_size=1))
def test_histogram_text_roundtrip(counts):
    h = Histogram(counts)
    assert loads_histogram(dumps_histogram(h)).counts == h.counts


def test_circuit_parse_errors():
    with pytest.raises(ValidationError):
        loads_circuit("ry 0 0.1\n")
    with pytest.raises(ValidationError):
        loads_circuit("qubits 2\nfoo 1 2\n")
    with pytest.raises(ValidationError):
        loads_histogram("shots 5\n00 3\n")
