import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qets import ansatz as anz
from qets.errors import ValidationError
from qets.mps import (
    apply_gate_mps, log_depth_chi, mps_cost, mps_expectation_z, mps_fidelity, mps_from_zero, run_mps,
    to_statevector,
)
from qets.qsim import Circuit, CNot, RotY, basis_state, expectation_z, run_statevector

from conftest import bell, random_circuit


def test_zero_state_single_site():
    np.testing.assert_allclose(to_statevector(mps_from_zero(1)), [1, 0])


@pytest.mark.parametrize("n", [1, 3, 7])
def test_zero_state_contracts_to_basis(n):
    mps = mps_from_zero(n)
    np.testing.assert_allclose(to_statevector(mps), basis_state("0" * n))
    assert mps.norm() == 1.0


def test_local_gate_keeps_product_bond():
    mps = apply_gate_mps(mps_from_zero(3, 4), RotY(1, 0.7))
    assert mps.max_bond == 1


def test_bell_needs_bond_two():
    mps = run_mps(bell(), 2)
    assert mps.bond_dims == [2]
    assert mps_fidelity(mps, run_statevector(bell())) == pytest.approx(1.0, abs=1e-12)


def test_bell_rank_one_truncation():
    mps = run_mps(bell(), 1)
    assert abs(mps_fidelity(mps, run_statevector(bell())) - 0.5) < 1e-10
    assert mps.discarded_weight == pytest.approx(0.5)
    assert mps.norm() == pytest.approx(1.0)


def test_fidelity_basis_states():
    mps = mps_from_zero(3)
    assert mps_fidelity(mps, basis_state("000")) == 1.0
    assert mps_fidelity(mps, basis_state("010")) == 0.0
    with pytest.raises(ValidationError):
        mps_fidelity(mps, basis_state("00"))


def test_ansatz_q8_exact_bond(rng):
    cfg = anz.AnsatzConfig(8, reuploads=1, main_blocks=2)
    circ = anz.build_circuit(cfg, rng.uniform(-1, 1, 8), anz.random_params(cfg, rng))
    mps = run_mps(circ, 16)
    assert mps_fidelity(mps, run_statevector(circ)) >= 1 - 1e-8
    assert mps.discarded_weight < 1e-20


def test_nonadjacent_gates_route_with_swaps():
    circ = Circuit(5, (RotY(0, 1.1), CNot(0, 4), CNot(4, 1)))
    mps = run_mps(circ, 32)
    assert mps.swap_count > 0
    assert mps_fidelity(mps, run_statevector(circ)) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(2, 6), st.integers(0, 25), st.integers(0, 2**31))
def test_full_bond_matches_statevector(n, depth, seed):
    circ = random_circuit(n, depth, np.random.default_rng(seed))
    mps = run_mps(circ, 1 << (n // 2))
    ref = run_statevector(circ)
    assert mps_fidelity(mps, ref) >= 1 - 1e-10
    for q in range(n):
        assert mps_expectation_z(mps, q) == pytest.approx(expectation_z(ref, q), abs=1e-9)


@given(st.integers(3, 6), st.integers(1, 30), st.integers(0, 2**31), st.integers(1, 4))
def test_truncated_never_beats_exact(n, depth, seed, chi):
    circ = random_circuit(n, depth, np.random.default_rng(seed))
    ref = run_statevector(circ)
    truncated = run_mps(circ, chi)
    exact = run_mps(circ, 1 << (n // 2))
    assert mps_fidelity(truncated, ref) <= mps_fidelity(exact, ref) + 1e-12
    assert truncated.norm() == pytest.approx(1.0, abs=1e-10)


def test_fidelity_not_monotone_in_chi_for_greedy_truncation():
    # Sequential per-gate truncation is locally optimal only; a larger bond can end up worse.
    circ = random_circuit(5, 30, np.random.default_rng(36))
    ref = run_statevector(circ)
    assert mps_fidelity(run_mps(circ, 2), ref) < mps_fidelity(run_mps(circ, 1), ref)


def test_cost_linear_in_gates_at_chi_one():
    assert mps_cost(10, 1, 200).estimated_flops == 2 * mps_cost(10, 1, 100).estimated_flops


def test_cost_quartic_on_doubled_q():
    # chi = 2**ceil(log2 Q) and gate count linear in Q
    def flops(q):
        return mps_cost(q, log_depth_chi(q), 17 * q).estimated_flops

    assert flops(32) / flops(16) == 16.0
    assert log_depth_chi(10) == 16 and log_depth_chi(16) == 16


def test_cost_validation():
    with pytest.raises(ValidationError):
        mps_cost(4, 0, 10)
    with pytest.raises(ValidationError):
        mps_from_zero(2, chi_max=0)
