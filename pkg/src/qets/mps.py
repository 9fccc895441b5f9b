"""Matrix product state backend with fixed bond-dimension truncation.

Site tensors have shape (chi_left, 2, chi_right). The state is kept in
mixed-canonical form around ``center`` so that each two-site SVD truncation
is optimal for that bond and the retained spectrum can be renormalized
locally. Gates on non-adjacent sites are routed with SWAPs, which count
toward ``swap_count`` and cost reports but not toward logical gate tallies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from qets.errors import ValidationError
from qets.qsim import Circuit, CNot, RotY, n_qubits_of

FLOPS_PER_SITE_UPDATE = 8

_CNOT_UP = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CNOT_DOWN = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex)
_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


@dataclass(frozen=True)
class MPSState:
    tensors: tuple
    chi_max: int
    center: int = 0
    swap_count: int = 0
    discarded_weight: float = 0.0

    def __post_init__(self):
        if self.chi_max < 1:
            raise ValidationError("chi_max must be positive")
        ts = self.tensors
        if not ts:
            raise ValidationError("MPS needs at least one site")
        if ts[0].shape[0] != 1 or ts[-1].shape[2] != 1:
            raise ValidationError("boundary bonds must have dimension 1")
        for a, b in zip(ts, ts[1:]):
            if a.ndim != 3 or a.shape[1] != 2 or a.shape[2] != b.shape[0]:
                raise ValidationError(f"malformed site tensors {a.shape} / {b.shape}")

    @property
    def n_qubits(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensors[self.center]))


@dataclass(frozen=True)
class MPSCostReport:
    n_qubits: int
    chi: int
    gate_count: int
    estimated_flops: float
    scaling_class: str = "Q·chi^3"
    constant: int = FLOPS_PER_SITE_UPDATE


def mps_from_zero(n_qubits: int, chi_max: int = 1) -> MPSState:
    if n_qubits < 1:
        raise ValidationError("Q must be >= 1")
    site = np.zeros((1, 2, 1), dtype=complex)
    site[0, 0, 0] = 1.0
    return MPSState(tuple(site.copy() for _ in range(n_qubits)), chi_max)


def _move_center(ts: list, center: int, target: int) -> int:
    while center < target:
        a = ts[center]
        l, _, r = a.shape
        q, rmat = np.linalg.qr(a.reshape(l * 2, r))
        ts[center] = q.reshape(l, 2, q.shape[1])
        ts[center + 1] = np.tensordot(rmat, ts[center + 1], axes=(1, 0))
        center += 1
    while center > target:
        a = ts[center]
        l, _, r = a.shape
        q, rmat = np.linalg.qr(a.reshape(l, 2 * r).T)
        ts[center] = q.T.reshape(q.shape[1], 2, r)
        ts[center - 1] = np.tensordot(ts[center - 1], rmat.T, axes=(2, 0))
        center -= 1
    return center


def _two_site(ts: list, i: int, u: np.ndarray, chi_max: int) -> float:
    """Apply 4x4 ``u`` to sites (i, i+1); the center must sit at i. Returns discarded weight."""
    a, b = ts[i], ts[i + 1]
    l, r = a.shape[0], b.shape[2]
    theta = np.tensordot(a, b, axes=(2, 0))  # (l, 2, 2, r)
    theta = np.einsum("ijkl,aklb->aijb", u.reshape(2, 2, 2, 2), theta)
    m = theta.reshape(l * 2, 2 * r)
    uu, s, vh = np.linalg.svd(m, full_matrices=False)
    keep = max(1, min(chi_max, int(np.count_nonzero(s > s[0] * 1e-14)) if s[0] > 0 else 1))
    total = float(np.sum(s ** 2))
    kept = s[:keep]
    lost = total - float(np.sum(kept ** 2))
    kept = kept / np.linalg.norm(kept)
    ts[i] = uu[:, :keep].reshape(l, 2, keep)
    ts[i + 1] = (kept[:, None] * vh[:keep]).reshape(keep, 2, r)
    return max(lost, 0.0) / total if total > 0 else 0.0


def _roty_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def apply_gate_mps(mps: MPSState, gate) -> MPSState:
    """Apply one RotY or CNot, returning a new state."""
    n = mps.n_qubits
    for q in gate.qubits:
        if q >= n:
            raise ValidationError(f"gate {gate} index out of range for Q={n}")
    ts = list(mps.tensors)
    if isinstance(gate, RotY):
        ts[gate.qubit] = np.einsum("ij,ajb->aib", _roty_matrix(gate.theta), ts[gate.qubit])
        return replace(mps, tensors=tuple(ts))

    lo, hi = sorted((gate.control, gate.target))
    center = mps.center
    swaps = 0
    lost = mps.discarded_weight
    # bring site hi down to lo + 1
    for j in range(hi - 1, lo, -1):
        center = _move_center(ts, center, j)
        lost += _two_site(ts, j, _SWAP, mps.chi_max)
        swaps += 1
    center = _move_center(ts, center, lo)
    u = _CNOT_UP if gate.control == lo else _CNOT_DOWN
    lost += _two_site(ts, lo, u, mps.chi_max)
    center = lo + 1
    for j in range(lo + 1, hi):
        center = _move_center(ts, center, j)
        lost += _two_site(ts, j, _SWAP, mps.chi_max)
        swaps += 1
        center = j + 1
    return MPSState(tuple(ts), mps.chi_max, center, mps.swap_count + swaps, lost)


def run_mps(circuit: Circuit, chi_max: int) -> MPSState:
    state = mps_from_zero(circuit.n_qubits, chi_max)
    for g in circuit.gates:
        state = apply_gate_mps(state, g)
    return state


def to_statevector(mps: MPSState) -> np.ndarray:
    """Contract to a flat vector in the qubit-0-most-significant order."""
    out = mps.tensors[0]
    for t in mps.tensors[1:]:
        out = np.tensordot(out, t, axes=(out.ndim - 1, 0))
    return out.reshape(-1)


def mps_fidelity(mps: MPSState, reference: np.ndarray) -> float:
    if n_qubits_of(reference) != mps.n_qubits:
        raise ValidationError(
            f"dimension mismatch: MPS has {mps.n_qubits} qubits, reference {n_qubits_of(reference)}"
        )
    overlap = np.vdot(reference, to_statevector(mps))
    return float(min(1.0, abs(overlap) ** 2))


def mps_expectation_z(mps: MPSState, qubit: int) -> float:
    ts = list(mps.tensors)
    _move_center(ts, mps.center, qubit)
    a = ts[qubit]
    p0 = float(np.sum(np.abs(a[:, 0, :]) ** 2))
    p1 = float(np.sum(np.abs(a[:, 1, :]) ** 2))
    return (p0 - p1) / (p0 + p1)


def mps_cost(n_qubits: int, chi: int, gate_count: int,
             constant: int = FLOPS_PER_SITE_UPDATE) -> MPSCostReport:
    """Dominant-cost model: ``constant * gate_count * chi**3``.

    With a gate count linear in Q this is the usual O(Q chi^3) law.
    """
    if n_qubits < 1 or chi < 1 or gate_count < 1:
        raise ValidationError("mps_cost inputs must be positive")
    flops = float(constant) * gate_count * float(chi) ** 3
    return MPSCostReport(n_qubits, chi, gate_count, flops, constant=constant)


def log_depth_chi(n_qubits: int) -> int:
    """chi = 2**D with D = ceil(log2 Q) entangling blocks."""
    return 1 << max(0, math.ceil(math.log2(n_qubits)))
