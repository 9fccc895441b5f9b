"""Statevector simulation, trajectory noise, and shot sampling.

Bit ordering: qubit 0 is the leftmost character of every bitstring and the
most significant bit of the flat amplitude index. The state is stored as a
flat complex vector of length 2**Q; kernels reshape it to a (2,)*Q tensor
where axis k is qubit k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from qets.errors import CapacityError, ValidationError

STATEVECTOR_LIMIT = 26
# complex128 entries per trajectory batch (~128 MiB)
_TRAJECTORY_BATCH_ENTRIES = 1 << 23


@dataclass(frozen=True)
class RotY:
    qubit: int
    theta: float

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValidationError(f"RotY angle must be finite, got {self.theta}")
        if self.qubit < 0:
            raise ValidationError(f"negative qubit index {self.qubit}")

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.qubit,)


@dataclass(frozen=True)
class CNot:
    control: int
    target: int

    def __post_init__(self):
        if self.control == self.target:
            raise ValidationError(f"CNot control equals target ({self.control})")
        if self.control < 0 or self.target < 0:
            raise ValidationError("negative qubit index in CNot")

    @property
    def qubits(self) -> tuple[int, ...]:
        return (self.control, self.target)


Gate = Union[RotY, CNot]


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple = ()

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValidationError(f"qubit count must be positive, got {self.n_qubits}")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            for q in g.qubits:
                if q >= self.n_qubits:
                    raise ValidationError(f"gate {g} index out of range for Q={self.n_qubits}")

    def __len__(self) -> int:
        return len(self.gates)

    def count(self) -> tuple[int, int]:
        """(single-qubit, two-qubit) gate counts by direct scan."""
        two = sum(isinstance(g, CNot) for g in self.gates)
        return len(self.gates) - two, two

    def relabel(self, perm) -> "Circuit":
        """Image of this circuit with logical qubit q placed on physical qubit perm[q]."""
        gates = []
        for g in self.gates:
            if isinstance(g, RotY):
                gates.append(RotY(int(perm[g.qubit]), g.theta))
            else:
                gates.append(CNot(int(perm[g.control]), int(perm[g.target])))
        return Circuit(self.n_qubits, tuple(gates))


@dataclass(frozen=True)
class NoiseParams:
    p1: float = 2e-4
    p2: float = 5e-3
    p_ro: float = 5e-3

    def __post_init__(self):
        for name in ("p1", "p2", "p_ro"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"noise parameter {name}={v} outside [0, 1]")

    @property
    def is_zero(self) -> bool:
        return self.p1 == 0 and self.p2 == 0 and self.p_ro == 0


@dataclass
class Histogram:
    counts: dict[str, int]
    n_qubits: int = field(default=0)

    def __post_init__(self):
        self.counts = {k: int(v) for k, v in self.counts.items() if int(v) != 0}
        if not self.counts:
            raise ValidationError("histogram has no counts")
        lengths = {len(k) for k in self.counts}
        if len(lengths) != 1:
            raise ValidationError(f"bitstring keys of mixed length: {sorted(lengths)}")
        (n,) = lengths
        if self.n_qubits and self.n_qubits != n:
            raise ValidationError(f"keys have length {n}, expected {self.n_qubits}")
        self.n_qubits = n
        for k, v in self.counts.items():
            if set(k) - {"0", "1"}:
                raise ValidationError(f"malformed bitstring key {k!r}")
            if v < 0:
                raise ValidationError(f"negative count for {k}")

    @property
    def shots(self) -> int:
        return sum(self.counts.values())

    def frequencies(self) -> dict[str, float]:
        total = self.shots
        return {k: v / total for k, v in self.counts.items()}


def _check_capacity(n_qubits: int, limit: int | None):
    limit = STATEVECTOR_LIMIT if limit is None else limit
    if n_qubits > limit:
        raise CapacityError(f"Q={n_qubits} exceeds the statevector limit of {limit} qubits")


def n_qubits_of(state: np.ndarray) -> int:
    n = int(state.size).bit_length() - 1
    if n < 0 or 1 << n != state.size:
        raise ValidationError(f"state length {state.size} is not a power of two")
    return n


def zero_state(n_qubits: int) -> np.ndarray:
    state = np.zeros(1 << n_qubits, dtype=complex)
    state[0] = 1.0
    return state


def basis_state(bits: str) -> np.ndarray:
    state = np.zeros(1 << len(bits), dtype=complex)
    state[int(bits, 2)] = 1.0
    return state


# --- batched kernels -------------------------------------------------------
# ``batch`` has shape (T, 2, ..., 2); axis q + 1 is qubit q. Updates are in place.


def _split(batch: np.ndarray, qubit: int) -> np.ndarray:
    """View ``batch`` as (T, 2**qubit, 2, rest) so qubit is axis 2."""
    return batch.reshape(batch.shape[0], 1 << qubit, 2, -1)


def _roty(batch: np.ndarray, qubit: int, theta):
    v = _split(batch, qubit)
    half = np.asarray(theta, dtype=float) / 2.0
    c, sn = np.cos(half), np.sin(half)
    if c.ndim:
        c, sn = c[:, None, None], sn[:, None, None]
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :].copy()
    a0 *= c
    a0 -= sn * v[:, :, 1, :]
    a1 *= c
    a1 += sn * v[:, :, 0, :]
    v[:, :, 0, :] = a0
    v[:, :, 1, :] = a1


def _cnot(batch: np.ndarray, control: int, target: int):
    s = np.moveaxis(batch, (control + 1, target + 1), (0, 1))
    tmp = s[1, 0].copy()
    s[1, 0] = s[1, 1]
    s[1, 1] = tmp


def _pauli(batch: np.ndarray, qubit: int, kind: int):
    """Apply X (1), Y (2) or Z (3) to every row of ``batch``."""
    v = _split(batch, qubit)
    if kind == 1:
        tmp = v[:, :, 0, :].copy()
        v[:, :, 0, :] = v[:, :, 1, :]
        v[:, :, 1, :] = tmp
    elif kind == 2:
        tmp = v[:, :, 0, :].copy()
        v[:, :, 0, :] = -1j * v[:, :, 1, :]
        v[:, :, 1, :] = 1j * tmp
    elif kind == 3:
        v[:, :, 1, :] *= -1


def _apply_to_batch(batch: np.ndarray, gate: Gate, theta=None):
    if isinstance(gate, RotY):
        _roty(batch, gate.qubit, gate.theta if theta is None else theta)
    else:
        _cnot(batch, gate.control, gate.target)


# --- public operations ------------------------------------------------------


def apply_gate(state: np.ndarray, gate: Gate) -> np.ndarray:
    """Return a new state with ``gate`` applied."""
    n = n_qubits_of(state)
    for q in gate.qubits:
        if q >= n:
            raise ValidationError(f"gate {gate} index out of range for Q={n}")
    out = np.array(state, dtype=complex).reshape((1,) + (2,) * n)
    _apply_to_batch(out, gate)
    return out.reshape(-1)


def run_statevector(circuit: Circuit, limit: int | None = None) -> np.ndarray:
    _check_capacity(circuit.n_qubits, limit)
    n = circuit.n_qubits
    batch = zero_state(n).reshape((1,) + (2,) * n)
    for g in circuit.gates:
        _apply_to_batch(batch, g)
    return batch.reshape(-1)


def probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(state) ** 2
    return p / p.sum()


def _z_signs(n_qubits: int, qubit: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    bit = (idx >> (n_qubits - 1 - qubit)) & 1
    return 1.0 - 2.0 * bit


def expectation_z(state: np.ndarray, qubit: int) -> float:
    n = n_qubits_of(state)
    if not 0 <= qubit < n:
        raise ValidationError(f"qubit {qubit} out of range for Q={n}")
    return float(np.dot(np.abs(state) ** 2, _z_signs(n, qubit)))


def _counts_from_outcomes(outcomes: np.ndarray, n_qubits: int) -> Histogram:
    values, counts = np.unique(outcomes, return_counts=True)
    return Histogram(
        {format(int(v), f"0{n_qubits}b"): int(c) for v, c in zip(values, counts)},
        n_qubits,
    )


def sample(state: np.ndarray, shots: int, seed: int) -> Histogram:
    """Draw ``shots`` i.i.d. measurement outcomes in the computational basis."""
    if shots < 1:
        raise ValidationError(f"shots must be >= 1, got {shots}")
    n = n_qubits_of(state)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(shots, probabilities(state))
    nz = np.flatnonzero(counts)
    return Histogram({format(int(i), f"0{n}b"): int(counts[i]) for i in nz}, n)


def _sample_rows(batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = np.abs(batch.reshape(batch.shape[0], -1)) ** 2
    cdf = np.cumsum(p, axis=1)
    u = rng.random(batch.shape[0]) * cdf[:, -1]
    idx = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def run_noisy(
    circuit: Circuit,
    noise: NoiseParams,
    shots: int,
    seed: int,
    limit: int | None = None,
) -> Histogram:
    """Monte Carlo Pauli-trajectory simulation with readout bit flips.

    After each RotY (CNot) a uniformly random non-identity Pauli on the gate's
    qubit(s) is inserted with probability ``p1`` (``p2``). Shots whose
    trajectory draws no insertion are sampled from the ideal state; the rest
    are simulated row by row in vectorized batches. Zero noise delegates to
    :func:`sample` so both paths agree exactly under the same seed.
    """
    if shots < 1:
        raise ValidationError(f"shots must be >= 1, got {shots}")
    _check_capacity(circuit.n_qubits, limit)
    if noise.is_zero:
        return sample(run_statevector(circuit, limit), shots, seed)

    n = circuit.n_qubits
    gates = circuit.gates
    rng = np.random.default_rng(seed)
    rates = np.array([noise.p1 if isinstance(g, RotY) else noise.p2 for g in gates])
    hits = rng.random((shots, len(gates))) < rates
    # 15 codes: 2Q gates use (c // 4, c % 4) as Paulis on (first, second) qubit;
    # 1Q gates use c % 3 + 1, uniform over X, Y, Z since 15 = 3 * 5.
    codes = rng.integers(1, 16, size=hits.shape)

    outcomes = np.empty(shots, dtype=np.int64)
    dirty = hits.any(axis=1) if len(gates) else np.zeros(shots, dtype=bool)
    clean = np.flatnonzero(~dirty)
    if clean.size:
        ideal = probabilities(run_statevector(circuit, limit))
        outcomes[clean] = rng.choice(ideal.size, size=clean.size, p=ideal)

    rows = np.flatnonzero(dirty)
    chunk = max(1, _TRAJECTORY_BATCH_ENTRIES >> n)
    for start in range(0, rows.size, chunk):
        sel = rows[start:start + chunk]
        batch = np.zeros((sel.size,) + (2,) * n, dtype=complex)
        batch.reshape(sel.size, -1)[:, 0] = 1.0
        h, c = hits[sel], codes[sel]
        for k, g in enumerate(gates):
            _apply_to_batch(batch, g)
            errs = np.flatnonzero(h[:, k])
            if not errs.size:
                continue
            err_codes = c[errs, k] % 3 + 1 if isinstance(g, RotY) else c[errs, k]
            for code in np.unique(err_codes):
                group = errs[err_codes == code]
                sub = batch[group]
                if isinstance(g, RotY):
                    _pauli(sub, g.qubit, int(code))
                else:
                    _pauli(sub, g.control, int(code) // 4)
                    _pauli(sub, g.target, int(code) % 4)
                batch[group] = sub
        outcomes[sel] = _sample_rows(batch, rng)

    if noise.p_ro > 0:
        flips = rng.random((shots, n)) < noise.p_ro
        weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
        outcomes ^= flips.astype(np.int64) @ weights
    return _counts_from_outcomes(outcomes, n)


def z_from_histogram(hist: Histogram, qubit: int) -> float:
    if hist.shots == 0:
        raise ValidationError("empty histogram")
    if not 0 <= qubit < hist.n_qubits:
        raise ValidationError(f"qubit {qubit} out of range for Q={hist.n_qubits}")
    n0 = sum(v for k, v in hist.counts.items() if k[qubit] == "0")
    return (2 * n0 - hist.shots) / hist.shots


def z_from_distribution(dist: dict[str, float], qubit: int) -> float:
    """<Z> of ``qubit`` under a bitstring -> probability map."""
    return float(sum(p if k[qubit] == "0" else -p for k, p in sorted(dist.items())))


# --- text formats -------------------------------------------------------------


def dumps_circuit(circuit: Circuit) -> str:
    lines = [f"qubits {circuit.n_qubits}"]
    for g in circuit.gates:
        if isinstance(g, RotY):
            lines.append(f"ry {g.qubit} {g.theta!r}")
        else:
            lines.append(f"cnot {g.control} {g.target}")
    return "\n".join(lines) + "\n"


def loads_circuit(text: str) -> Circuit:
    n = None
    gates = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "qubits" and len(parts) == 2:
                n = int(parts[1])
            elif parts[0] == "ry" and len(parts) == 3:
                gates.append(RotY(int(parts[1]), float(parts[2])))
            elif parts[0] == "cnot" and len(parts) == 3:
                gates.append(CNot(int(parts[1]), int(parts[2])))
            else:
                raise ValueError(line)
        except ValueError as exc:
            raise ValidationError(f"circuit line {lineno}: cannot parse {raw!r}") from exc
    if n is None:
        raise ValidationError("circuit text lacks a 'qubits <Q>' header")
    return Circuit(n, tuple(gates))


def dumps_histogram(hist: Histogram) -> str:
    lines = [f"shots {hist.shots}"]
    lines += [f"{k} {hist.counts[k]}" for k in sorted(hist.counts)]
    return "\n".join(lines) + "\n"


def loads_histogram(text: str) -> Histogram:
    header = None
    counts: dict[str, int] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = line.split()
        if key == "shots":
            header = int(value)
        else:
            counts[key] = counts.get(key, 0) + int(value)
    hist = Histogram(counts)
    if header is not None and header != hist.shots:
        raise ValidationError(f"shots header {header} != sum of counts {hist.shots}")
    return hist


def dumps_distribution(dist: dict[str, float], shots: int | None = None) -> str:
    """Histogram text layout carrying probabilities instead of counts."""
    lines = [f"shots {shots}"] if shots is not None else []
    lines += [f"{k} {dist[k]!r}" for k in sorted(dist)]
    return "\n".join(lines) + "\n"


def write_text(path: Union[str, Path], text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def all_bitstrings(n_qubits: int) -> Iterable[str]:
    return (format(i, f"0{n_qubits}b") for i in range(1 << n_qubits))
