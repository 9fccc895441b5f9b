"""Data re-uploading ansatz with stride-2 CNOT ladders.

Layout for M main blocks of R re-upload units each:

    unit = [RotY(x_q, q) for all q]        encoding layer
           ladder(parity)                  CNot(i, (i + 2) % Q), i = parity, parity + 2, ...
           [RotY(theta, q) for all q]      trainable layer

The very last unit omits its ladder, and N rotation-only trainable layers
follow the main blocks. Ladder parity alternates 0, 1, 0, ... across the
circuit. This reproduces 7Q/2 two-qubit gates under the default
(R, M, N) = (4, 2, 1).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Mapping

import numpy as np

from qets.errors import ValidationError
from qets.qsim import Circuit, CNot, RotY

SHOT_TABLE = {10: 500, 12: 1000, 14: 2000, 16: 5000, 18: 20000}

# short hyperparameter symbols -> field names
_SYMBOLS = {"Q": "n_qubits", "E": "encoders", "R": "reuploads", "M": "main_blocks",
            "N": "final_blocks", "B": "batch_size", "S": "shots"}


@dataclass(frozen=True)
class AnsatzConfig:
    n_qubits: int
    encoders: int = 1
    reuploads: int = 4
    main_blocks: int = 2
    final_blocks: int = 1
    batch_size: int = 16
    shots: int = 600

    def __post_init__(self):
        if self.n_qubits < 4 or self.n_qubits % 2:
            raise ValidationError(f"Q must be even and >= 4, got {self.n_qubits}")
        if self.encoders != 1:
            raise ValidationError("only a single encoder (E=1) is supported")
        for name in ("reuploads", "main_blocks", "final_blocks", "batch_size", "shots"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "AnsatzConfig":
        """Build from a manifest section keyed by short symbols (Q, E, R, M, N, B, S)."""
        kwargs = {}
        for key, value in data.items():
            name = _SYMBOLS.get(key, key)
            if name not in cls.__dataclass_fields__:
                raise ValidationError(f"unknown ansatz key {key!r}")
            kwargs[name] = int(value)
        if "n_qubits" not in kwargs:
            raise ValidationError("ansatz section requires Q")
        return cls(**kwargs)

    def to_mapping(self) -> dict[str, int]:
        inverse = {v: k for k, v in _SYMBOLS.items()}
        return {inverse[k]: v for k, v in asdict(self).items()}

    @property
    def units(self) -> int:
        return self.main_blocks * self.reuploads

    @property
    def n_params(self) -> int:
        return (self.units + self.final_blocks) * self.n_qubits

    def with_qubits(self, n_qubits: int) -> "AnsatzConfig":
        return AnsatzConfig(**{**asdict(self), "n_qubits": n_qubits})


def trainable_param_count(config: AnsatzConfig) -> int:
    return config.n_params


def ladder(n_qubits: int, parity: int) -> list[CNot]:
    return [CNot(i, (i + 2) % n_qubits) for i in range(parity, n_qubits, 2)]


def template(config: AnsatzConfig) -> list[tuple]:
    """Gate skeleton with angle sources.

    Each entry is ``("x", qubit, feature_index)``, ``("p", qubit, param_index)``
    or ``("cnot", control, target)``. Parameters are indexed layer-major then
    qubit-major.
    """
    Q = config.n_qubits
    out: list[tuple] = []
    layer = 0
    for unit in range(config.units):
        out += [("x", q, q) for q in range(Q)]
        if unit < config.units - 1:
            out += [("cnot", g.control, g.target) for g in ladder(Q, unit % 2)]
        out += [("p", q, layer * Q + q) for q in range(Q)]
        layer += 1
    for _ in range(config.final_blocks):
        out += [("p", q, layer * Q + q) for q in range(Q)]
        layer += 1
    return out


def pad_features(config: AnsatzConfig, features) -> np.ndarray:
    x = np.asarray(features, dtype=float).ravel()
    if x.size > config.n_qubits:
        raise ValidationError(f"{x.size} features for {config.n_qubits} qubits")
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite feature")
    return np.pad(x, (0, config.n_qubits - x.size))


def build_circuit(config: AnsatzConfig, features, params) -> Circuit:
    x = pad_features(config, features)
    theta = np.asarray(params, dtype=float).ravel()
    if theta.size != config.n_params:
        raise ValidationError(f"expected {config.n_params} params, got {theta.size}")
    gates = []
    for kind, a, b in template(config):
        if kind == "cnot":
            gates.append(CNot(a, b))
        elif kind == "x":
            gates.append(RotY(a, float(x[b])))
        else:
            gates.append(RotY(a, float(theta[b])))
    return Circuit(config.n_qubits, tuple(gates))


def count_gates(config: AnsatzConfig) -> tuple[int, int]:
    """Closed-form (single-qubit, two-qubit) counts; equal to a scan of build_circuit."""
    Q, units = config.n_qubits, config.units
    sq = units * Q + (units + config.final_blocks) * Q
    tq = (units - 1) * Q // 2
    return sq, tq


def layer_count(config: AnsatzConfig) -> int:
    """Number of gate layers (encoding, ladder, rotation); independent of Q."""
    return config.units + (config.units - 1) + config.units + config.final_blocks


def shots_for(n_qubits: int, allow_extrapolation_below: bool = False) -> int:
    """Total shot budget per qubit count.

    Table values are exact; elsewhere the budget is interpolated geometrically
    between neighbouring rows (or extrapolated from the nearest segment) and
    rounded to a multiple of 25.
    """
    if n_qubits in SHOT_TABLE:
        return SHOT_TABLE[n_qubits]
    qs = sorted(SHOT_TABLE)
    if n_qubits < qs[0] and not allow_extrapolation_below:
        raise ValidationError(f"no shot schedule below Q={qs[0]}; pass an explicit override")
    if n_qubits < qs[0]:
        lo, hi = qs[0], qs[1]
    elif n_qubits > qs[-1]:
        lo, hi = qs[-2], qs[-1]
    else:
        hi = next(q for q in qs if q > n_qubits)
        lo = qs[qs.index(hi) - 1]
    slope = (math.log(SHOT_TABLE[hi]) - math.log(SHOT_TABLE[lo])) / (hi - lo)
    value = math.exp(math.log(SHOT_TABLE[lo]) + slope * (n_qubits - lo))
    return max(25, int(round(value / 25.0)) * 25)


def random_params(config: AnsatzConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, size=config.n_params)
