"""Analytic QPU/GPU energy models, scaling fits and break-even solving.

Energies are in kJ (power in kW times seconds).
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from qets import ansatz as anz
from qets.errors import ValidationError
from qets.mps import log_depth_chi, mps_cost

# Measured break-even from hardware runs; depends on private measurements and
# is specific to the hardware, circuit and hyperparameters used there.
REFERENCE_BREAK_EVEN_QUBITS = 34
REFERENCE_BREAK_EVEN_NOTE = (
    "reference value only: the ~34-qubit break-even came from measured QPU/GPU data "
    "and is specific to that hardware, circuit and hyperparameter choice"
)
CROSSOVER_CEILING = 200.0
# above this base-10 exponent e_gpu returns a LogEnergy instead of a float
_LOG_THRESHOLD = 300


@dataclass(frozen=True)
class EnergyModelParams:
    P_qpu: float = 5.0        # kW
    T_sq: float = 1.1e-4      # s
    T_tq: float = 9e-4        # s
    S: int = 600              # shots
    O_S: float = 1.5e-3       # s per shot
    O_C: float = 10.0         # s per circuit
    P_gpu: float = 0.072      # kW
    F_gpu: float = 3.03e13    # FLOPS

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v > 0 or (k == "S" and v == 0)):
                raise ValidationError(f"energy parameter {k} must be positive, got {v}")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "EnergyModelParams":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown energy parameter(s): {sorted(unknown)}")
        return cls(**{k: (int(v) if k == "S" else float(v)) for k, v in data.items()})

    def table(self) -> list[tuple[str, str]]:
        """(label, formatted value) rows for reports."""
        return [
            ("QPU energy consumption (P_qpu)", f"~{self.P_qpu:g} kW"),
            ("1Q gate time (T_sq)", f"{self.T_sq:.1e}s"),
            ("2Q gate time (T_tq)", f"{self.T_tq:.0e}s"),
            ("Number of single-qubit gates (SQ_Q)", "o(Q^2)"),
            ("Number of two-qubit gates (TQ_Q)", "o(Q^2)"),
            ("Number of shots (S)", f"{self.S}"),
            ("Overhead per shot (O_S)", f"{self.O_S:.1e}s"),
            ("Circuit Overhead (O_C)", f"{self.O_C:g}s"),
            ("L4 GPU max power draw (P_gpu)", f"{self.P_gpu:g} kW"),
            ("L4 GPU FP32 speed (F_gpu)", f"{self.F_gpu:.2e} FLOPS"),
        ]


class LogEnergy(NamedTuple):
    """Value mantissa * 10**exponent for energies beyond float range."""
    mantissa: float
    exponent: int

    def __float__(self):
        return self.mantissa * 10.0 ** self.exponent


def e_qpu(params: EnergyModelParams, sq: int, tq: int, circuit_multiplier: float = 1.0,
          exact: bool = False):
    """((SQ*T_sq + TQ*T_tq + O_S) * S + O_C * k) * P_qpu.

    ``circuit_multiplier`` k scales the per-circuit overhead, e.g. for
    debiasing variants submitted as separate circuits. k = 1 is the plain model.
    ``exact=True`` evaluates in rational arithmetic on the parameters' binary
    values and returns a Fraction.
    """
    if sq < 0 or tq < 0:
        raise ValidationError("gate counts must be nonnegative")
    num = Fraction if exact else float
    T_sq, T_tq, O_S, O_C, P = (num(v) for v in (params.T_sq, params.T_tq, params.O_S, params.O_C, params.P_qpu))
    per_shot = sq * T_sq + tq * T_tq + O_S
    return (per_shot * params.S + O_C * num(circuit_multiplier)) * P


def e_gpu(params: EnergyModelParams, n_qubits: int, sq: int, tq: int):
    """2**Q * (4 SQ + 8 TQ) / F_gpu * P_gpu; a LogEnergy once past float range."""
    if sq < 0 or tq < 0 or n_qubits < 1:
        raise ValidationError("invalid e_gpu inputs")
    work = sq * 4 + tq * 8
    if work == 0:
        return 0.0
    log10 = n_qubits * math.log10(2) + math.log10(work) - math.log10(params.F_gpu) + math.log10(params.P_gpu)
    if log10 > _LOG_THRESHOLD:
        exponent = math.floor(log10)
        return LogEnergy(10 ** (log10 - exponent), exponent)
    return 2.0 ** n_qubits * work / params.F_gpu * params.P_gpu


@dataclass
class ScalingFit:
    kind: str
    a: float
    b: float
    r_squared: float
    domain: tuple
    r_squared_linear: float | None = None

    def predict(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "linear":
            return self.a * q + self.b
        return self.a * self.b ** q

    def to_dict(self) -> dict:
        d = asdict(self)
        d["domain"] = list(self.domain)
        return d


def _r_squared(y: np.ndarray, fitted: np.ndarray) -> float:
    if y.size < 3:
        return float("nan")
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    if x.size < 2:
        raise ValidationError("need at least two points to fit")
    dx = x - x.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise ValidationError("all x values are identical; fit is degenerate")
    slope = float(np.dot(dx, y - y.mean())) / sxx
    return slope, float(y.mean() - slope * x.mean())


def _xy(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(points), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError("points must be (Q, energy) pairs")
    return arr[:, 0], arr[:, 1]


def fit_linear(points) -> ScalingFit:
    """Ordinary least squares energy = a*Q + b."""
    x, y = _xy(points)
    a, b = _ols(x, y)
    r2 = _r_squared(y, a * x + b)
    return ScalingFit("linear", a, b, r2, (float(x.min()), float(x.max())))


def fit_exponential(points, q_min: float | None = None) -> ScalingFit:
    """Least squares on log(energy) vs Q, giving energy = a * b**Q.

    ``r_squared`` is computed in log space; ``r_squared_linear`` is the same
    fit scored on the raw energies. ``q_min`` drops points with Q < q_min.
    """
    x, y = _xy(points)
    if q_min is not None:
        keep = x >= q_min
        x, y = x[keep], y[keep]
    if np.any(y <= 0):
        raise ValidationError("exponential fit needs strictly positive energies")
    slope, intercept = _ols(x, np.log(y))
    a, b = math.exp(intercept), math.exp(slope)
    r2 = _r_squared(np.log(y), slope * x + intercept)
    r2_lin = _r_squared(y, a * b ** x)
    return ScalingFit("exponential", a, b, r2, (float(x.min()), float(x.max())), r2_lin)


def crossover(qpu_fit: ScalingFit, gpu_fit: ScalingFit, ceiling: float = CROSSOVER_CEILING,
              step: float = 0.01, tol: float = 1e-12) -> float | None:
    """Smallest Q in (0, ceiling] where the exponential curve rises through the linear one.

    Scans a grid for the first bracket with gpu - qpu going from negative to
    nonnegative, then bisects. Returns None when no such crossing exists.
    """
    def gap(q):
        return float(gpu_fit.predict(q)) - float(qpu_fit.predict(q))

    n = int(math.ceil(ceiling / step))
    grid = np.linspace(step, ceiling, n)
    with np.errstate(over="ignore"):
        values = gpu_fit.predict(grid) - qpu_fit.predict(grid)
    below = values < 0
    hits = np.flatnonzero(below[:-1] & ~below[1:])
    if not hits.size:
        return None
    lo, hi = float(grid[hits[0]]), float(grid[hits[0] + 1])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return hi


@dataclass
class ScalingRow:
    Q: int
    SQ: int
    TQ: int
    E_qpu: float
    E_gpu: float
    chi: int
    mps_flops: float
    E_qpu_log_depth: float = field(default=0.0)

    def to_dict(self) -> dict:
        return asdict(self)


def scaling_table(qubits: Iterable[int], config: anz.AnsatzConfig | None = None,
                  params: EnergyModelParams | None = None,
                  circuit_multiplier: float = 1.0) -> list[ScalingRow]:
    """Per-Q gate counts, QPU/GPU energies and MPS cost at chi = 2**ceil(log2 Q).

    ``E_qpu_log_depth`` is Q * ceil(log2 Q), the O(Q log Q) QPU cost shape for
    log-depth circuits, in arbitrary units.
    """
    params = params or EnergyModelParams()
    base = config or anz.AnsatzConfig(10)
    rows = []
    for q in qubits:
        cfg = base.with_qubits(int(q))
        sq, tq = anz.count_gates(cfg)
        chi = log_depth_chi(cfg.n_qubits)
        rows.append(ScalingRow(
            cfg.n_qubits, sq, tq,
            e_qpu(params, sq, tq, circuit_multiplier),
            float(e_gpu(params, cfg.n_qubits, sq, tq)),
            chi,
            mps_cost(cfg.n_qubits, chi, sq + tq).estimated_flops,
            float(cfg.n_qubits * math.ceil(math.log2(cfg.n_qubits))),
        ))
    return rows


def second_differences(values: Sequence[float]) -> list[float]:
    return [values[i + 2] - 2 * values[i + 1] + values[i] for i in range(len(values) - 2)]


def with_overrides(params: EnergyModelParams, overrides: Mapping) -> EnergyModelParams:
    merged = {**asdict(params), **overrides}
    return EnergyModelParams.from_mapping(merged)

