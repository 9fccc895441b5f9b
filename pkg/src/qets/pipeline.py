"""Embedding datasets, the linear encoder, parameter-shift training and inference."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from qets import ansatz as anz
from qets.errors import QetsError, ValidationError
from qets.mitigation import (
    FilterParams,
    bias_correct,
    classify,
    classify_all,
    dnl_filter,
    generate_variants,
    run_variants,
)
from qets.mps import mps_expectation_z, run_mps
from qets.qsim import NoiseParams, _cnot, _roty, expectation_z, run_statevector, z_from_distribution
from qets.seeding import derive_seed

TARGET_QUBIT = 0
REFERENCE_ACCURACY = {"logistic_regression": 0.8906, "svc": 0.8956}


class TrainingDiverged(QetsError):
    exit_code = 3


# --- data ------------------------------------------------------------------------


@dataclass
class EmbeddingDataset:
    ids: list
    labels: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.labels = np.asarray(self.labels, dtype=int)
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if not (len(self.ids) == self.labels.size == self.vectors.shape[0]):
            raise ValidationError("ids, labels and vectors differ in length")
        if self.labels.size and not set(np.unique(self.labels)) <= {0, 1}:
            raise ValidationError("labels must be 0 or 1")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate sample ids")

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def subset(self, index) -> "EmbeddingDataset":
        index = np.asarray(index, dtype=int)
        return EmbeddingDataset([self.ids[i] for i in index], self.labels[index], self.vectors[index])


def load_embeddings(path) -> EmbeddingDataset:
    """Read ``dim <d>`` followed by ``id,label,v1,...,vd`` lines."""
    dim = None
    ids, labels, rows = [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("dim"):
            dim = int(line.split()[1])
            continue
        parts = line.split(",")
        if dim is None:
            raise ValidationError(f"{path}: missing 'dim <d>' header")
        if len(parts) != dim + 2:
            raise ValidationError(f"{path}:{lineno}: expected {dim + 2} fields, got {len(parts)}")
        ids.append(parts[0])
        labels.append(int(parts[1]))
        rows.append([float(v) for v in parts[2:]])
    return EmbeddingDataset(ids, labels, np.array(rows).reshape(len(rows), dim or 0))


def save_embeddings(dataset: EmbeddingDataset, path, comment: str = ""):
    lines = ([f"# {comment}"] if comment else []) + [f"dim {dataset.dim}"]
    for sid, y, v in zip(dataset.ids, dataset.labels, dataset.vectors):
        lines.append(",".join([sid, str(int(y))] + [repr(float(x)) for x in v]))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def make_separable_clusters(n: int, dim: int, seed: int, separation: float = 2.0,
                            spread: float = 0.3) -> EmbeddingDataset:
    """Two Gaussian clusters at +/- ``separation/2`` along a random unit direction."""
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    labels = np.arange(n) % 2
    centers = np.where(labels[:, None] == 0, 1.0, -1.0) * direction * separation / 2
    vectors = centers + rng.normal(scale=spread, size=(n, dim))
    return EmbeddingDataset([f"s{i:05d}" for i in range(n)], labels, vectors)


@dataclass(frozen=True)
class SplitSpec:
    per_label_train: int = 256
    seed: int = 0


def split_dataset(dataset: EmbeddingDataset, spec: SplitSpec) -> tuple[EmbeddingDataset, EmbeddingDataset]:
    """Balanced train split of ``per_label_train`` per label; the rest is test.

    Samples are ordered by id before shuffling, so the split does not depend
    on input order.
    """
    order = np.argsort(np.array(dataset.ids, dtype=object), kind="stable")
    rng = np.random.default_rng(spec.seed)
    train = []
    for label in (0, 1):
        pool = order[dataset.labels[order] == label]
        if spec.per_label_train > pool.size:
            raise ValidationError(
                f"label {label} has {pool.size} samples, {spec.per_label_train} requested"
            )
        train.extend(pool[rng.permutation(pool.size)[:spec.per_label_train]])
    train_set = set(int(i) for i in train)
    test = [int(i) for i in order if int(i) not in train_set]
    train = sorted(train_set, key=lambda i: dataset.ids[i])
    return dataset.subset(train), dataset.subset(test)


# --- encoder and model ---------------------------------------------------------------


@dataclass
class LinearEncoder:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.bias = np.asarray(self.bias, dtype=float).ravel()
        if self.bias.size != self.weights.shape[0]:
            raise ValidationError("encoder bias length must equal weight rows")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValidationError("non-finite encoder entries")

    @classmethod
    def init(cls, n_qubits: int, dim: int, rng: np.random.Generator, scale: float = 0.1):
        return cls(rng.uniform(-scale, scale, (n_qubits, dim)), rng.uniform(-scale, scale, n_qubits))

    @classmethod
    def zeros(cls, n_qubits: int, dim: int):
        return cls(np.zeros((n_qubits, dim)), np.zeros(n_qubits))


def encode(encoder: LinearEncoder, embedding) -> np.ndarray:
    """Affine map W x + b; rows of a 2-D input are encoded independently."""
    x = np.asarray(embedding, dtype=float)
    if x.shape[-1] != encoder.weights.shape[1]:
        raise ValidationError(f"embedding dim {x.shape[-1]} != encoder input dim {encoder.weights.shape[1]}")
    return x @ encoder.weights.T + encoder.bias


class BatchedAnsatz:
    """Evaluates <Z> on the target qubit for many angle assignments at once.

    Every RotY of the template gets a column in an angle matrix; row i of the
    matrix is one circuit. Amplitudes stay real since RotY and CNot are real.
    """

    def __init__(self, config: anz.AnsatzConfig, qubit: int = TARGET_QUBIT):
        self.config = config
        self.qubit = qubit
        self.ops = anz.template(config)
        rot = [(i, op) for i, op in enumerate(self.ops) if op[0] != "cnot"]
        self.n_rot = len(rot)
        self.col = {i: c for c, (i, _) in enumerate(rot)}
        self.feature_cols = np.array([[c for c, (_, op) in enumerate(rot) if op[0] == "x" and op[2] == q]
                                      for q in range(config.n_qubits)])
        self.param_cols = np.empty(config.n_params, dtype=int)
        for c, (_, op) in enumerate(rot):
            if op[0] == "p":
                self.param_cols[op[2]] = c
        n = config.n_qubits
        bit = (np.arange(1 << n) >> (n - 1 - qubit)) & 1
        self._signs = 1.0 - 2.0 * bit

    def angles(self, features: np.ndarray, params: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(features)
        out = np.empty((features.shape[0], self.n_rot))
        for q in range(self.config.n_qubits):
            out[:, self.feature_cols[q]] = features[:, q:q + 1]
        out[:, self.param_cols] = np.asarray(params, dtype=float)[None, :]
        return out

    def expectation(self, angle_rows: np.ndarray, chunk: int = 1 << 20) -> np.ndarray:
        n = self.config.n_qubits
        rows = angle_rows.shape[0]
        step = max(1, chunk >> n)
        out = np.empty(rows)
        for s in range(0, rows, step):
            a = angle_rows[s:s + step]
            batch = np.zeros((a.shape[0],) + (2,) * n)
            batch.reshape(a.shape[0], -1)[:, 0] = 1.0
            for i, op in enumerate(self.ops):
                if op[0] == "cnot":
                    _cnot(batch, op[1], op[2])
                else:
                    _roty(batch, op[1], a[:, self.col[i]])
            out[s:s + step] = (batch.reshape(a.shape[0], -1) ** 2) @ self._signs
        return out

    def shift_gradients(self, angle_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(values, d<Z>/d angle) per row, by the two-term shift rule at +/- pi/2."""
        m, k = angle_rows.shape
        shifted = np.repeat(angle_rows[:, None, :], 2 * k + 1, axis=1)
        idx = np.arange(k)
        shifted[:, 1 + idx, idx] += np.pi / 2
        shifted[:, 1 + k + idx, idx] -= np.pi / 2
        vals = self.expectation(shifted.reshape(-1, k)).reshape(m, 2 * k + 1)
        return vals[:, 0], (vals[:, 1:k + 1] - vals[:, k + 1:]) / 2.0

    def chain(self, dangle: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split angle gradients into (d/dfeatures summed over re-uploads, d/dparams)."""
        dfeat = dangle[:, self.feature_cols].sum(axis=2)
        return dfeat, dangle[:, self.param_cols]


def logistic_loss(z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample -log P(label) with P(class 0) = sigmoid(2 z)."""
    margin = np.where(np.asarray(labels) == 0, 2.0 * z, -2.0 * z)
    return np.logaddexp(0.0, -margin)


def _loss_grad(z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    target = (np.asarray(labels) == 0).astype(float)
    return 2.0 * (1.0 / (1.0 + np.exp(-2.0 * z)) - target)


def loss_and_gradients(model: BatchedAnsatz, encoder: LinearEncoder, params: np.ndarray,
                       vectors: np.ndarray, labels: np.ndarray):
    """Mean loss and its gradients w.r.t. (params, encoder weights, encoder bias)."""
    feats = encode(encoder, vectors)
    z, dangle = model.shift_gradients(model.angles(feats, params))
    dfeat, dparam = model.chain(dangle)
    g = _loss_grad(z, labels) / len(labels)
    grad_params = g @ dparam
    dx = g[:, None] * dfeat
    return float(np.mean(logistic_loss(z, labels))), grad_params, dx.T @ vectors, dx.sum(axis=0)


@dataclass
class TrainSettings:
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int | None = None
    shuffle: bool = True


@dataclass
class TrainedModel:
    config: anz.AnsatzConfig
    encoder: LinearEncoder
    params: np.ndarray
    losses: list = field(default_factory=list)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "ansatz": self.config.to_mapping(),
            "encoder": {"weights": self.encoder.weights.tolist(), "bias": self.encoder.bias.tolist()},
            "params": np.asarray(self.params).tolist(),
            "losses": [float(v) for v in self.losses],
            "seed": self.seed,
            "target_qubit": TARGET_QUBIT,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedModel":
        config = anz.AnsatzConfig.from_mapping(data["ansatz"])
        enc = LinearEncoder(data["encoder"]["weights"], data["encoder"]["bias"])
        params = np.asarray(data["params"], dtype=float)
        if params.size != config.n_params:
            raise ValidationError("model params do not match the ansatz config")
        return cls(config, enc, params, list(data.get("losses", [])), int(data.get("seed", 0)))

    def save(self, path, extra: dict | None = None):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        payload = {**self.to_dict(), **(extra or {})}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train(config: anz.AnsatzConfig, train_set: EmbeddingDataset, settings: TrainSettings | None = None,
          seed: int = 0, backend: str = "exact", encoder: LinearEncoder | None = None,
          params: np.ndarray | None = None) -> TrainedModel:
    """Fixed-step gradient descent on the logistic loss with parameter-shift gradients."""
    if backend != "exact":
        raise ValidationError(f"training supports the exact backend only, got {backend!r}")
    if len(train_set) == 0:
        raise ValidationError("empty training set")
    settings = settings or TrainSettings()
    rng = np.random.default_rng(seed)
    if encoder is None:
        encoder = LinearEncoder.init(config.n_qubits, train_set.dim, rng)
    if params is None:
        params = anz.random_params(config, rng)
    encoder = LinearEncoder(encoder.weights.copy(), encoder.bias.copy())
    params = np.array(params, dtype=float)
    model = BatchedAnsatz(config)
    batch = settings.batch_size or config.batch_size
    lr = settings.learning_rate
    losses = []
    n = len(train_set)
    for epoch in range(settings.epochs):
        order = rng.permutation(n) if settings.shuffle else np.arange(n)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, gp, gw, gb = loss_and_gradients(model, encoder, params, train_set.vectors[idx],
                                                  train_set.labels[idx])
            if not math.isfinite(loss) or not np.all(np.isfinite(gp)):
                raise TrainingDiverged(
                    f"loss became {loss} at epoch {epoch}, batch {start // batch}; "
                    f"max |W| = {np.abs(encoder.weights).max():.3g}, lower the learning rate"
                )
            params -= lr * gp
            encoder.weights -= lr * gw
            encoder.bias -= lr * gb
            epoch_loss += loss * len(idx)
        losses.append(epoch_loss / n)
    return TrainedModel(config, encoder, params, losses, seed)


def exact_logits(model: TrainedModel, vectors: np.ndarray) -> np.ndarray:
    batched = BatchedAnsatz(model.config)
    return batched.expectation(batched.angles(encode(model.encoder, vectors), model.params))


# --- inference -----------------------------------------------------------------------


@dataclass(frozen=True)
class MitigationOptions:
    variants: int = 25
    p: float = 0.0
    t: int = 0
    bias_correction: bool = True


def predict(config: anz.AnsatzConfig, encoder: LinearEncoder, params, embedding,
            backend: str = "exact", shots: int | None = None, noise: NoiseParams | None = None,
            mitigation: MitigationOptions | None = None, seed: int = 0,
            chi_max: int | None = None) -> tuple[float, int]:
    """Logit <Z> of the target qubit and its class for one embedding (no batch bias correction)."""
    circuit = anz.build_circuit(config, encode(encoder, embedding), params)
    if backend == "exact":
        z = expectation_z(run_statevector(circuit), TARGET_QUBIT)
    elif backend == "mps":
        chi = chi_max or 1 << (config.n_qubits // 2)
        z = mps_expectation_z(run_mps(circuit, chi), TARGET_QUBIT)
    elif backend == "noisy":
        mitigation = mitigation or MitigationOptions()
        variants = generate_variants(circuit, mitigation.variants, derive_seed(seed, 0))
        hists = run_variants(variants, shots or config.shots, derive_seed(seed, 1),
                             noise if noise is not None else NoiseParams())
        z = z_from_distribution(dnl_filter(hists, FilterParams(mitigation.p, mitigation.t)),
                                TARGET_QUBIT)
    else:
        raise ValidationError(f"unknown backend {backend!r}")
    return z, classify(z)


def predict_batch(model: TrainedModel, dataset: EmbeddingDataset, backend: str = "exact",
                  shots: int | None = None, noise: NoiseParams | None = None,
                  mitigation: MitigationOptions | None = None, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Logits and classes for a dataset; batch bias correction applies on the noisy backend."""
    mitigation = mitigation or MitigationOptions()
    if backend == "exact":
        z = exact_logits(model, dataset.vectors)
        return z, classify_all(z)
    z = np.array([
        predict(model.config, model.encoder, model.params, v, backend, shots, noise, mitigation,
                derive_seed(seed, i))[0]
        for i, v in enumerate(dataset.vectors)
    ])
    corrected = bias_correct(z) if mitigation.bias_correction and backend == "noisy" else z
    return z, classify_all(corrected)


@dataclass
class EvalReport:
    accuracy: float
    n: int
    correct: int
    confusion: dict
    standard_error: float

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "n": self.n, "correct": self.correct,
                "confusion": self.confusion, "standard_error": self.standard_error}


def evaluate(predictions, labels) -> EvalReport:
    pred = np.asarray(predictions, dtype=int)
    y = np.asarray(labels, dtype=int)
    if pred.shape != y.shape:
        raise ValidationError("predictions and labels differ in length")
    if pred.size == 0:
        raise ValidationError("nothing to evaluate")
    correct = int(np.sum(pred == y))
    acc = correct / pred.size
    confusion = {f"true{a}_pred{b}": int(np.sum((y == a) & (pred == b))) for a in (0, 1) for b in (0, 1)}
    return EvalReport(acc, int(pred.size), correct, confusion, math.sqrt(acc * (1 - acc) / pred.size))


def logistic_baseline(train_set: EmbeddingDataset, test_set: EmbeddingDataset, l2: float = 1e-3,
                      seed: int = 0, steps: int = 2000, learning_rate: float = 0.5) -> float:
    """Full-batch gradient-descent logistic regression on standardized raw embeddings."""
    if len(train_set) == 0 or len(test_set) == 0:
        raise ValidationError("logistic baseline needs nonempty splits")
    mu = train_set.vectors.mean(axis=0)
    sd = train_set.vectors.std(axis=0)
    sd[sd == 0] = 1.0
    X = (train_set.vectors - mu) / sd
    y = train_set.labels.astype(float)
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=1e-3, size=X.shape[1])
    b = 0.0
    for _ in range(steps):
        p = 1.0 / (1.0 + np.exp(-(X @ w + b)))
        r = p - y
        w -= learning_rate * (X.T @ r / len(y) + l2 * w)
        b -= learning_rate * float(np.mean(r))
    Xt = (test_set.vectors - mu) / sd
    pred = (Xt @ w + b > 0).astype(int)
    return float(np.mean(pred == test_set.labels))
