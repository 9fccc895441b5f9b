"""Experiment manifests: one YAML/JSON file describing a reproducible run."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from qets.ansatz import AnsatzConfig
from qets.energy import EnergyModelParams
from qets.errors import QetsError, ValidationError
from qets.mitigation import DEFAULT_P_GRID, DEFAULT_T_GRID, FilterParams
from qets.pipeline import MitigationOptions, SplitSpec, TrainSettings
from qets.qsim import NoiseParams

BACKENDS = ("exact", "noisy", "mps")

DEFAULTS: dict[str, Any] = {
    "ansatz": {"Q": 10},
    "backend": "exact",
    "chi_max": None,
    "noise": {"p1": 2e-4, "p2": 5e-3, "p_ro": 5e-3},
    "mitigation": {"V": 25, "p": 0.0, "t": 0, "bias_correction": True, "grid": None},
    "shots": "fixed",
    "seed": None,
    "split": {"per_label_train": 256},
    "training": {"epochs": 200, "learning_rate": 0.05, "batch_size": None},
    "energy": {"qubits": list(range(10, 30, 2)), "params": {}, "circuit_multiplier": 1.0,
               "gpu_q_min": 16},
    "synthetic": {"n": 200, "dim": 8, "separation": 2.0, "spread": 0.3},
    "max_samples": None,
    "paths": {},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_scalar(text: str):
    return yaml.safe_load(text)


def apply_override(data: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value`` (value parsed as YAML) to a nested dict in place."""
    if "=" not in assignment:
        raise ValidationError(f"override {assignment!r} is not key=value")
    path, value = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ValidationError(f"override path {path!r} crosses a non-mapping")
    node[keys[-1]] = _parse_scalar(value)
    return data


@dataclass
class ExperimentManifest:
    raw: dict
    ansatz: AnsatzConfig
    backend: str
    noise: NoiseParams
    mitigation: MitigationOptions
    filter_grid: tuple | None
    shot_policy: Any
    seed: int | None
    split: SplitSpec
    training: TrainSettings
    energy_params: EnergyModelParams
    paths: dict = field(default_factory=dict)
    chi_max: int | None = None
    max_samples: int | None = None

    @property
    def hash(self) -> str:
        """Content hash; the output directory is excluded so reruns elsewhere match."""
        content = copy.deepcopy(self.raw)
        content["paths"].pop("out", None)
        canonical = json.dumps(content, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def path(self, key: str, default: str | None = None) -> Path:
        value = self.paths.get(key, default)
        if value is None:
            raise ValidationError(f"paths.{key}: required for this command")
        return Path(value)

    def shots_for(self, n_qubits: int) -> int:
        from qets.ansatz import shots_for

        if self.shot_policy == "fixed":
            return self.ansatz.shots
        if self.shot_policy == "table":
            return shots_for(n_qubits)
        return int(self.shot_policy)


def _section(path: str, fn, *args):
    try:
        return fn(*args)
    except QetsError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    except (TypeError, ValueError, KeyError) as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def build_manifest(data: dict) -> ExperimentManifest:
    """Validate a manifest mapping; errors name the offending key path."""
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown manifest key(s): {sorted(unknown)}")
    raw = _merge(DEFAULTS, data)
    ansatz = _section("ansatz", AnsatzConfig.from_mapping, raw["ansatz"])
    backend = raw["backend"]
    if backend not in BACKENDS:
        raise ValidationError(f"backend: expected one of {BACKENDS}, got {backend!r}")
    noise = _section("noise", lambda d: NoiseParams(**d), raw["noise"])
    m = raw["mitigation"]
    unknown = set(m) - {"V", "p", "t", "bias_correction", "grid"}
    if unknown:
        raise ValidationError(f"mitigation: unknown key(s) {sorted(unknown)}")
    _section("mitigation", FilterParams, float(m["p"]), int(m["t"]))
    if int(m["V"]) < 1:
        raise ValidationError("mitigation.V: must be >= 1")
    if int(m["t"]) > int(m["V"]):
        raise ValidationError("mitigation.t: exceeds mitigation.V")
    mitigation = MitigationOptions(int(m["V"]), float(m["p"]), int(m["t"]), bool(m["bias_correction"]))
    grid = None
    if m.get("grid"):
        g = m["grid"]
        grid = (tuple(float(p) for p in g.get("p", DEFAULT_P_GRID)),
                tuple(int(t) for t in g.get("t", DEFAULT_T_GRID)))
        if not grid[0] or not grid[1]:
            raise ValidationError("mitigation.grid: empty grid")
    shots = raw["shots"]
    if shots not in ("fixed", "table") and not (isinstance(shots, int) and shots >= 1):
        raise ValidationError(f"shots: expected 'fixed', 'table' or a positive integer, got {shots!r}")
    seed = raw["seed"]
    if seed is not None and not isinstance(seed, int):
        raise ValidationError("seed: must be an integer")
    split = _section("split", lambda d: SplitSpec(int(d["per_label_train"]), int(seed or 0)), raw["split"])
    t = raw["training"]
    training = _section("training", lambda d: TrainSettings(int(d["epochs"]), float(d["learning_rate"]),
                                                            d["batch_size"] and int(d["batch_size"])), t)
    energy_params = _section("energy.params", EnergyModelParams.from_mapping, raw["energy"]["params"])
    chi = raw["chi_max"]
    if chi is not None and int(chi) < 1:
        raise ValidationError("chi_max: must be positive")
    limit = raw["max_samples"]
    if limit is not None and int(limit) < 1:
        raise ValidationError("max_samples: must be positive")
    return ExperimentManifest(raw, ansatz, backend, noise, mitigation, grid, shots, seed, split,
                              training, energy_params, dict(raw["paths"]), chi and int(chi),
                              limit and int(limit))


def load_manifest(path, overrides=(), seed: int | None = None) -> ExperimentManifest:
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: manifest must be a mapping")
    for assignment in overrides:
        apply_override(data, assignment)
    if seed is not None:
        data["seed"] = seed
    return build_manifest(data)
