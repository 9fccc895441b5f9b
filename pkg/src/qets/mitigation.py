"""Qubit-assignment debiasing, histogram aggregation, and bias correction.

Each logical circuit is run as V relabeled variants. Measured bitstrings are
mapped back to logical order and the V histograms are aggregated either by
plain averaging or by the power-law survival filter (``dnl_filter``).
"""

from __future__ import annotations

import itertools
import json
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from qets.errors import DataQualityWarning, DegenerateOutputError, ValidationError
from qets.qsim import (
    Circuit,
    Histogram,
    NoiseParams,
    dumps_histogram,
    loads_histogram,
    run_noisy,
    run_statevector,
    sample,
    write_text,
    z_from_distribution,
)
from qets.seeding import derive_seed

DEFAULT_VARIANTS = 25
MIN_PRACTICAL_SHOTS = 500
DEFAULT_P_GRID = (0.0, 0.5, 1.0, 2.0, 4.0)
DEFAULT_T_GRID = (0, 2, 5, 10)


@dataclass(frozen=True)
class VariantSet:
    base_circuit: Circuit
    permutations: tuple
    variant_circuits: tuple

    @property
    def n_variants(self) -> int:
        return len(self.permutations)


@dataclass(frozen=True)
class FilterParams:
    p: float = 0.0
    t: int = 0

    def __post_init__(self):
        if not math.isfinite(self.p) or self.p < 0:
            raise ValidationError(f"filter exponent p must be finite and >= 0, got {self.p}")
        if self.t < 0:
            raise ValidationError(f"threshold t must be >= 0, got {self.t}")


@dataclass
class LogitSet:
    logits: np.ndarray
    sample_ids: tuple = ()

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=float)
        if not self.sample_ids:
            self.sample_ids = tuple(range(self.logits.size))
        if len(self.sample_ids) != self.logits.size:
            raise ValidationError("sample_ids and logits differ in length")


def _is_bijection(perm, n: int) -> bool:
    return sorted(perm) == list(range(n))


def generate_variants(circuit: Circuit, n_variants: int = DEFAULT_VARIANTS, seed: int = 0) -> VariantSet:
    """Identity plus ``n_variants - 1`` distinct seeded-random qubit relabelings."""
    n = circuit.n_qubits
    if n_variants < 1:
        raise ValidationError("need at least one variant")
    capacity = math.factorial(n)
    if n_variants > capacity:
        raise ValidationError(f"{n_variants} variants requested but Q={n} admits only {capacity}")
    rng = np.random.default_rng(seed)
    identity = tuple(range(n))
    perms = [identity]
    if capacity <= 40320 and n_variants > capacity // 2:
        pool = [p for p in itertools.permutations(range(n)) if p != identity]
        picks = rng.choice(len(pool), size=n_variants - 1, replace=False)
        perms += [pool[i] for i in picks]
    else:
        seen = {identity}
        while len(perms) < n_variants:
            p = tuple(int(i) for i in rng.permutation(n))
            if p not in seen:
                seen.add(p)
                perms.append(p)
    return VariantSet(circuit, tuple(perms), tuple(circuit.relabel(p) for p in perms))


def invert(perm) -> tuple:
    inv = [0] * len(perm)
    for q, phys in enumerate(perm):
        inv[phys] = q
    return tuple(inv)


def remap_histogram(hist: Histogram, perm) -> Histogram:
    """Move the bit at physical position perm[q] to logical position q."""
    n = hist.n_qubits
    if len(perm) != n or not _is_bijection(perm, n):
        raise ValidationError(f"{perm} is not a bijection on {n} qubits")
    out: dict[str, int] = {}
    for key, count in hist.counts.items():
        logical = "".join(key[perm[q]] for q in range(n))
        out[logical] = out.get(logical, 0) + count
    return Histogram(out, n)


def split_shots(total: int, n_variants: int) -> list[int]:
    """floor(S/V) shots each, with one extra for the first S mod V variants."""
    base, extra = divmod(total, n_variants)
    return [base + (1 if k < extra else 0) for k in range(n_variants)]


def _frequency_matrix(histograms: Sequence[Histogram]) -> tuple[list[str], np.ndarray]:
    if not histograms:
        raise ValidationError("no histograms to aggregate")
    widths = {h.n_qubits for h in histograms}
    if len(widths) != 1:
        raise ValidationError(f"histograms disagree on qubit count: {sorted(widths)}")
    keys = sorted(set().union(*(h.counts for h in histograms)))
    col = {k: j for j, k in enumerate(keys)}
    freqs = np.zeros((len(histograms), len(keys)))
    for v, h in enumerate(histograms):
        total = h.shots
        for k, c in h.counts.items():
            freqs[v, col[k]] = c / total
    return keys, freqs


def _filtered_scores(freqs: np.ndarray, p: float, t: int) -> np.ndarray:
    n_variants = freqs.shape[0]
    # descending per bitstring; sorting also makes the result independent of variant order
    ranked = -np.sort(-freqs, axis=0)
    weights = (np.arange(1, n_variants + 1) / n_variants) ** p
    scores = np.array([math.fsum(weights * ranked[:, j]) for j in range(ranked.shape[1])])
    support = np.count_nonzero(freqs > 0, axis=0)
    scores[support < t] = 0.0
    return scores


def _normalize(keys: list[str], scores: np.ndarray) -> dict[str, float]:
    total = math.fsum(scores)
    if total <= 0:
        raise DegenerateOutputError("filter discarded every bitstring")
    return {k: float(s / total) for k, s in zip(keys, scores) if s > 0}


def aggregate_mean(histograms: Sequence[Histogram]) -> dict[str, float]:
    """Per-bitstring mean of per-variant frequencies."""
    keys, freqs = _frequency_matrix(histograms)
    return _normalize(keys, _filtered_scores(freqs, 0.0, 0))


def dnl_filter(histograms: Sequence[Histogram], params: FilterParams) -> dict[str, float]:
    """Power-law survival filter.

    For bitstring b with per-variant frequencies sorted descending
    f_(1) >= ... >= f_(V), the score is sum_v (v/V)**p * f_(v), zero when b is
    seen in fewer than t variants; scores are normalized to a distribution.
    p = t = 0 is exactly :func:`aggregate_mean`.
    """
    if not histograms:
        raise ValidationError("no histograms to filter")
    if params.t > len(histograms):
        raise ValidationError(f"threshold t={params.t} exceeds variant count {len(histograms)}")
    total = sum(h.shots for h in histograms)
    if total < MIN_PRACTICAL_SHOTS:
        warnings.warn(
            f"only {total} shots across variants; at least {MIN_PRACTICAL_SHOTS} are needed",
            DataQualityWarning,
            stacklevel=2,
        )
    keys, freqs = _frequency_matrix(histograms)
    return _normalize(keys, _filtered_scores(freqs, params.p, params.t))


def bias_correct(logits) -> np.ndarray | LogitSet:
    """Subtract the batch mean logit. Output may leave [-1, 1]."""
    if isinstance(logits, LogitSet):
        return LogitSet(bias_correct(logits.logits), logits.sample_ids)
    z = np.asarray(logits, dtype=float)
    if z.size == 0:
        raise ValidationError("cannot bias-correct an empty logit set")
    return z - math.fsum(z) / z.size


def classify(corrected_logit: float) -> int:
    """Class 0 for a strictly positive corrected logit, class 1 otherwise (0.0 -> 1)."""
    return 0 if corrected_logit > 0 else 1


def classify_all(corrected) -> np.ndarray:
    return np.where(np.asarray(corrected) > 0, 0, 1)


def accuracy_of(logits, labels, correct_bias: bool = True) -> float:
    z = bias_correct(logits) if correct_bias else np.asarray(logits, dtype=float)
    return float(np.mean(classify_all(z) == np.asarray(labels)))


@dataclass
class GridResult:
    p: float
    t: int
    accuracy: float
    table: dict = field(default_factory=dict)


def filtered_logits(per_sample: Sequence[Sequence[Histogram]], params: FilterParams,
                    qubit: int = 0) -> np.ndarray:
    """<Z> of ``qubit`` per sample after filtering. A sample the filter annihilates scores 0."""
    out = np.empty(len(per_sample))
    for i, hists in enumerate(per_sample):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DataQualityWarning)
                out[i] = z_from_distribution(dnl_filter(hists, params), qubit)
        except DegenerateOutputError:
            out[i] = 0.0
    return out


def grid_search_filter(per_sample: Sequence[Sequence[Histogram]], candidate_ps, candidate_ts,
                       labels, qubit: int = 0) -> GridResult:
    """Exhaustive (p, t) search on bias-corrected accuracy; ties go to smaller p, then t."""
    ps, ts = sorted(set(candidate_ps)), sorted(set(candidate_ts))
    if not ps or not ts:
        raise ValidationError("empty filter grid")
    if len(labels) != len(per_sample):
        raise ValidationError("labels and samples differ in length")
    n_variants = min(len(h) for h in per_sample)
    best = None
    table = {}
    for p in ps:
        for t in ts:
            if t > n_variants:
                continue
            acc = accuracy_of(filtered_logits(per_sample, FilterParams(p, t), qubit), labels)
            table[(p, t)] = acc
            if best is None or acc > best[2]:
                best = (p, t, acc)
    if best is None:
        raise ValidationError("every grid threshold exceeds the variant count")
    return GridResult(best[0], best[1], best[2], table)


# --- execution -----------------------------------------------------------------


def run_variants(variants: VariantSet, shots: int, seed: int, noise: NoiseParams | None = None,
                 remap: bool = True) -> list[Histogram]:
    """Execute every variant with its share of ``shots``; optionally remap to logical order."""
    shares = split_shots(shots, variants.n_variants)
    out = []
    for k, (perm, circ) in enumerate(zip(variants.permutations, variants.variant_circuits)):
        if shares[k] == 0:
            continue
        child = derive_seed(seed, k)
        if noise is None:
            hist = sample(run_statevector(circ), shares[k], child)
        else:
            hist = run_noisy(circ, noise, shares[k], child)
        out.append(remap_histogram(hist, perm) if remap else hist)
    return out


# --- variant bundle on disk -------------------------------------------------------

_BUNDLE_NAME = re.compile(r"sample(?P<sample>[^_]+)_variant(?P<variant>\d+)\.hist$")


def write_bundle(directory, per_sample_raw: dict, permutations, n_qubits: int, extra: dict | None = None,
                 comment: str = ""):
    """Write raw (physical-order) histograms plus ``manifest.json`` listing permutations."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    prefix = f"# {comment}\n" if comment else ""
    for sid, hists in per_sample_raw.items():
        for k, h in enumerate(hists):
            write_text(directory / f"sample{sid}_variant{k}.hist", prefix + dumps_histogram(h))
    manifest = {
        "n_qubits": n_qubits,
        "variants": len(permutations),
        "permutations": [list(p) for p in permutations],
        "samples": [str(s) for s in per_sample_raw],
        **(extra or {}),
    }
    write_text(directory / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_bundle(directory) -> tuple[dict, dict]:
    """Return (manifest, {sample_id: [remapped histograms in variant order]})."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    perms = [tuple(p) for p in manifest["permutations"]]
    found: dict[str, dict[int, Histogram]] = {}
    for path in sorted(directory.glob("*.hist")):
        m = _BUNDLE_NAME.match(path.name)
        if not m:
            raise ValidationError(f"unexpected file in bundle: {path.name}")
        k = int(m["variant"])
        if k >= len(perms):
            raise ValidationError(f"{path.name}: variant {k} has no permutation in the manifest")
        found.setdefault(m["sample"], {})[k] = remap_histogram(loads_histogram(path.read_text()), perms[k])
    order = manifest.get("samples") or sorted(found)
    return manifest, {sid: [found[sid][k] for k in sorted(found[sid])] for sid in order}
