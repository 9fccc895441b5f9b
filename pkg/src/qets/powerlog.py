"""Per-job energy accounting from 1 Hz component power traces.

A sample at time t holds its wattage until the next sample (rectangle rule).
Gaps longer than ``GAP_SECONDS`` are bridged by linear interpolation and
flagged with a DataQualityWarning.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from qets.errors import DataQualityError, DataQualityWarning, ValidationError

GAP_SECONDS = 2.0
TOTAL = "total"


@dataclass(frozen=True)
class PowerSample:
    timestamp: float
    component: str
    watts: float

    def __post_init__(self):
        if not self.watts >= 0:
            raise ValidationError(f"negative or NaN wattage {self.watts} at t={self.timestamp}")


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    start_ts: float
    end_ts: float
    qubit_count: int = 0
    shots: int = 0
    variant_count: int = 1

    def __post_init__(self):
        if not self.start_ts < self.end_ts:
            raise ValidationError(f"job {self.job_id}: start {self.start_ts} is not before end {self.end_ts}")

    @property
    def duration(self) -> float:
        return self.end_ts - self.start_ts


class PowerTrace:
    """Samples grouped by component, each with strictly increasing timestamps."""

    def __init__(self, samples: Iterable[PowerSample]):
        grouped: dict[str, list[tuple[float, float]]] = {}
        for s in samples:
            grouped.setdefault(s.component, []).append((float(s.timestamp), float(s.watts)))
        self.series: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for comp in sorted(grouped):
            pts = grouped[comp]
            t = np.array([p[0] for p in pts])
            w = np.array([p[1] for p in pts])
            if np.any(np.diff(t) <= 0):
                raise ValidationError(f"component {comp!r}: timestamps are not strictly increasing")
            self.series[comp] = (t, w)

    @classmethod
    def from_arrays(cls, component: str, timestamps, watts) -> "PowerTrace":
        return cls(PowerSample(float(t), component, float(w)) for t, w in zip(timestamps, watts))

    @property
    def components(self) -> list[str]:
        return list(self.series)

    def __getitem__(self, component: str):
        try:
            return self.series[component]
        except KeyError:
            raise ValidationError(f"trace has no component {component!r}") from None


def load_trace(path) -> PowerTrace:
    """Read ``timestamp,component,watts`` lines; comments and a header line are skipped."""
    samples = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "timestamp":
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            samples.append(PowerSample(float(row[0]), row[1].strip(), float(row[2])))
    return PowerTrace(samples)


def load_jobs(path) -> list[JobRecord]:
    """Read ``job_id,start_ts,end_ts,qubits,shots,variants`` lines."""
    jobs = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "job_id":
                continue
            if len(row) != 6:
                raise ValidationError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            jobs.append(JobRecord(row[0].strip(), float(row[1]), float(row[2]),
                                  int(row[3]), int(row[4]), int(row[5])))
    return jobs


def _segment_integral(t0, t1, w0, w1, u, v, linear: bool) -> float:
    """Integral over [u, v] within segment [t0, t1] of constant w0 or the w0 -> w1 line."""
    if not linear:
        return w0 * (v - u)
    slope = (w1 - w0) / (t1 - t0)
    wu = w0 + slope * (u - t0)
    wv = w0 + slope * (v - t0)
    return 0.5 * (wu + wv) * (v - u)


def integrate_energy(trace: PowerTrace, job: JobRecord, component: str = TOTAL,
                     method: str = "rectangle", clock_offset: float = 0.0) -> float:
    """Energy in kJ drawn by ``component`` over the job window [start, end).

    ``clock_offset`` is added to the job timestamps to align them with the
    trace clock. ``method="trapezoid"`` interpolates every segment linearly.
    """
    if method not in ("rectangle", "trapezoid"):
        raise ValidationError(f"unknown integration method {method!r}")
    t, w = trace[component]
    start, end = job.start_ts + clock_offset, job.end_ts + clock_offset
    # the last sample holds for one nominal sampling period
    period = float(np.median(np.diff(t))) if t.size > 1 else 1.0
    edges = np.append(t, t[-1] + period)
    if edges[-1] <= start or edges[0] >= end:
        raise DataQualityError(f"job {job.job_id}: no samples of {component!r} overlap the window")

    joules = []
    gapped = False
    first = max(int(np.searchsorted(edges, start, side="right")) - 1, 0)
    last = min(int(np.searchsorted(edges, end, side="left")), t.size)
    for i in range(first, last):
        t0, t1 = edges[i], edges[i + 1]
        u, v = max(t0, start), min(t1, end)
        if v <= u:
            continue
        has_next = i + 1 < t.size
        gap = has_next and (t1 - t0) > GAP_SECONDS
        gapped |= gap
        linear = has_next and (gap or method == "trapezoid")
        joules.append(_segment_integral(t0, t1, w[i], w[i + 1] if has_next else w[i], u, v, linear))
    if gapped:
        warnings.warn(f"job {job.job_id}: {component!r} trace has gaps > {GAP_SECONDS:g}s; "
                      "interpolated linearly", DataQualityWarning, stacklevel=2)
    if edges[0] > start or edges[-1] < end:
        warnings.warn(f"job {job.job_id}: {component!r} trace covers only part of the window",
                      DataQualityWarning, stacklevel=2)
    return math.fsum(joules) / 1000.0


def average_power(trace: PowerTrace, job: JobRecord, component: str = TOTAL, **kwargs) -> float:
    """Mean power in kW over the job window."""
    if job.duration <= 0:
        raise ValidationError("zero-length job window")
    return integrate_energy(trace, job, component, **kwargs) / job.duration


def normalize_series(values: Sequence[float]) -> np.ndarray:
    """z-score with population standard deviation."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValidationError("need at least two values to normalize")
    sd = x.std()
    if sd == 0 or not math.isfinite(sd):
        raise DataQualityError("series has zero variance")
    return (x - x.mean()) / sd


def stacked_series(series: dict[str, Sequence[float]], spacing: float = 3.0) -> dict[str, list[float]]:
    """Normalized series shifted by ``spacing * index`` for side-by-side display."""
    return {name: (normalize_series(vals) + spacing * i).tolist()
            for i, (name, vals) in enumerate(series.items())}


def power_qubit_correlation(averages: Sequence[float], qubits: Sequence[float]) -> float:
    """Pearson correlation between per-job average power and qubit count."""
    y = np.asarray(averages, dtype=float)
    x = np.asarray(qubits, dtype=float)
    if x.size != y.size:
        raise ValidationError("averages and qubit counts differ in length")
    if x.size < 3:
        raise ValidationError("need at least three paired points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DataQualityError("zero variance on one axis; correlation undefined")
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def job_energy_table(trace: PowerTrace, jobs: Sequence[JobRecord], components: Sequence[str] | None = None,
                     **kwargs) -> list[dict]:
    """One row per (job, component), ordered by job then component name."""
    comps = sorted(components or trace.components)
    rows = []
    for job in jobs:
        per = {}
        for comp in comps:
            e = integrate_energy(trace, job, comp, **kwargs)
            per[comp] = e
            rows.append({
                "job_id": job.job_id, "component": comp, "qubits": job.qubit_count,
                "shots": job.shots, "variants": job.variant_count, "duration_s": job.duration,
                "energy_kJ": e, "average_kW": e / job.duration,
            })
        check_component_sum(per, job.job_id)
    return rows


def check_component_sum(per_component: dict[str, float], job_id: str = "", rel_tol: float = 1e-6) -> bool:
    """Warn when subsystem energies exceed the ``total`` reading. Returns True when consistent."""
    if TOTAL not in per_component:
        return True
    parts = math.fsum(v for k, v in per_component.items() if k != TOTAL)
    total = per_component[TOTAL]
    ok = parts <= total * (1 + rel_tol) + 1e-12
    if not ok:
        warnings.warn(f"job {job_id}: component energies {parts:.6g} kJ exceed total {total:.6g} kJ",
                      DataQualityWarning, stacklevel=2)
    return ok
