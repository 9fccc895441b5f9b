"""Experiment runner: qets <command> <manifest> [--seed N] [--set key=value].

Exit codes: 0 success, 2 validation error, 3 data-quality error, 4 capacity error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from qets import ansatz as anz
from qets import energy as en
from qets import mitigation as mit
from qets import pipeline as pl
from qets import powerlog as pw
from qets.errors import DataQualityWarning, QetsError, ValidationError
from qets.manifest import ExperimentManifest, load_manifest
from qets.mps import mps_fidelity, run_mps
from qets.qsim import dumps_circuit, dumps_distribution, loads_circuit, run_statevector, write_text
from qets.seeding import derive_seed

log = logging.getLogger("qets")

STOCHASTIC = {"build", "run", "train", "eval", "repro"}


# --- output helpers ----------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, payload: dict, manifest_hash: str):
    body = {"manifest_hash": manifest_hash, **_clean(payload)}
    write_text(path, json.dumps(body, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, rows: Sequence[dict], manifest_hash: str, fields: Sequence[str] | None = None):
    fields = list(fields or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    buf.write(f"# manifest_hash={manifest_hash}\n")
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    write_text(path, buf.getvalue())


def _out(m: ExperimentManifest) -> Path:
    return m.path("out", "qets-out")


def _limit(ds: pl.EmbeddingDataset, m: ExperimentManifest) -> pl.EmbeddingDataset:
    if m.max_samples is None or m.max_samples >= len(ds):
        return ds
    return ds.subset(range(m.max_samples))


def _need_seed(m: ExperimentManifest) -> int:
    if m.seed is None:
        raise ValidationError("seed: this command is stochastic; pass --seed")
    return m.seed


def _load_model_or_init(m: ExperimentManifest, dim: int) -> pl.TrainedModel:
    model_path = m.paths.get("model")
    if model_path and Path(model_path).exists():
        return pl.TrainedModel.load(model_path)
    rng = np.random.default_rng(derive_seed(_need_seed(m), 11))
    return pl.TrainedModel(m.ansatz, pl.LinearEncoder.init(m.ansatz.n_qubits, dim, rng),
                           anz.random_params(m.ansatz, rng), [], m.seed or 0)


# --- commands ---------------------------------------------------------------------------


def cmd_build(m: ExperimentManifest) -> dict:
    """Write one circuit file per embedding sample."""
    data = _limit(pl.load_embeddings(m.path("embeddings")), m)
    model = _load_model_or_init(m, data.dim)
    out = _out(m) / "circuits"
    feats = pl.encode(model.encoder, data.vectors)
    for sid, x in zip(data.ids, feats):
        circ = anz.build_circuit(model.config, x, model.params)
        write_text(out / f"sample{sid}.circuit", f"# manifest_hash={m.hash}\n" + dumps_circuit(circ))
    sq, tq = anz.count_gates(model.config)
    summary = {"samples": len(data), "n_qubits": model.config.n_qubits, "single_qubit_gates": sq,
               "two_qubit_gates": tq}
    write_json(_out(m) / "build.json", summary, m.hash)
    return summary


def cmd_run(m: ExperimentManifest) -> dict:
    """Execute every circuit as V variants and write the raw histogram bundle."""
    seed = _need_seed(m)
    if m.backend == "mps":
        raise ValidationError("backend: the mps backend does not sample histograms; use exact or noisy")
    circ_dir = m.path("circuits", str(_out(m) / "circuits"))
    paths = sorted(circ_dir.glob("sample*.circuit"))
    if not paths:
        raise ValidationError(f"paths.circuits: no circuit files in {circ_dir}")
    perms = None
    raw: dict[str, list] = {}
    shots = None
    for i, path in enumerate(paths):
        circ = loads_circuit(path.read_text())
        variants = mit.generate_variants(circ, m.mitigation.variants, derive_seed(seed, 0))
        perms = variants.permutations
        shots = m.shots_for(circ.n_qubits)
        sid = path.stem[len("sample"):]
        noise = m.noise if m.backend == "noisy" else None
        raw[sid] = mit.run_variants(variants, shots, derive_seed(seed, 1, i), noise, remap=False)
    bundle = _out(m) / "bundle"
    mit.write_bundle(bundle, raw, perms, loads_circuit(paths[0].read_text()).n_qubits,
                     {"manifest_hash": m.hash, "shots": shots, "backend": m.backend},
                     comment=f"manifest_hash={m.hash}")
    return {"samples": len(raw), "variants": len(perms), "shots": shots, "bundle": str(bundle)}


def _labels_for(m: ExperimentManifest, ids: Sequence[str]):
    emb = m.paths.get("embeddings")
    if not emb:
        return None
    data = pl.load_embeddings(emb)
    index = dict(zip(data.ids, data.labels))
    if not all(i in index for i in ids):
        return None
    return np.array([index[i] for i in ids])


def cmd_mitigate(m: ExperimentManifest) -> dict:
    """Aggregate the variant bundle into distributions, logits and classes."""
    bundle = m.path("bundle", str(_out(m) / "bundle"))
    _, per_sample = mit.read_bundle(bundle)
    ids = list(per_sample)
    hists = [per_sample[i] for i in ids]
    labels = _labels_for(m, ids)
    p, t = m.mitigation.p, m.mitigation.t
    summary: dict = {}
    if m.filter_grid is not None:
        if labels is None:
            raise ValidationError("mitigation.grid: grid search needs labelled embeddings (paths.embeddings)")
        res = mit.grid_search_filter(hists, m.filter_grid[0], m.filter_grid[1], labels)
        p, t = res.p, res.t
        summary["grid"] = [{"p": gp, "t": gt, "accuracy": acc} for (gp, gt), acc in sorted(res.table.items())]
    params = mit.FilterParams(p, t)
    out = _out(m)
    logits = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DataQualityWarning)
        for sid, hs in zip(ids, hists):
            dist = mit.dnl_filter(hs, params)
            shots = sum(h.shots for h in hs)
            write_text(out / "distributions" / f"sample{sid}.dist",
                       f"# manifest_hash={m.hash} p={p!r} t={t}\n" + dumps_distribution(dist, shots))
            logits.append(sum(v if k[pl.TARGET_QUBIT] == "0" else -v for k, v in sorted(dist.items())))
    corrected = mit.bias_correct(logits) if m.mitigation.bias_correction else np.asarray(logits)
    classes = mit.classify_all(corrected)
    rows = [{"sample_id": sid, "logit": float(z), "corrected": float(c), "class": int(k)}
            for sid, z, c, k in zip(ids, logits, corrected, classes)]
    write_csv(out / "logits.csv", rows, m.hash, ["sample_id", "logit", "corrected", "class"])
    summary.update({"p": p, "t": t, "samples": len(ids), "warnings": sorted({str(w.message) for w in caught})})
    if labels is not None:
        summary["accuracy"] = pl.evaluate(classes, labels).to_dict()
    write_json(out / "mitigation.json", summary, m.hash)
    return summary


def cmd_train(m: ExperimentManifest) -> dict:
    """Train encoder and circuit parameters on the train split; write model.json."""
    seed = _need_seed(m)
    data = pl.load_embeddings(m.path("embeddings"))
    train_set, _ = pl.split_dataset(data, m.split)
    model = pl.train(m.ansatz, train_set, m.training, seed=derive_seed(seed, 2))
    model_path = m.path("model", str(_out(m) / "model.json"))
    model.save(model_path, {"manifest_hash": m.hash})
    z = pl.exact_logits(model, train_set.vectors)
    acc = pl.evaluate(mit.classify_all(z), train_set.labels).accuracy
    return {"model": str(model_path), "train_accuracy": acc, "final_loss": model.losses[-1],
            "train_size": len(train_set)}


def _evaluate_model(m: ExperimentManifest, model: pl.TrainedModel, train_set, test_set, seed: int) -> dict:
    _, pred = pl.predict_batch(model, test_set, m.backend, m.shots_for(model.config.n_qubits),
                               m.noise, m.mitigation, derive_seed(seed, 3))
    report = pl.evaluate(pred, test_set.labels).to_dict()
    return {
        "backend": m.backend,
        "quantum": report,
        "logistic_baseline": pl.logistic_baseline(train_set, test_set, seed=derive_seed(seed, 4)),
        "reference_accuracy": pl.REFERENCE_ACCURACY,
    }


def cmd_eval(m: ExperimentManifest) -> dict:
    """Accuracy of a trained model on the test split, plus the logistic baseline."""
    seed = _need_seed(m)
    data = pl.load_embeddings(m.path("embeddings"))
    train_set, test_set = pl.split_dataset(data, m.split)
    model = pl.TrainedModel.load(m.path("model"))
    result = _evaluate_model(m, model, train_set, _limit(test_set, m), seed)
    write_json(_out(m) / "eval.json", result, m.hash)
    return result


def energy_report(m: ExperimentManifest) -> dict:
    qubits = [int(q) for q in m.raw["energy"]["qubits"]]
    rows = en.scaling_table(qubits, m.ansatz, m.energy_params, float(m.raw["energy"]["circuit_multiplier"]))
    qpu_pts = [(r.Q, r.E_qpu) for r in rows]
    gpu_pts = [(r.Q, r.E_gpu) for r in rows]
    lin = en.fit_linear(qpu_pts)
    exp_full = en.fit_exponential(gpu_pts)
    q_min = m.raw["energy"].get("gpu_q_min")
    exp_restricted = en.fit_exponential(gpu_pts, q_min) if q_min is not None else None
    cross = en.crossover(lin, exp_full)
    exact_qpu = [en.e_qpu(m.energy_params, r.SQ, r.TQ, float(m.raw["energy"]["circuit_multiplier"]), exact=True)
                 for r in rows]
    return {
        "rows": [r.to_dict() for r in rows],
        "fits": {
            "qpu_linear": lin.to_dict(),
            "gpu_exponential": exp_full.to_dict(),
            "gpu_exponential_restricted": exp_restricted and exp_restricted.to_dict(),
        },
        "crossover_qubits": cross,
        "E_qpu_second_differences_exact": [str(d) for d in en.second_differences(exact_qpu)],
        "reference_break_even_qubits": en.REFERENCE_BREAK_EVEN_QUBITS,
        "reference_note": en.REFERENCE_BREAK_EVEN_NOTE,
        "gate_count_source": "ansatz gate counts (SQ_Q, TQ_Q) from the re-uploading circuit",
        "energy_params": dict(m.energy_params.__dict__),
    }


def cmd_energy(m: ExperimentManifest) -> dict:
    """Energy scaling table, linear/exponential fits and crossover."""
    report = energy_report(m)
    out = _out(m)
    write_csv(out / "energy_table.csv", report["rows"], m.hash)
    write_json(out / "energy.json", report, m.hash)
    return report


def cmd_powerlog(trace_path, jobs_path, out: Path, method: str = "rectangle", clock_offset: float = 0.0) -> dict:
    trace = pw.load_trace(trace_path)
    jobs = pw.load_jobs(jobs_path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DataQualityWarning)
        rows = pw.job_energy_table(trace, jobs, method=method, clock_offset=clock_offset)
    tag = "powerlog"
    write_csv(out / "job_energy.csv", rows, tag)
    summary: dict = {"jobs": len(jobs), "components": trace.components, "correlation": {}, "normalized": {},
                     "warnings": sorted({str(w.message) for w in caught})}
    for comp in trace.components:
        avg = [r["average_kW"] for r in rows if r["component"] == comp]
        qs = [r["qubits"] for r in rows if r["component"] == comp]
        try:
            summary["correlation"][comp] = pw.power_qubit_correlation(avg, qs)
            summary["normalized"][comp] = pw.normalize_series(avg).tolist()
        except QetsError as exc:
            summary["correlation"][comp] = None
            summary["warnings"].append(f"{comp}: {exc}")
    summary["rows"] = rows
    write_json(out / "powerlog.json", summary, tag)
    return summary


def cmd_repro(m: ExperimentManifest) -> dict:
    """End-to-end run on synthetic data with exact and noisy evaluation."""
    seed = _need_seed(m)
    out = _out(m)
    syn = m.raw["synthetic"]
    data = pl.make_separable_clusters(int(syn["n"]), int(syn["dim"]), derive_seed(seed, 10),
                                      float(syn["separation"]), float(syn["spread"]))
    pl.save_embeddings(data, out / "data" / "embeddings.csv", f"manifest_hash={m.hash}")
    train_set, test_set = pl.split_dataset(data, m.split)
    test_set = _limit(test_set, m)
    model = pl.train(m.ansatz, train_set, m.training, seed=derive_seed(seed, 2))
    model.save(out / "model.json", {"manifest_hash": m.hash})

    exact_z, exact_pred = pl.predict_batch(model, test_set, "exact")
    noisy_z, noisy_pred = pl.predict_batch(model, test_set, "noisy", m.shots_for(m.ansatz.n_qubits),
                                           m.noise, m.mitigation, derive_seed(seed, 3))
    rows = [{"sample_id": sid, "label": int(y), "exact_logit": float(a), "noisy_logit": float(b),
             "exact_class": int(c), "noisy_class": int(d)}
            for sid, y, a, b, c, d in zip(test_set.ids, test_set.labels, exact_z, noisy_z, exact_pred, noisy_pred)]
    write_csv(out / "predictions.csv", rows, m.hash)

    fids = []
    feats = pl.encode(model.encoder, test_set.vectors[:3])
    for x in feats:
        circ = anz.build_circuit(model.config, x, model.params)
        chi = m.chi_max or 1 << (circ.n_qubits // 2)
        fids.append(mps_fidelity(run_mps(circ, chi), run_statevector(circ)))

    result = {
        "train_size": len(train_set),
        "test_size": len(test_set),
        "final_loss": model.losses[-1],
        "train_accuracy": pl.evaluate(mit.classify_all(pl.exact_logits(model, train_set.vectors)),
                                      train_set.labels).accuracy,
        "exact": pl.evaluate(exact_pred, test_set.labels).to_dict(),
        "noisy_mitigated": pl.evaluate(noisy_pred, test_set.labels).to_dict(),
        "logistic_baseline": pl.logistic_baseline(train_set, test_set, seed=derive_seed(seed, 4)),
        "mps_fidelity": fids,
        "gate_counts": dict(zip(("SQ", "TQ"), anz.count_gates(m.ansatz))),
    }
    write_json(out / "repro.json", result, m.hash)
    report = energy_report(m)
    write_csv(out / "energy_table.csv", report["rows"], m.hash)
    write_json(out / "energy.json", report, m.hash)
    return result


COMMANDS = {
    "build": cmd_build, "run": cmd_run, "mitigate": cmd_mitigate, "train": cmd_train,
    "eval": cmd_eval, "energy": cmd_energy, "repro": cmd_repro,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qets", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else name)
        p.add_argument("manifest", help="YAML or JSON experiment manifest")
        p.add_argument("--seed", type=int, help="required for stochastic commands")
        p.add_argument("--out", help="output directory (overrides paths.out)")
        p.add_argument("--backend", choices=("exact", "noisy", "mps"))
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a manifest key, e.g. --set ansatz.Q=12")
    p = sub.add_parser("powerlog", help="per-job energy from a power trace")
    p.add_argument("trace")
    p.add_argument("jobs")
    p.add_argument("--out", default="qets-out")
    p.add_argument("--method", choices=("rectangle", "trapezoid"), default="rectangle")
    p.add_argument("--clock-offset", type=float, default=0.0)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "powerlog":
            result = cmd_powerlog(args.trace, args.jobs, Path(args.out), args.method, args.clock_offset)
        else:
            overrides = list(args.overrides)
            if args.out:
                overrides.append(f"paths.out={args.out}")
            if args.backend:
                overrides.append(f"backend={args.backend}")
            m = load_manifest(args.manifest, overrides, seed=args.seed)
            if args.command in STOCHASTIC and args.seed is None:
                raise ValidationError("--seed is required for this command")
            result = COMMANDS[args.command](m)
    except QetsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps(_summary(result), indent=2, sort_keys=True))
    return 0


def _summary(result: dict) -> dict:
    return {k: v for k, v in _clean(result).items() if k not in ("rows",)}


if __name__ == "__main__":
    sys.exit(main())
