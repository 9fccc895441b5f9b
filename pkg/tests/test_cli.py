import json
import textwrap
from pathlib import Path

import pytest
import yaml

from qets import cli
from qets import mitigation as mit
from qets.manifest import apply_override, build_manifest, load_manifest
from qets.errors import ValidationError

SMALL = {
    "ansatz": {"Q": 4, "R": 1, "M": 2, "N": 1, "B": 8},
    "backend": "noisy",
    "split": {"per_label_train": 12},
    "training": {"epochs": 3},
    "synthetic": {"n": 40, "dim": 3},
    "max_samples": 4,
    "mitigation": {"V": 4},
    "energy": {"qubits": [10, 12, 14, 16, 18, 20, 22]},
}


def write_manifest(tmp_path, data=None, name="m.yaml"):
    data = {**SMALL, **(data or {})}
    data.setdefault("paths", {})
    data["paths"] = {"out": str(tmp_path / "out"), "embeddings": str(tmp_path / "out/data/embeddings.csv"),
                     "model": str(tmp_path / "out/model.json"), **data["paths"]}
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def snapshot(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_repro_is_byte_identical(tmp_path, capsys):
    m = write_manifest(tmp_path)
    assert cli.main(["repro", str(m), "--seed", "5"]) == 0
    first = snapshot(tmp_path / "out")
    assert cli.main(["repro", str(m), "--seed", "5"]) == 0
    assert snapshot(tmp_path / "out") == first
    assert {"repro.json", "predictions.csv", "energy.json", "model.json"} <= set(first)


def test_outputs_embed_manifest_hash(tmp_path):
    m = write_manifest(tmp_path)
    h = load_manifest(m, seed=5).hash
    for cmd in ("repro", "build", "run", "mitigate", "energy", "eval"):
        assert cli.main([cmd, str(m), "--seed", "5"]) == 0, cmd
    files = [p for p in (tmp_path / "out").rglob("*") if p.is_file()]
    assert len(files) > 20
    for p in files:
        assert h in p.read_text(), p


def test_full_chain_and_mitigate_mean_equivalence(tmp_path):
    m = write_manifest(tmp_path)
    for cmd in ("repro", "build", "run", "mitigate"):
        assert cli.main([cmd, str(m), "--seed", "2"]) == 0
    _, per_sample = mit.read_bundle(tmp_path / "out/bundle")
    for sid, hists in per_sample.items():
        text = (tmp_path / f"out/distributions/sample{sid}.dist").read_text().splitlines()
        dist = {k: float(v) for k, v in (line.split() for line in text[2:])}
        assert dist == mit.aggregate_mean(hists)


def test_mitigate_grid(tmp_path):
    m = write_manifest(tmp_path, {"mitigation": {"V": 4, "grid": {"p": [0, 2], "t": [0, 1]}}})
    for cmd in ("repro", "build", "run", "mitigate"):
        assert cli.main([cmd, str(m), "--seed", "2"]) == 0
    report = json.loads((tmp_path / "out/mitigation.json").read_text())
    assert len(report["grid"]) == 4
    assert (report["p"], report["t"]) in {(g["p"], g["t"]) for g in report["grid"]}


def test_energy_table_affine(tmp_path):
    m = write_manifest(tmp_path, {"energy": {"qubits": list(range(10, 30, 2))}})
    assert cli.main(["energy", str(m)]) == 0
    report = json.loads((tmp_path / "out/energy.json").read_text())
    assert report["E_qpu_second_differences_exact"] == ["0"] * 8
    assert report["reference_break_even_qubits"] == 34
    csv_lines = (tmp_path / "out/energy_table.csv").read_text().splitlines()
    assert csv_lines[0].startswith("# manifest_hash=") and csv_lines[1].startswith("Q,SQ,TQ")


def test_seed_required(tmp_path, capsys):
    m = write_manifest(tmp_path)
    assert cli.main(["train", str(m)]) == 2
    assert "--seed" in capsys.readouterr().err


@pytest.mark.parametrize("override,needle", [
    ("ansatz.Q=3", "ansatz"),
    ("mitigation.p=-1", "mitigation"),
    ("noise.p1=2", "noise"),
    ("shots=lots", "shots"),
    ("energy.params.P_qpu=0", "energy.params"),
])
def test_validation_names_key_path(tmp_path, capsys, override, needle):
    m = write_manifest(tmp_path)
    assert cli.main(["energy", str(m), "--set", override]) == 2
    assert needle in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_capacity_exit_code(tmp_path):
    m = write_manifest(tmp_path)
    circuits = tmp_path / "out/circuits"
    circuits.mkdir(parents=True)
    (circuits / "sample0.circuit").write_text("qubits 30\nry 0 0.1\n")
    assert cli.main(["run", str(m), "--seed", "1", "--set", "backend=exact", "--set", "shots=100"]) == 4


def test_powerlog_command(tmp_path):
    trace = tmp_path / "trace.csv"
    trace.write_text("".join(f"{t},total,{4000 + 10 * t}\n{t},cryo,{1000 + 5 * t}\n" for t in range(60)))
    jobs = tmp_path / "jobs.csv"
    jobs.write_text("a,0,10,10,500,25\nb,10,25,12,1000,25\nc,25,50,14,2000,25\n")
    out = tmp_path / "pl"
    assert cli.main(["powerlog", str(trace), str(jobs), "--out", str(out)]) == 0
    report = json.loads((out / "powerlog.json").read_text())
    assert report["correlation"]["total"] > 0.95
    assert len(report["rows"]) == 6
    jobs.write_text("a,100,110,10,500,25\n")
    assert cli.main(["powerlog", str(trace), str(jobs), "--out", str(out)]) == 3


def test_manifest_overrides_and_hash():
    data = {"ansatz": {"Q": 6}}
    apply_override(data, "ansatz.R=2")
    apply_override(data, "mitigation.grid={p: [0, 1]}")
    m = build_manifest(data)
    assert m.ansatz.reuploads == 2 and m.filter_grid == ((0.0, 1.0), mit.DEFAULT_T_GRID)
    a = build_manifest({"ansatz": {"Q": 6}, "paths": {"out": "x"}})
    b = build_manifest({"ansatz": {"Q": 6}, "paths": {"out": "y"}})
    c = build_manifest({"ansatz": {"Q": 8}})
    assert a.hash == b.hash != c.hash
    with pytest.raises(ValidationError):
        apply_override({}, "novalue")
    with pytest.raises(ValidationError):
        build_manifest({"colour": 1})
    assert build_manifest({"ansatz": {"Q": 12}, "shots": "table"}).shots_for(12) == 1000
