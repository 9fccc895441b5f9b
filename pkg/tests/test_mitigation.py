import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qets import ansatz as anz
from qets import mitigation as mit
from qets.errors import DataQualityWarning, DegenerateOutputError, ValidationError
from qets.qsim import Histogram, expectation_z, run_statevector, z_from_distribution

from conftest import random_circuit


def random_histograms(rng, n_variants, n_qubits=3, max_count=40):
    hists = []
    for _ in range(n_variants):
        keys = rng.choice(1 << n_qubits, size=rng.integers(1, 1 << n_qubits), replace=False)
        hists.append(Histogram({format(int(k), f"0{n_qubits}b"): int(rng.integers(1, max_count))
                                for k in keys}))
    return hists


def test_single_variant_is_identity():
    circ = random_circuit(4, 10, np.random.default_rng(0))
    vs = mit.generate_variants(circ, 1, seed=3)
    assert vs.permutations == ((0, 1, 2, 3),)
    assert vs.variant_circuits[0] == circ


def test_variants_distinct():
    circ = random_circuit(10, 10, np.random.default_rng(0))
    vs = mit.generate_variants(circ, 25, seed=7)
    assert len(set(vs.permutations)) == 25
    assert vs.permutations[0] == tuple(range(10))
    assert mit.generate_variants(circ, 25, seed=7).permutations == vs.permutations


def test_too_many_variants():
    circ = random_circuit(3, 4, np.random.default_rng(0))
    assert len(set(mit.generate_variants(circ, 6, 0).permutations)) == 6
    with pytest.raises(ValidationError):
        mit.generate_variants(circ, 7, 0)


def test_remap_examples():
    h = Histogram({"10": 7})
    assert mit.remap_histogram(h, (0, 1)).counts == {"10": 7}
    assert mit.remap_histogram(h, (1, 0)).counts == {"01": 7}
    with pytest.raises(ValidationError):
        mit.remap_histogram(h, (0, 0))


@given(st.permutations(range(5)), st.integers(0, 2**31))
def test_remap_inverts_relabel(perm, seed):
    rng = np.random.default_rng(seed)
    circ = random_circuit(5, 15, rng)
    logical = run_statevector(circ)
    physical = run_statevector(circ.relabel(perm))
    from qets.qsim import sample
    h = mit.remap_histogram(sample(physical, 300, seed), perm)
    ref = sample(logical, 300, seed)
    # distributions match exactly; compare probabilities of the remapped support
    probs = np.abs(logical) ** 2
    assert all(probs[int(k, 2)] > 0 for k in h.counts)
    assert h.shots == ref.shots


def test_aggregate_single_histogram():
    h = Histogram({"0": 3, "1": 1})
    assert mit.aggregate_mean([h]) == {"0": 0.75, "1": 0.25}


def test_aggregate_two_single_shots():
    assert mit.aggregate_mean([Histogram({"0": 1}), Histogram({"1": 1})]) == {"0": 0.5, "1": 0.5}


def test_filter_hand_example():
    a = Histogram({"0": 10})
    b = Histogram({"0": 5, "1": 5})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        dist = mit.dnl_filter([a, b], mit.FilterParams(p=1, t=0))
        mean = mit.dnl_filter([a, b], mit.FilterParams(0, 0))
    # "0" has frequencies (1.0, 0.5): score 0.5*1 + 1*0.5 = 1.0; "1": (0.5, 0) -> 0.25
    assert dist["0"] == pytest.approx(0.8, abs=1e-15) and dist["1"] == pytest.approx(0.2, abs=1e-15)
    assert mean == {"0": 0.75, "1": 0.25}


def test_score_kernel_hand_values():
    # columns: a with per-variant frequencies (1.0, 0.0), b with (0.5, 0.5)
    freqs = np.array([[1.0, 0.5], [0.0, 0.5]])
    scores = mit._filtered_scores(freqs, 1.0, 0)
    np.testing.assert_allclose(scores, [0.5, 0.75])
    dist = mit._normalize(["a", "b"], scores)
    assert dist["a"] == pytest.approx(0.4) and dist["b"] == pytest.approx(0.6)
    np.testing.assert_allclose(mit._filtered_scores(freqs, 0.0, 0), [1.0, 1.0])


def test_filter_suppresses_concentrated_bitstring():
    # bitstring a seen only in one variant (1.0, 0.0); b spread (0.5, 0.5)
    v1 = Histogram({"00": 2, "11": 2})
    v2 = Histogram({"11": 4})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        dist = mit.dnl_filter([Histogram({"00": 4}), Histogram({"11": 4})], mit.FilterParams(1, 0))
        assert dist == {"00": 0.5, "11": 0.5}
        dist = mit.dnl_filter([v1, v2], mit.FilterParams(1, 0))
    # "00": sorted (0.5, 0) -> 0.25; "11": sorted (1.0, 0.5) -> 0.5 + 0.5 = 1.0
    assert dist["00"] == pytest.approx(0.2) and dist["11"] == pytest.approx(0.8)


def test_threshold_drops_rare_bitstring():
    hists = [Histogram({"00": 40}) for _ in range(24)] + [Histogram({"00": 39, "11": 1})]
    dist = mit.dnl_filter(hists, mit.FilterParams(0, 2))
    assert "11" not in dist and dist["00"] == pytest.approx(1.0)


def test_degenerate_output():
    hists = [Histogram({"0": 300}), Histogram({"1": 300})]
    with pytest.raises(DegenerateOutputError):
        mit.dnl_filter(hists, mit.FilterParams(0, 2))


def test_low_shot_warning():
    with pytest.warns(DataQualityWarning):
        mit.dnl_filter([Histogram({"0": 10})], mit.FilterParams())


def test_filter_param_validation():
    with pytest.raises(ValidationError):
        mit.FilterParams(p=-1)
    with pytest.raises(ValidationError):
        mit.FilterParams(p=float("inf"))
    with pytest.raises(ValidationError):
        mit.dnl_filter([Histogram({"0": 600})], mit.FilterParams(0, 3))
    with pytest.raises(ValidationError):
        mit.aggregate_mean([Histogram({"0": 1}), Histogram({"00": 1})])


@given(st.integers(0, 2**31), st.integers(1, 25))
def test_zero_filter_is_mean(seed, v):
    hists = random_histograms(np.random.default_rng(seed), v)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        assert mit.dnl_filter(hists, mit.FilterParams(0, 0)) == mit.aggregate_mean(hists)


@given(st.integers(0, 2**31), st.floats(0, 8), st.integers(0, 3))
def test_filter_output_is_distribution(seed, p, t):
    rng = np.random.default_rng(seed)
    hists = random_histograms(rng, 6)
    order = rng.permutation(6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        try:
            dist = mit.dnl_filter(hists, mit.FilterParams(p, t))
        except DegenerateOutputError:
            return
        shuffled = mit.dnl_filter([hists[i] for i in order], mit.FilterParams(p, t))
    assert math.fsum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(v > 0 for v in dist.values())
    assert dist.keys() == shuffled.keys()
    for k in dist:
        assert dist[k] == pytest.approx(shuffled[k], abs=1e-15)


def test_bias_correct_examples():
    np.testing.assert_allclose(mit.bias_correct([0.5, 0.1, -0.3]), [0.4, 0.0, -0.4], atol=1e-15)
    np.testing.assert_array_equal(mit.bias_correct([0.2, -0.2]), [0.2, -0.2])
    np.testing.assert_array_equal(mit.bias_correct([0.3] * 4), [0.0] * 4)
    with pytest.raises(ValidationError):
        mit.bias_correct([])


def test_bias_correct_logitset_keeps_ids():
    out = mit.bias_correct(mit.LogitSet([1.0, 3.0], ("a", "b")))
    assert out.sample_ids == ("a", "b")
    np.testing.assert_array_equal(out.logits, [-1.0, 1.0])


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=50), st.floats(-5, 5))
def test_bias_correction_shift_invariant(z, c):
    a = mit.bias_correct(z)
    b = mit.bias_correct(np.asarray(z) + c)
    assert abs(math.fsum(a)) / len(z) < 1e-12
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_classify_rule():
    assert mit.classify(0.2) == 0
    assert mit.classify(-0.2) == 1
    assert mit.classify(0.0) == 1
    assert list(mit.classify_all([0.2, 0.0, -0.1])) == [0, 1, 1]


def test_grid_singleton_and_ties():
    rng = np.random.default_rng(2)
    samples = [random_histograms(rng, 5, 2, 200) for _ in range(8)]
    labels = rng.integers(0, 2, 8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        res = mit.grid_search_filter(samples, [0], [0], labels)
        mean_z = [z_from_distribution(mit.aggregate_mean(h), 0) for h in samples]
    assert (res.p, res.t) == (0, 0)
    assert res.accuracy == mit.accuracy_of(mean_z, labels)
    flat = mit.grid_search_filter(samples, [4, 0, 1], [3, 0], np.zeros(8, dtype=int))
    best = max(flat.table.values())
    first = min(k for k, v in flat.table.items() if v == best)
    assert (flat.p, flat.t) == first


def test_symmetrized_mean_recovers_exact_z():
    cfg = anz.AnsatzConfig(6, reuploads=1, main_blocks=2)
    rng = np.random.default_rng(5)
    circ = anz.build_circuit(cfg, rng.uniform(-1, 1, 6), anz.random_params(cfg, rng))
    shots = 5000
    hists = mit.run_variants(mit.generate_variants(circ, 25, 1), shots, seed=2)
    z = z_from_distribution(mit.aggregate_mean(hists), 0)
    assert abs(z - expectation_z(run_statevector(circ), 0)) < 5 / math.sqrt(shots)


def test_bundle_roundtrip(tmp_path):
    circ = random_circuit(4, 12, np.random.default_rng(1))
    vs = mit.generate_variants(circ, 5, 3)
    raw = mit.run_variants(vs, 600, 4, remap=False)
    mit.write_bundle(tmp_path, {"7": raw}, vs.permutations, 4, comment="tag")
    manifest, per_sample = mit.read_bundle(tmp_path)
    assert manifest["variants"] == 5
    expected = [mit.remap_histogram(h, p) for h, p in zip(raw, vs.permutations)]
    assert [h.counts for h in per_sample["7"]] == [h.counts for h in expected]
    assert (tmp_path / "sample7_variant0.hist").read_text().startswith("# tag\n")


def test_split_shots():
    assert mit.split_shots(10, 3) == [4, 3, 3]
    assert sum(mit.split_shots(601, 25)) == 601
