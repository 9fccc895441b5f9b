"""Noisy variants of one trained-size circuit: raw vs mean vs DNL-filtered <Z>."""

import argparse
import warnings

import numpy as np

from qets import ansatz as anz
from qets import mitigation as mit
from qets.errors import DataQualityWarning
from qets.qsim import NoiseParams, expectation_z, run_noisy, run_statevector, z_from_distribution, z_from_histogram


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--qubits", type=int, default=8)
    ap.add_argument("--variants", type=int, default=25)
    ap.add_argument("--shots", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p-ro", type=float, default=0.02)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cfg = anz.AnsatzConfig(args.qubits, reuploads=1, main_blocks=2)
    circ = anz.build_circuit(cfg, rng.uniform(-1, 1, args.qubits), anz.random_params(cfg, rng))
    noise = NoiseParams(p_ro=args.p_ro)
    exact = expectation_z(run_statevector(circ), 0)
    raw = z_from_histogram(run_noisy(circ, noise, args.shots, args.seed), 0)
    hists = mit.run_variants(mit.generate_variants(circ, args.variants, args.seed), args.shots,
                             args.seed + 1, noise)
    print(f"exact <Z0>            {exact:+.4f}")
    print(f"single layout         {raw:+.4f}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DataQualityWarning)
        for p in mit.DEFAULT_P_GRID:
            for t in mit.DEFAULT_T_GRID:
                if t > len(hists):
                    continue
                try:
                    z = z_from_distribution(mit.dnl_filter(hists, mit.FilterParams(p, t)), 0)
                except mit.DegenerateOutputError:
                    continue
                print(f"variants p={p:<3g} t={t:<2d}   {z:+.4f}")


if __name__ == "__main__":
    main()
