"""Fidelity of truncated MPS simulation against the statevector, per bond dimension."""

import argparse

import numpy as np

from qets import ansatz as anz
from qets.mps import mps_cost, mps_fidelity, run_mps
from qets.qsim import run_statevector


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--qubits", type=int, nargs="+", default=[4, 6, 8, 10, 12])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'Q':>3} {'chi':>4} {'fidelity':>12} {'discarded':>10} {'swaps':>6} {'est. flops':>11}")
    for q in args.qubits:
        cfg = anz.AnsatzConfig(q)
        circ = anz.build_circuit(cfg, rng.uniform(-np.pi, np.pi, q), anz.random_params(cfg, rng))
        ref = run_statevector(circ)
        chi = 1
        while chi <= 1 << (q // 2):
            mps = run_mps(circ, chi)
            cost = mps_cost(q, chi, len(circ)).estimated_flops
            print(f"{q:3d} {chi:4d} {mps_fidelity(mps, ref):12.9f} {mps.discarded_weight:10.2e} "
                  f"{mps.swap_count:6d} {cost:11.3e}")
            chi *= 2


if __name__ == "__main__":
    main()
