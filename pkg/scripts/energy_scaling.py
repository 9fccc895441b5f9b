"""Print the QPU/GPU energy scaling table, both fits and the crossover."""

import argparse

from qets import ansatz as anz
from qets import energy as en


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--qubits", type=int, nargs="+", default=list(range(10, 30, 2)))
    ap.add_argument("--multiplier", type=float, default=1.0, help="circuit overhead multiplier k")
    ap.add_argument("--q-min", type=float, default=16, help="lower bound for the restricted GPU fit")
    args = ap.parse_args()

    params = en.EnergyModelParams()
    for label, value in params.table():
        print(f"{label:40s} {value}")
    print()
    rows = en.scaling_table(args.qubits, anz.AnsatzConfig(10), params, args.multiplier)
    print(f"{'Q':>3} {'SQ':>5} {'TQ':>4} {'E_qpu kJ':>10} {'E_gpu kJ':>12} {'chi':>4} {'MPS flops':>10}")
    for r in rows:
        print(f"{r.Q:3d} {r.SQ:5d} {r.TQ:4d} {r.E_qpu:10.3f} {r.E_gpu:12.4e} {r.chi:4d} {r.mps_flops:10.3e}")

    lin = en.fit_linear([(r.Q, r.E_qpu) for r in rows])
    full = en.fit_exponential([(r.Q, r.E_gpu) for r in rows])
    restricted = en.fit_exponential([(r.Q, r.E_gpu) for r in rows], args.q_min)
    print(f"\nQPU linear:      E = {lin.a:.4f} Q + {lin.b:.3f}   R2 = {lin.r_squared:.6f}")
    print(f"GPU exponential: E = {full.a:.3e} * {full.b:.4f}^Q   R2(log) = {full.r_squared:.6f}")
    print(f"  Q >= {args.q_min:g}:     E = {restricted.a:.3e} * {restricted.b:.4f}^Q   "
          f"R2(log) = {restricted.r_squared:.6f}")
    q = en.crossover(lin, full)
    print(f"model crossover: {q:.3f} qubits" if q else "model crossover: none below the ceiling")
    print(f"measured reference: ~{en.REFERENCE_BREAK_EVEN_QUBITS} qubits ({en.REFERENCE_BREAK_EVEN_NOTE})")


if __name__ == "__main__":
    main()
