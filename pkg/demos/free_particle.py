"""Free particle: integrated transfer matrices against cosh/sinh and cos/sin, and the growth rate sqrt(-E)."""

import argparse
import math

import numpy as np

from quasiloc import GOLDEN, Interval, integrate_transfer, transfer_matrix, zero_potential
from quasiloc.lyapunov import PhaseGrid, finite_lyapunov


def closed_form(E, L):
    if E > 0:
        k = math.sqrt(E)
        return np.array([[math.cos(k * L), math.sin(k * L) / k], [-k * math.sin(k * L), math.cos(k * L)]])
    k = math.sqrt(-E)
    return np.array([[math.cosh(k * L), math.sinh(k * L) / k], [k * math.sinh(k * L), math.cosh(k * L)]])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lengths", type=float, nargs="+", default=[1, 5, 10, 25, 50])
    args = ap.parse_args()
    p = zero_potential()
    print("E      |I|    max relative entry error")
    for E in (-1.0, 1.0):
        for L in args.lengths:
            M = transfer_matrix(integrate_transfer(p, Interval(0, L), [0.0], [GOLDEN], E)).matrix()
            ref = closed_form(E, L)
            print(f"{E:+.1f}  {L:5.1f}  {np.max(np.abs(M - ref)) / np.max(np.abs(ref)):.2e}")
    print("\nL_I at E = -4 (exact limit 2; offset log(5/4)/|I|)")
    for L in (25, 100, 500):
        v = finite_lyapunov(p, Interval(0, L), GOLDEN, -4.0, PhaseGrid(2)).value
        print(f"|I| = {L:4d}  L = {v:.6f}  2 + log(1.25)/|I| = {2 + math.log(1.25) / L:.6f}")


if __name__ == "__main__":
    main()
