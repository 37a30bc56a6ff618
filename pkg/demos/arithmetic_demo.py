"""Diophantine checks, orbit discrepancy, orbit-hit counts and a single-frequency resonance scan."""

import math

import numpy as np

from quasiloc import GOLDEN, Interval, cosine_model
from quasiloc.arithmetic import (DiophantineSpec, dc_membership, discrepancy_count, orbit_hit_count,
                                 resonance_scan)
from quasiloc.lab import ldt_membership
from quasiloc.lyapunov import PhaseGrid
from quasiloc.transfer import DEFAULT_CONFIG


def main():
    for name, w in (("golden", GOLDEN), ("sqrt2 - 1", 2 ** 0.5 - 1), ("1/3", 1 / 3), ("355/113 - 3", 355 / 113 - 3)):
        ok, k, margin = dc_membership(w, DiophantineSpec(0.2, 2.0), 100)
        print(f"DC(c=0.2, A=2, t=100) {name:12s} ok={ok!s:5s} worst k={int(k[0]):4d} margin={margin:.3f}")

    print("\ngolden-mean discrepancy on [0, 1/2)")
    for N in (10, 100, 1000, 10_000, 100_000):
        count, err = discrepancy_count(GOLDEN, N, [(0.0, 0.5)])
        print(f"N = {N:6d}  count {count:6d}  error {err:6.2f}  3 log N = {3 * math.log(N):6.2f}")

    p, I = cosine_model(3), Interval(0, 20)
    member, measure = ldt_membership(p, I, GOLDEN, 0.0, 0.5, 0.25, 4096, DEFAULT_CONFIG)
    r = orbit_hit_count(GOLDEN, 0.0, 10_000, member, 0.1)
    print(f"\nLDT deviation set at |I| = 20: measure {measure:.4f}; orbit hits {r.hits} vs N^0.9 = {1e4 ** 0.9:.0f}")

    rep = resonance_scan(p, Interval(0, 10), Interval(0, 30), 0.2, GOLDEN, np.linspace(-2, 2, 16), (1, 500), 0.1,
                         grid=PhaseGrid(32))
    print(f"resonance scan ({rep.label}): fraction {rep.fraction:.3f}, hits {len(rep.hits)}, "
          f"skipped energies {int(rep.skipped.sum())}")


if __name__ == "__main__":
    main()
