"""Dirichlet eigenfunctions of the cosine model on a long box decay at the Lyapunov rate."""

import argparse
from pathlib import Path

import numpy as np

from quasiloc import GOLDEN, Interval, cosine_model, integrate_transfer
from quasiloc.green import localize_eigenfunction
from quasiloc.lab import emit_plot, write_csv
from quasiloc.lyapunov import PhaseGrid, finite_lyapunov


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=float, default=4.0)
    ap.add_argument("--half-width", type=float, default=60.0)
    ap.add_argument("--theta", type=float, default=0.3)
    ap.add_argument("--scan", type=float, nargs=2, default=(-6.0, -3.6))
    ap.add_argument("--output-dir", default="demo_output")
    args = ap.parse_args()
    p = cosine_model(args.K)
    box = Interval(-args.half_width, args.half_width)
    Es = np.arange(args.scan[0], args.scan[1], 0.01)
    s = [np.sign(integrate_transfer(p, box, [args.theta], [GOLDEN], E, grid=[box.a, box.b]).v[-1]) for E in Es]
    brackets = [(Es[i], Es[i + 1]) for i in range(len(Es) - 1) if s[i] * s[i + 1] < 0]
    print(f"{len(brackets)} Dirichlet eigenvalues in [{args.scan[0]}, {args.scan[1]}]")
    for k, br in enumerate(brackets[:4]):
        loc = localize_eigenfunction(p, box, [args.theta], [GOLDEN], br)
        L = finite_lyapunov(p, box, GOLDEN, loc.energy, PhaseGrid(64)).value
        print(f"E* = {loc.energy:.6f}  centre {loc.center:7.2f}  decay {loc.decay_rate:.3f}  L = {L:.3f}  "
              f"ratio {loc.decay_rate / L:.3f}")
        csv = write_csv(Path(args.output_dir) / f"profile_{k}.csv", ("t", "log_abs_y"), zip(loc.t, loc.log_abs_y))
        emit_plot(csv, "profile", fit=(loc.center, loc.intercept, loc.decay_rate))


if __name__ == "__main__":
    main()
