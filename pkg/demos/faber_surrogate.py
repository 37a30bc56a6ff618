"""Faber polynomials, product-domain approximation, and a polynomial surrogate of a transfer matrix."""

import numpy as np

from quasiloc import GOLDEN, Interval, cosine_model
from quasiloc.faber import (FaberDomain, approximate_on_product, faber_polynomial, sampled_error,
                            surrogate_sublevel_measure, transfer_surrogate)
from quasiloc.lyapunov import PhaseGrid, finite_lyapunov


def main():
    for n in range(5):
        print(f"Phi_{n} on [-1, 1]: {faber_polynomial(1.0, n).tolist()}")

    dom = FaberDomain((1.0, 1.0), 1.5)
    f = lambda X: np.exp(X[:, 0] + X[:, 1])  # noqa: E731
    pts = np.random.default_rng(0).uniform(-1, 1, (20000, 2))
    print("\nexp(z1 + z2) on [-1, 1]^2, R = 1.5")
    for N in (4, 8, 16, 24):
        s = approximate_on_product(f, dom, N)
        print(f"N = {N:2d}  observed {sampled_error(s, f, pts):.2e}  certificate {s.error_cert:.2e}")

    p, I = cosine_model(3), Interval(0, 2)
    s = transfer_surrogate(p, I, 0.0, (-0.2, 0.2), N=64, caps=(48, 2, 4))
    print(f"\ntransfer surrogate N = {s.N}: log-norm deviation {s.deviation:.3g}, HS part {s.hs_deviation:.1e}")
    L = finite_lyapunov(p, I, GOLDEN, 0.0, PhaseGrid(64)).value
    for H in (-1.0, 0.0, 0.5, 1.0, 2 ** 0.75):
        r = surrogate_sublevel_measure(s, H, L, I.length, samples=4000)
        print(f"H = {H:5.2f}  |S(H)| = {r.measure:.4f}  |B(H)| = {r.measure_B:.4f}  |B(H/2)| = {r.measure_B_half:.4f}"
              f"  B in S: {r.lower_ok}  S in B(H/2): {r.upper_ok} (expected: {r.upper_expected})")


if __name__ == "__main__":
    main()
