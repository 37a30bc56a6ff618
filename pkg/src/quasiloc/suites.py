"""Cross-module acceptance suites, one function per criterion.

Each suite compares the library against an independent reference (closed
forms, direct enumeration, dense sampling, contour quadrature) and returns a
``CriterionResult``. ``run_suite`` prints one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import arithmetic, faber, green, lyapunov
from .errors import HypothesisFailure, NoSignChange, VerificationFailure, WronskianNearZero
from .potential import cosine_model, zero_potential
from .transfer import (DEFAULT_CONFIG, Interval, ScaledMatrix2, compose, gronwall_constant, integrate_transfer,
                       relative_difference, shift_covariance_check, transfer_matrix)

GOLDEN = (5 ** 0.5 - 1) / 2


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float
    limit: float

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] criterion {self.number}: {self.title} ({self.seconds:.1f}s / {self.limit:.0f}s) {self.detail}"


def _timed(number, title, limit, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    if dt >= limit:
        ok, detail = False, detail + f"; runtime {dt:.1f}s exceeds {limit:.0f}s"
    return CriterionResult(number, title, bool(ok), detail, dt, limit)


def _free_matrix(E, length):
    """Closed-form transfer matrix of -y'' = E y over a length."""
    if E > 0:
        k = math.sqrt(E)
        return np.array([[math.cos(k * length), math.sin(k * length) / k],
                         [-k * math.sin(k * length), math.cos(k * length)]])
    k = math.sqrt(-E)
    return np.array([[math.cosh(k * length), math.sinh(k * length) / k],
                     [k * math.sinh(k * length), math.cosh(k * length)]])


# -- 1 --------------------------------------------------------------------------------


def criterion_1():
    """Free-particle closed forms and L = 2 at E = -4."""
    p = zero_potential()
    worst = 0.0
    for E in (1.0, -1.0):
        for b in (0.5, 1.0, math.pi / 2, 7.3, 20.0, 50.0):
            M = transfer_matrix(integrate_transfer(p, Interval(0, b), [0.0], [GOLDEN], E, grid=[0.0, b]))
            worst = max(worst, relative_difference(ScaledMatrix2.from_matrix(_free_matrix(E, b)), M))
    # Finite-interval value is 2 + log(5/4)/|I| + O(e^{-4|I|}); |I| = 500 puts it within 1e-3 of 2.
    I = Interval(0, 500)
    L = lyapunov.finite_lyapunov(p, I, GOLDEN, -4.0, lyapunov.PhaseGrid(4)).value
    ok = worst <= 1e-8 and abs(L - 2.0) <= 1e-3
    return ok, f"max rel. matrix error {worst:.2e} (tol 1e-8); L_[0,500](E=-4) = {L:.6f} (2 +- 1e-3)"


# -- 2 --------------------------------------------------------------------------------


def _random_config(rng):
    K = float(rng.uniform(0.2, 4.0))
    a = float(rng.uniform(-20, 20))
    length = float(rng.uniform(1.0, 40.0))
    return cosine_model(K), Interval(a, a + length), float(rng.uniform()), float(rng.uniform(0.1, 0.9)), \
        float(rng.uniform(-3, 5))


def criterion_2(count=200, seed=2024):
    rng = np.random.default_rng(seed)
    worst = {"det": 0.0, "semigroup": 0.0, "shift": 0.0, "almost_inv": -math.inf, "wronskian": 0.0}
    skipped = 0
    for _ in range(count):
        p, I, th, om, E = _random_config(rng)
        c = float(rng.uniform(I.a + 0.1 * I.length, I.b - 0.1 * I.length))
        sol = integrate_transfer(p, I, [th], [om], E, grid=[I.a, c, I.b])
        M = transfer_matrix(sol)
        worst["det"] = max(worst["det"], M.det_drift())
        M1 = sol.matrix_at(1)
        M2 = transfer_matrix(integrate_transfer(p, Interval(c, I.b), [th], [om], E, grid=[c, I.b]))
        worst["semigroup"] = max(worst["semigroup"], relative_difference(M, compose(M2, M1)))
        n = int(rng.integers(-5, 6))
        worst["shift"] = max(worst["shift"], shift_covariance_check(p, I, [th], [om], E, n))
        Ms = transfer_matrix(integrate_transfer(p, I, [(th + om) % 1.0], [om], E, grid=[I.a, I.b]))
        C_num = max(gronwall_constant(p, E, Interval(I.a, I.b + 1), [th], [om]), 1.0)
        worst["almost_inv"] = max(worst["almost_inv"], abs(M.log_norm() - Ms.log_norm()) - C_num)
        try:
            g = green.build_green(p, I, [th], [om], E)
        except WronskianNearZero:
            skipped += 1
            continue
        along, ends = green.wronskian_triple_residual(g)
        worst["wronskian"] = max(worst["wronskian"], along, ends)
    ok = (worst["det"] <= 1e-8 and worst["semigroup"] <= 1e-7 and worst["shift"] <= 1e-7
          and worst["almost_inv"] <= 0 and worst["wronskian"] <= 1e-7)
    return ok, (f"det {worst['det']:.1e}, semigroup {worst['semigroup']:.1e}, shift {worst['shift']:.1e}, "
                f"max(|dlog||M|| | - C_num) {worst['almost_inv']:.2f}, wronskian {worst['wronskian']:.1e}, "
                f"near-eigenvalue skips {skipped}")


# -- 3 --------------------------------------------------------------------------------


def _rotation(a):
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def random_ap_sequence(rng, n, log_mu):
    """Unimodular A_j = R(a_j) diag(s_j, 1/s_j) R(-b_j) with log s_j in [log_mu, log_mu + 2].

    Each input direction b_{j+1} lies within 1.2 rad of the previous output
    direction a_j, so consecutive pairs lose at most -log cos 1.2 < 1.1 and
    both hypotheses hold once log_mu > 2.2 and log_mu > log n.
    """
    mats = []
    prev_out = float(rng.uniform(0, math.pi))
    for _ in range(n):
        ls = log_mu + float(rng.uniform(0, 2))
        b = prev_out + float(rng.uniform(-1.2, 1.2))
        out = float(rng.uniform(0, math.pi))
        unit = _rotation(out) @ np.diag([1.0, math.exp(-2 * ls)]) @ _rotation(-b)
        mats.append(ScaledMatrix2.from_matrix(unit, ls))
        prev_out = out
    return mats


def criterion_3(per_n=20, seed=7):
    rng = np.random.default_rng(seed)
    # n = 2 is exact by construction.
    A = random_ap_sequence(rng, 2, 5.0)
    r2 = lyapunov.avalanche_check(A, log_mu=5.0).residual
    C_by_n = {}
    used = 0
    for n in (3, 5, 10, 20, 40):
        vals = []
        while len(vals) < per_n:
            log_mu = float(rng.uniform(6.0, 10.0))
            mats = random_ap_sequence(rng, n, log_mu)
            rep = lyapunov.avalanche_check(mats, log_mu=log_mu)
            if not rep.hypotheses_ok:
                continue
            used += 1
            vals.append(rep.residual / rep.bound)
        C_by_n[n] = max(vals)
    spread = max(C_by_n.values()) / max(min(C_by_n.values()), 1e-300)
    p = cosine_model(3)
    I = Interval(0, 64)
    grid = lyapunov.PhaseGrid(64)
    ap = lyapunov.ap_multiscale_lyapunov(p, I, GOLDEN, 0.0, 8.0, grid)
    direct = lyapunov.finite_lyapunov(p, I, GOLDEN, 0.0, grid).value
    tol = 3 * math.log(I.length) / I.length
    ok = r2 == 0.0 and spread <= 10.0 and abs(ap - direct) <= tol
    Cs = ", ".join(f"{n}:{c:.2e}" for n, c in C_by_n.items())
    return ok, (f"n=2 residual {r2}; measured C by n {{{Cs}}} spread x{spread:.1f} (<= 10) over {used} sequences; "
                f"|AP - direct| = {abs(ap - direct):.2e} (tol {tol:.3f})")


# -- 4 --------------------------------------------------------------------------------


def criterion_4():
    p = cosine_model(3)
    params = lyapunov.LdtParams(0.5, 0.25, 1024, 0)
    ms = [lyapunov.ldt_deviation_measure(p, Interval(0, n), GOLDEN, 0.0, params) for n in (20, 40, 80)]
    ok = ms[0] >= ms[1] >= ms[2] and ms[2] <= 0.2
    return ok, f"measures at |I|=20,40,80: {ms} over 1024 Sobol phases"


# -- 5 --------------------------------------------------------------------------------


def criterion_5(count=50, seed=5):
    p0 = zero_potential()
    g = green.build_green(p0, Interval(0, 1), [0.0], [GOLDEN], -1.0)
    val, _ = green.green_eval(g, 0.5, 0.5)
    exact = -math.sinh(0.5) ** 2 / math.sinh(1.0)
    closed = abs(val - exact)
    rng = np.random.default_rng(seed)
    worst_poisson = 0.0
    for _ in range(count):
        p, I, th, om, E = _random_config(rng)
        I = Interval(I.a, I.a + min(I.length, 20.0))
        grid = np.linspace(I.a, I.b, 201)
        sol = integrate_transfer(p, I, [th], [om], E, grid=grid)
        al, be = rng.normal(size=2)
        y = (al * sol.u + be * sol.v) * np.exp(sol.log_scale - sol.log_scale[-1])
        try:
            worst_poisson = max(worst_poisson, green.poisson_identity_check(p, I, [th], [om], E, (grid, y)))
        except WronskianNearZero:
            continue
    # Decay windows: every successful return must pass its own verification.
    p3 = cosine_model(3)
    I = Interval(0, 30)
    L_ref = lyapunov.finite_lyapunov(p3, I, GOLDEN, 0.0, lyapunov.PhaseGrid(64)).value
    found, verify_fail = 0, 0
    for th in np.linspace(0, 1, 40, endpoint=False):
        try:
            green.decay_window_search(p3, I, [th], [GOLDEN], 0.0, L_ref, 2.0, 0.5)
            found += 1
        except VerificationFailure:
            verify_fail += 1
        except (HypothesisFailure, WronskianNearZero):
            pass
    ok = closed <= 1e-9 and worst_poisson <= 1e-6 and verify_fail == 0 and found > 0
    return ok, (f"|G(1/2,1/2) - closed form| = {closed:.1e}; Poisson residual {worst_poisson:.1e} over {count}; "
                f"decay windows verified {found}/40, verification failures {verify_fail}")


# -- 6 --------------------------------------------------------------------------------


def criterion_6(E_lo=-6.0, E_hi=-3.6, step=0.01, max_eigs=4):
    """Localize every Dirichlet eigenvalue found by a sign scan of [E_lo, E_hi] (up to ``max_eigs``)."""
    p = cosine_model(4)
    box = Interval(-60, 60)
    th = [0.3]
    Es = np.arange(E_lo, E_hi + step / 2, step)
    signs = [green._dirichlet_sign(p, box, th, [GOLDEN], E, DEFAULT_CONFIG) for E in Es]
    brackets = [(Es[i], Es[i + 1]) for i in range(len(Es) - 1) if signs[i] * signs[i + 1] < 0][:max_eigs]
    rows, ok = [], bool(brackets)
    grid = lyapunov.PhaseGrid(64)
    for br in brackets:
        try:
            loc = green.localize_eigenfunction(p, box, th, [GOLDEN], br)
        except NoSignChange:
            ok = False
            continue
        L = lyapunov.finite_lyapunov(p, box, GOLDEN, loc.energy, grid).value
        ratio = loc.decay_rate / L
        ok &= ratio > 0.5 and abs(ratio - 1) <= 0.25
        rows.append(f"E={loc.energy:.5f} rate={loc.decay_rate:.3f} L={L:.3f} ratio={ratio:.3f}")
    return ok, "; ".join(rows) or "no eigenvalue found"


# -- 7 --------------------------------------------------------------------------------


def contour_faber(L, n, R=2.0, q=512):
    """Monomial coefficients of Phi_n on [-L, L] from the Cauchy-type contour integral (independent oracle).

    Phi_n(z) = (1 / 2 pi i) int_{|w|=R} w^n psi'(w) / (psi(w) - z) dw with
    psi(w) = (L/2)(w + 1/w), evaluated by the trapezoid rule at 2n + 3 real
    points and fitted by least squares.
    """
    w = R * np.exp(2j * np.pi * np.arange(q) / q)
    psi = 0.5 * L * (w + 1 / w)
    dpsi = 0.5 * L * (1 - 1 / w ** 2)
    z = np.linspace(-L, L, 2 * n + 3)
    vals = np.mean((w ** n * dpsi * w)[None, :] / (psi[None, :] - z[:, None]), axis=1).real
    V = np.vander(z, n + 1, increasing=True)
    c, *_ = np.linalg.lstsq(V, vals, rcond=None)
    return c


def criterion_7():
    phi2 = faber.faber_polynomial(1.0, 2)
    oracle = contour_faber(1.0, 2)
    e_phi = max(float(np.max(np.abs(np.asarray(phi2) - oracle))), float(np.max(np.abs(oracle - [-2, 0, 4]))))
    dom = faber.FaberDomain((1.0,), 2.0)
    worst_bi = 0.0
    for m in range(11):
        coeffs = faber.faber_polynomial(1.0, m)
        f = lambda X, c=coeffs: np.polynomial.polynomial.polyval(X[:, 0], c)  # noqa: E731
        a = faber.faber_coefficients(f, dom, 12)
        for (k,), v in a.items():
            worst_bi = max(worst_bi, abs(v - (1.0 if k == m else 0.0)))
    dom2 = faber.FaberDomain((1.0, 1.0), 1.5)
    s = faber.approximate_on_product(lambda X: np.exp(X[:, 0] + X[:, 1]), dom2, 24)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(20000, 2))
    observed = faber.sampled_error(s, lambda X: np.exp(X[:, 0] + X[:, 1]), pts)
    sur = faber.transfer_surrogate(cosine_model(2), Interval(0, 6), 1.0, (-0.2, 0.2), check=False)
    ok = e_phi <= 1e-10 and worst_bi <= 1e-10 and observed <= s.error_cert and sur.deviation <= 1.0
    return ok, (f"Phi_2 vs contour oracle {e_phi:.1e}; biorthogonality {worst_bi:.1e}; exp product error "
                f"{observed:.1e} <= cert {s.error_cert:.1e}; surrogate N={sur.N} deviation {sur.deviation:.3f} "
                f"(HS part {sur.hs_deviation:.1e})")


# -- 8 --------------------------------------------------------------------------------


def criterion_8():
    dc_ok, _, margin = arithmetic.dc_membership(GOLDEN, arithmetic.DiophantineSpec(0.2, 2.0), 100)
    N = np.arange(1, 100_001)
    x = arithmetic.orbit_phases(GOLDEN, 0.0, N)[:, 0]
    worst = 0.0
    for a, b in ((0.0, 0.5), (0.1, 0.37), (0.25, 0.9), (0.0, 0.618)):
        cnt = np.cumsum((x >= a) & (x < b))
        err = np.abs(cnt - N * (b - a))
        worst = max(worst, float(np.max(err[1:] / (3 * np.log(N[1:])))))
    # The |I| = 20 deviation set sampled on a uniform phase grid.
    p = cosine_model(3)
    I = Interval(0, 20)
    from .lab import ldt_membership

    member, measure = ldt_membership(p, I, GOLDEN, 0.0, 0.5, 0.25, 4096, DEFAULT_CONFIG)
    rep = arithmetic.orbit_hit_count(GOLDEN, 0.3, 10_000, member, 0.1)
    res = arithmetic.resonance_scan(zero_potential(), Interval(0, 10), Interval(0, 30), 0.3, GOLDEN,
                                    np.linspace(-3.0, -0.5, 8), (1, 500), 0.1)
    ok = dc_ok and worst <= 1.0 and rep.passes and len(res.hits) == 0
    return ok, (f"golden DC margin {margin:.3f}; max discrepancy/(3 log N) {worst:.3f} for 2 <= N <= 1e5; "
                f"orbit hits {rep.hits} < {10_000 ** 0.9:.0f} (set measure {measure:.4f}); "
                f"free-particle double resonances {len(res.hits)}")


CRITERIA = {
    1: ("free-particle closed forms", 5, criterion_1),
    2: ("structural identities", 120, criterion_2),
    3: ("avalanche principle", 120, criterion_3),
    4: ("LDT trend", 600, criterion_4),
    5: ("Green/Poisson", 180, criterion_5),
    6: ("localization demo", 300, criterion_6),
    7: ("Faber suite", 300, criterion_7),
    8: ("arithmetic suite", 300, criterion_8),
}


def run_criterion(n):
    title, limit, fn = CRITERIA[n]
    return _timed(n, title, limit, fn)


def run_suite(which=None, echo=True):
    out = []
    for n in which or sorted(CRITERIA):
        r = run_criterion(n)
        if echo:
            print(r.line(), flush=True)
        out.append(r)
    return out
