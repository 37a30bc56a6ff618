import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quasiloc import DomainError, PositivityError
from quasiloc.errors import ApHypothesisFailure
from quasiloc.lyapunov import (LdtParams, LyapunovEstimate, PhaseGrid, ap_multiscale_lyapunov, avalanche_check,
                               block_matrices, bridge_bound, continuous_discrete_bridge,
                               convergence_rate_diagnostic, eta_lipschitz_check, finite_lyapunov,
                               ldt_deviation_measure, ldt_statistics, phase_log_norms, scale_monotonicity_check,
                               stability_rough_check, subadditivity_table, uniform_upper_check,
                               uniform_upper_sweep)
from quasiloc.potential import cosine_model, zero_potential
from quasiloc.transfer import (Interval, ScaledMatrix2, compose, gronwall_constant, integrate_transfer,
                               transfer_matrix)

G = (5 ** 0.5 - 1) / 2
GRID = PhaseGrid(64)


def free_log_norm(E, L):
    """log of the largest singular value of the constant-coefficient transfer matrix, by SVD."""
    k = math.sqrt(-E)
    M = np.array([[math.cosh(k * L), math.sinh(k * L) / k], [k * math.sinh(k * L), math.cosh(k * L)]])
    return math.log(np.linalg.svd(M, compute_uv=False)[0])


@pytest.fixture(scope="module")
def k3():
    return cosine_model(3)


@pytest.fixture(scope="module")
def k2():
    return cosine_model(2)


# -- PhaseGrid ---------------------------------------------------------------------------


def test_phase_grid_points_and_mask():
    g = PhaseGrid(4, 2, (0.1, 0.0))
    pts = g.points()
    assert pts.shape == (16, 2) and g.size == 16
    assert np.allclose(pts[1], [0.1, 0.25])
    assert np.count_nonzero(g.coarse_mask()) == 4


@pytest.mark.parametrize("n", [0, 1, 3, 7])
def test_phase_grid_rejects_odd_or_small(n):
    with pytest.raises(ValueError):
        PhaseGrid(n)


# -- finite_lyapunov ---------------------------------------------------------------------


def test_free_hyperbolic_growth_rate_closed_form():
    est = finite_lyapunov(zero_potential(), Interval(0, 25), G, -4.0, GRID)
    assert est.value == pytest.approx(free_log_norm(-4.0, 25.0) / 25.0, abs=1e-9)


@pytest.mark.xfail(strict=True, reason="finite-size offset log(5/4)/25 = 8.9e-3 exceeds 1e-3 at |I| = 25")
def test_free_hyperbolic_growth_rate_within_1e3_at_25():
    est = finite_lyapunov(zero_potential(), Interval(0, 25), G, -4.0, GRID)
    assert abs(est.value - 2.0) <= 1e-3


def test_free_hyperbolic_growth_rate_within_1e3_at_500():
    est = finite_lyapunov(zero_potential(), Interval(0, 500), G, -4.0, PhaseGrid(2))
    assert abs(est.value - 2.0) <= 1e-3


def test_free_elliptic_near_zero():
    est = finite_lyapunov(zero_potential(), Interval(0, 25), G, 1.0, GRID)
    assert abs(est.value) <= 2e-2


def test_cosine_grid_refinement(k3):
    I = Interval(0, 30)
    a = finite_lyapunov(k3, I, G, 0.0, PhaseGrid(64))
    b = finite_lyapunov(k3, I, G, 0.0, PhaseGrid(128))
    assert abs(a.value - b.value) <= max(a.spread, b.spread) + 1e-12
    assert a.value > 0.5 and b.value > 0.5


def test_value_not_below_minus_spread(k3):
    for E in (-2.0, 0.0, 3.0, 10.0):
        est = finite_lyapunov(k3, Interval(0, 10), G, E, PhaseGrid(32))
        assert est.value >= -est.spread


def test_grid_offset_invariance(k3):
    I = Interval(0, 20)
    a = finite_lyapunov(k3, I, G, 0.0, PhaseGrid(64))
    b = finite_lyapunov(k3, I, G, 0.0, PhaseGrid(64, 1, (0.37,)))
    assert abs(a.value - b.value) <= 2 * max(a.spread, b.spread) + 1e-12


def test_eta_outside_strip_rejected(k2):
    with pytest.raises(DomainError):
        finite_lyapunov(k2, Interval(0, 5), G, 0.0, GRID, eta=[k2.strip_rho])


def test_estimate_json_round_trip(k3):
    est = finite_lyapunov(k3, Interval(0, 5), G, 0.5, PhaseGrid(8))
    assert LyapunovEstimate.from_json(est.to_json()) == est


def test_deterministic_bitwise(k3):
    a = finite_lyapunov(k3, Interval(0, 7), G, 0.0, PhaseGrid(16)).value
    b = finite_lyapunov(k3, Interval(0, 7), G, 0.0, PhaseGrid(16)).value
    assert a == b


# -- subadditivity -----------------------------------------------------------------------


def test_subadditivity_free_exact():
    tab = subadditivity_table(zero_potential(), G, -1.0, 12, PhaseGrid(4))
    assert all(abs(L - 1.0) <= 1e-6 for _, L in tab)
    assert tab.violations == []


def test_subadditivity_cosine(k3):
    tab = subadditivity_table(k3, G, 0.0, 30, PhaseGrid(32))
    assert tab.violations == []
    L = dict(tab.rows)
    assert L[30] <= L[1] + 2 * tab.spreads[0]


def test_subadditivity_matches_direct(k3):
    tab = dict(subadditivity_table(k3, G, 0.0, 6, PhaseGrid(16)).rows)
    direct = finite_lyapunov(k3, Interval(0, 6), G, 0.0, PhaseGrid(16)).value
    assert tab[6] == pytest.approx(direct, abs=1e-8)


def test_subadditivity_rejects_small():
    with pytest.raises(ValueError):
        subadditivity_table(zero_potential(), G, -1.0, 1, GRID)


# -- continuous/discrete bridge ----------------------------------------------------------


def test_bridge_integer_endpoints_exact(k2):
    assert continuous_discrete_bridge(k2, Interval(0, 12), G, 0.0, PhaseGrid(16)) == 0.0


def test_bridge_fractional_within_bound(k2):
    I = Interval(0.3, 25.8)
    diff = continuous_discrete_bridge(k2, I, G, 0.0, PhaseGrid(32))
    C = gronwall_constant(k2, 0.0)
    assert diff <= bridge_bound(C, I)
    assert bridge_bound(C, I) == pytest.approx(C * 2.5 / 25.5)


def test_bridge_free_window_independent():
    assert continuous_discrete_bridge(zero_potential(), Interval(0, 10.5), G, -1.0, PhaseGrid(4)) <= 1e-6


def test_bridge_rejects_short(k2):
    with pytest.raises(ValueError):
        continuous_discrete_bridge(k2, Interval(0, 1.5), G, 0.0, GRID)


# -- Avalanche Principle -----------------------------------------------------------------


def _sm(A):
    return ScaledMatrix2.from_matrix(np.asarray(A, dtype=float))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 5), st.floats(-3, 3))
def test_avalanche_two_matrices_exact(a, b, s, c):
    A1 = _sm([[s, a], [0, 1 / s]])
    A2 = _sm([[1, 0], [b + c, 1]])
    assert avalanche_check([A1, A2], mu=2.0).residual == 0.0


def test_avalanche_diagonal():
    mu = math.exp(10)
    rep = avalanche_check([_sm([[mu, 0], [0, 1 / mu]])] * 5, mu=mu)
    assert rep.hypotheses_ok
    assert rep.residual <= 5 * 5 / mu


def test_avalanche_log_mu_beyond_float():
    A = ScaledMatrix2(np.array([[1.0, 0.0], [0.0, 0.0]]), 800.0)
    rep = avalanche_check([A, A, A], log_mu=800.0)
    assert rep.mu == math.inf and rep.bound == 0.0 and rep.residual == pytest.approx(0.0, abs=1e-9)


def test_avalanche_cosine_unit_blocks(k3):
    I = Interval(0, 40)
    theta = np.array([[0.2]])
    units, logs = block_matrices(k3, I, theta, [G], 0.0, 1.0)
    mats = [ScaledMatrix2(units[j, 0], logs[j, 0]) for j in range(units.shape[0])]
    gamma = finite_lyapunov(k3, I, G, 0.0, PhaseGrid(32)).value
    rep = avalanche_check(mats, log_mu=gamma * 1.0 / 2)
    assert rep.n == 40
    # Residual recomputed with the product from one integration over all of I.
    full = transfer_matrix(integrate_transfer(k3, I, [0.2], [G], 0.0)).log_norm()
    norms = [M.log_norm() for M in mats]
    pairs = [compose(mats[j + 1], mats[j]).log_norm() for j in range(39)]
    residual_full = abs(full + math.fsum(norms[1:-1]) - math.fsum(pairs))
    assert residual_full == pytest.approx(rep.residual, abs=1e-6)
    assert rep.residual <= 100 * rep.n / rep.mu


def test_avalanche_rejects_single():
    with pytest.raises(ValueError):
        avalanche_check([_sm(np.eye(2))], mu=2.0)


def test_ap_multiscale_free():
    v = ap_multiscale_lyapunov(zero_potential(), Interval(0, 50), G, -1.0, 5.0, PhaseGrid(4))
    assert abs(v - 1.0) <= 1e-4


def test_ap_multiscale_cosine_matches_direct(k3):
    I = Interval(0, 64)
    ap = ap_multiscale_lyapunov(k3, I, G, 0.0, 8.0, PhaseGrid(32))
    direct = finite_lyapunov(k3, I, G, 0.0, PhaseGrid(32)).value
    assert abs(ap - direct) <= 3 * math.log(64) / 64


def test_ap_multiscale_rejects_single_block(k3):
    with pytest.raises(ValueError):
        ap_multiscale_lyapunov(k3, Interval(0, 20), G, 0.0, 20.0, GRID)


def test_ap_multiscale_hypothesis_failure():
    with pytest.raises(ApHypothesisFailure):
        ap_multiscale_lyapunov(zero_potential(), Interval(0, 30), G, 1.0, 2.0, PhaseGrid(4))


# -- large deviations --------------------------------------------------------------------


def test_ldt_free_zero():
    assert ldt_deviation_measure(zero_potential(), Interval(0, 20), G, -1.0, LdtParams(0.5)) == 0.0


def test_ldt_huge_epsilon_zero(k3):
    assert ldt_deviation_measure(k3, Interval(0, 20), G, 0.0, LdtParams(1e3, sample_count=256)) == 0.0


def test_ldt_non_increasing(k3):
    params = LdtParams(0.5, 0.25, 512)
    m = [ldt_deviation_measure(k3, Interval(0, n), G, 0.0, params) for n in (20, 40, 80)]
    assert all(0.0 <= x <= 1.0 for x in m)
    assert m[0] >= m[1] >= m[2]


def test_ldt_small_epsilon_nonzero_measure(k3):
    res = ldt_statistics(k3, Interval(0, 20), G, 0.0, LdtParams(1e-3, 0.25, 256))
    assert 0.0 < res.measure <= 1.0
    assert len(res.deviation_set) == round(res.measure * 256)


def test_ldt_rejects_small_sample(k3):
    with pytest.raises(ValueError):
        ldt_deviation_measure(k3, Interval(0, 5), G, 0.0, LdtParams(0.5, sample_count=50))


@pytest.mark.parametrize("kw", [dict(epsilon=0.0), dict(epsilon=1.0, sigma=1.0), dict(epsilon=1.0, sample_count=0)])
def test_ldt_params_validation(kw):
    with pytest.raises(ValueError):
        LdtParams(**kw)


# -- uniform upper bound -----------------------------------------------------------------


def test_uniform_upper_free():
    r = uniform_upper_check(zero_potential(), Interval(0, 20), G, -1.0, PhaseGrid(8), C_fit=1.0)
    assert abs(r.sup_dev) <= 1e-9 and r.ok


def test_uniform_upper_positivity_error():
    with pytest.raises(PositivityError):
        uniform_upper_check(zero_potential(), Interval(0, 20), G, 9.0, PhaseGrid(8))


def _sup_devs(k3, lengths=(20, 40, 80)):
    return [uniform_upper_check(k3, Interval(0, n), G, 0.0, PhaseGrid(64)).sup_dev for n in lengths]


@pytest.mark.xfail(strict=True, reason="sup_dev fluctuates at O(1) (0.23, 0.70, 0.34), so sup_dev/|I| is not monotone")
def test_uniform_upper_ratio_strictly_decreasing(k3):
    s = _sup_devs(k3)
    r = [v / n for v, n in zip(s, (20, 40, 80))]
    assert r[0] > r[1] > r[2]


@pytest.mark.xfail(strict=True, reason="C_fit from |I| = 20 lands on a low fluctuation of sup_dev; |I| = 40 exceeds it")
def test_uniform_upper_calibrated_at_20(k3):
    s = _sup_devs(k3)
    C_fit = max(s[0], 0.0) / 20 ** 0.75
    assert all(v <= C_fit * n ** 0.75 + 1e-9 * n for v, n in zip(s, (20, 40, 80)))


def test_uniform_upper_sup_dev_sublinear(k3):
    s = _sup_devs(k3, (10, 20, 40, 80, 160))
    assert max(s) <= 1.0
    assert s[-1] / 160 < s[0] / 10


def test_uniform_upper_sweep_from_10(k3):
    rows = uniform_upper_sweep(k3, (10, 20, 40, 80, 160), G, 0.0, PhaseGrid(64))
    assert all(r.ok for r in rows)


# -- eta Lipschitz -----------------------------------------------------------------------


def test_eta_lipschitz_free():
    assert eta_lipschitz_check(zero_potential(), Interval(0, 10), G, -1.0, [0.0, 0.01, 0.02], PhaseGrid(8)) == 0.0


def test_eta_lipschitz_rejects_equal(k2):
    with pytest.raises(ValueError):
        eta_lipschitz_check(k2, Interval(0, 10), G, 0.0, [0.01, 0.01], GRID)


def test_eta_lipschitz_rejects_outside_strip(k2):
    with pytest.raises(DomainError):
        eta_lipschitz_check(k2, Interval(0, 10), G, 0.0, [0.0, k2.strip_rho], GRID)


def _eta_ratios(k2):
    return [eta_lipschitz_check(k2, Interval(0, n), G, 0.0, [0.0, 0.01, 0.02], PhaseGrid(64))
            for n in (10, 20, 40)]


@pytest.mark.xfail(strict=True, reason="the difference quotient decays roughly like 1/|I| here")
def test_eta_lipschitz_within_factor_two(k2):
    r = _eta_ratios(k2)
    assert max(r) <= 2 * min(r)


def test_eta_lipschitz_scale_independent_bound(k2):
    r = _eta_ratios(k2)
    assert max(r) <= 2 * r[0]
    assert all(np.isfinite(r))


# -- stability ---------------------------------------------------------------------------


def test_stability_zero_perturbation(k2):
    r = stability_rough_check(k2, Interval(0, 5), (0.2, G, 0.0), (0.2, G, 0.0))
    assert r.lhs == 0.0 and r.ok


def test_stability_tiny_energy_shift(k2):
    r = stability_rough_check(k2, Interval(0, 5), (0.2, G, 0.0), (0.2, G, 1e-12))
    assert r.lhs <= r.rhs and r.ok


def test_stability_conclusive_short_interval(k2):
    r = stability_rough_check(k2, Interval(0, 1), (0.2, G, 0.0), (0.2, G, 1e-9))
    assert r.conclusive and r.lhs <= r.rhs


def test_stability_large_perturbation_inconclusive(k2):
    r = stability_rough_check(k2, Interval(0, 5), (0.2, G, 0.0), (0.2, G, 1.0))
    assert r.rhs >= 0.1 and not r.conclusive and r.ok


def test_stability_complex_energy(k2):
    r = stability_rough_check(k2, Interval(0, 1), (0.2, G, 0.0), (0.2, G, 1e-10j))
    assert r.conclusive and r.lhs <= r.rhs


# -- diagnostics -------------------------------------------------------------------------


def test_convergence_rate_bounded(k3):
    rows = convergence_rate_diagnostic(k3, G, 0.0, (10, 20, 40), PhaseGrid(32))
    vals = [v for _, v in rows]
    assert all(np.isfinite(vals)) and max(vals) <= 10.0


@pytest.mark.parametrize("J,I", [((0, 10), (0, 40)), ((5, 15), (0, 40)), ((0, 20), (0, 60))])
def test_scale_monotonicity(k3, J, I):
    LJ, LI, lower, ok = scale_monotonicity_check(k3, Interval(*J), Interval(*I), G, 0.0, PhaseGrid(32))
    assert ok and LJ >= lower


def test_scale_monotonicity_rejects_longer(k3):
    with pytest.raises(ValueError):
        scale_monotonicity_check(k3, Interval(0, 20), Interval(0, 10), G, 0.0, GRID)
