"""Finite-scale Lyapunov exponents and the statistics built on them.

    L_I(eta, omega, E) = 1/|I| * integral over T^d of log ||M_I(theta + i eta)|| d theta

The integral is discretised on a shifted uniform lattice (``PhaseGrid``).
Sums of log-norms use ``math.fsum``, which is exactly rounded and hence
independent of evaluation order and of how the phases were batched.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ApHypothesisFailure, DomainError, PositivityError
from .transfer import (DEFAULT_CONFIG, Interval, batch_log_sigma, compose, gronwall_constant,
                       transfer_matrices)


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform lattice ``(idx / n + offset) mod 1`` on T^d, enumerated lexicographically."""

    points_per_dim: int
    dim: int = 1
    offset: tuple = None

    def __post_init__(self):
        n = int(self.points_per_dim)
        if n < 2 or n % 2:
            raise ValueError("points_per_dim must be an even integer >= 2")
        if int(self.dim) < 1:
            raise ValueError("dim must be positive")
        off = (0.0,) * int(self.dim) if self.offset is None else tuple(float(v) for v in np.atleast_1d(self.offset))
        if len(off) != int(self.dim):
            raise ValueError("offset length must equal dim")
        object.__setattr__(self, "points_per_dim", n)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "offset", off)

    @property
    def size(self):
        return self.points_per_dim ** self.dim

    def points(self):
        n = self.points_per_dim
        idx = np.array(list(itertools.product(range(n), repeat=self.dim)), dtype=float)
        return np.mod(idx / n + np.asarray(self.offset), 1.0)

    def coarse_mask(self):
        """Points that also belong to the half-resolution lattice (even index in every axis)."""
        n = self.points_per_dim
        idx = np.array(list(itertools.product(range(n), repeat=self.dim)))
        return np.all(idx % 2 == 0, axis=1)

    def shifted(self, delta):
        return PhaseGrid(self.points_per_dim, self.dim, tuple(np.asarray(self.offset) + np.asarray(delta)))


@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    interval: Interval
    grid: PhaseGrid
    eta: tuple = (0.0,)
    spread: float = 0.0
    gamma_floor: float = 0.0
    omega: tuple = ()
    energy: complex = 0.0

    def to_json(self):
        d = asdict(self)
        d["interval"] = [self.interval.a, self.interval.b]
        d["grid"] = {"points_per_dim": self.grid.points_per_dim, "dim": self.grid.dim,
                     "offset": list(self.grid.offset)}
        d["eta"] = list(self.eta)
        d["omega"] = list(self.omega)
        e = complex(self.energy)
        d["energy"] = [e.real, e.imag]
        return d

    @classmethod
    def from_json(cls, d):
        g = d["grid"]
        re, im = d["energy"]
        return cls(float(d["value"]), Interval(*d["interval"]),
                   PhaseGrid(g["points_per_dim"], g["dim"], tuple(g["offset"])),
                   tuple(d["eta"]), float(d["spread"]), float(d["gamma_floor"]),
                   tuple(d["omega"]), re if im == 0 else complex(re, im))


@dataclass(frozen=True)
class LdtParams:
    epsilon: float
    sigma: float = 0.25
    sample_count: int = 1024
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if int(self.sample_count) < 1:
            raise ValueError("sample_count must be positive")


@dataclass(frozen=True)
class ApReport:
    n: int
    mu: float
    hypothesis_min_ok: bool
    hypothesis_gap_ok: bool
    residual: float
    bound: float
    log_mu: float = field(default=None, repr=False)

    @property
    def hypotheses_ok(self):
        return self.hypothesis_min_ok and self.hypothesis_gap_ok


# -- helpers ------------------------------------------------------------------------


def _omega(p, omega):
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if w.shape != (p.dim_d,):
        raise ValueError(f"omega must have length {p.dim_d}")
    return w


def _eta(p, eta):
    e = np.zeros(p.dim_d) if eta is None else np.atleast_1d(np.asarray(eta, dtype=float))
    if e.shape != (p.dim_d,):
        raise ValueError(f"eta must have length {p.dim_d}")
    if np.max(np.abs(e)) > 0.5 * p.strip_rho * (1 + 1e-12):
        raise DomainError(f"|eta| = {np.max(np.abs(e)):.3g} exceeds rho/2 = {0.5 * p.strip_rho:.3g}")
    return e


def phase_log_norms(p, I, thetas, omega, E, eta=None, cfg=DEFAULT_CONFIG):
    """log ||M_I(theta + i eta)|| for each row of ``thetas``."""
    eta = _eta(p, eta)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if np.any(eta):
        thetas = thetas + 1j * eta[None, :]
    units, logs = transfer_matrices(p, I, thetas, _omega(p, omega), E, cfg)
    return batch_log_sigma(units, logs)


def _mean(x):
    return math.fsum(x) / len(x)


# -- operations ---------------------------------------------------------------------


def finite_lyapunov(p, I, omega, E, grid, eta=None, cfg=DEFAULT_CONFIG, gamma_floor=0.0):
    """Finite-scale Lyapunov exponent on ``I`` by lattice averaging over phases.

    Parameters
    ----------
    p : AnalyticPotential
    I : Interval
    omega : array_like, shape (d,)
    E : float or complex
    grid : PhaseGrid
    eta : array_like, optional
        Imaginary phase shift; requires ``max|eta| <= rho / 2``.

    Returns
    -------
    LyapunovEstimate
        ``spread`` is half the difference from the estimate on the
        half-resolution sublattice.
    """
    eta_v = _eta(p, eta)
    if grid.dim != p.dim_d:
        raise ValueError("grid dimension must match the potential")
    ln = phase_log_norms(p, I, grid.points(), omega, E, eta_v, cfg)
    value = _mean(ln) / I.length
    coarse = _mean(ln[grid.coarse_mask()]) / I.length
    return LyapunovEstimate(value, I, grid, tuple(eta_v), 0.5 * abs(value - coarse), float(gamma_floor),
                            tuple(_omega(p, omega)), E)


@dataclass(frozen=True)
class SubadditivityTable:
    rows: list
    spreads: list
    violations: list

    def __iter__(self):
        return iter(self.rows)


def subadditivity_table(p, omega, E, n_max, grid, cfg=DEFAULT_CONFIG):
    """L_n on [0, n] for n = 1..n_max and the split pairs violating subadditivity.

    A pair (m, n) violates when (m+n) L_{m+n} > m L_m + n L_n + 2 (m+n) spread_{m+n},
    plus a round-off floor of 1e-12 (m+n) (1 + |L_{m+n}|).
    """
    n_max = int(n_max)
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    omega = _omega(p, omega)
    units, logs = transfer_matrices(p, Interval(0, n_max), grid.points(), omega, E, cfg,
                                    t_out=np.arange(1, n_max + 1, dtype=float))
    ln = batch_log_sigma(units, logs)
    mask = grid.coarse_mask()
    L = {}
    spread = {}
    for n in range(1, n_max + 1):
        L[n] = _mean(ln[n - 1]) / n
        spread[n] = 0.5 * abs(L[n] - _mean(ln[n - 1][mask]) / n)
    violations = []
    for s in range(2, n_max + 1):
        for m in range(1, s // 2 + 1):
            n = s - m
            excess = s * L[s] - (m * L[m] + n * L[n])
            if excess > 2 * s * spread[s] + 1e-12 * s * (1 + abs(L[s])):
                violations.append((m, n, excess))
    return SubadditivityTable([(n, L[n]) for n in L], [spread[n] for n in L], violations)


def continuous_discrete_bridge(p, I, omega, E, grid, cfg=DEFAULT_CONFIG):
    """|L_I - L_[0,n]| with n = round(|I|)."""
    if I.length < 2:
        raise ValueError("interval must have length >= 2")
    n = int(round(I.length))
    L_I = finite_lyapunov(p, I, omega, E, grid, cfg=cfg).value
    L_n = finite_lyapunov(p, Interval(0, n), omega, E, grid, cfg=cfg).value
    return abs(L_I - L_n)


def bridge_bound(C_num, I):
    """C_num (|n - |I|| + 2) / |I| with n = round(|I|)."""
    n = round(I.length)
    return C_num * (abs(n - I.length) + 2) / I.length


def _log_norms_of(mats):
    return np.array([M.log_norm() for M in mats])


def avalanche_check(mats, mu=None, log_mu=None):
    """Evaluate the Avalanche Principle hypotheses and residual for ``A_1..A_n``.

    Parameters
    ----------
    mats : sequence of ScaledMatrix2
        ``A_1, ..., A_n`` in multiplication order (A_1 acts first).
    mu, log_mu : float
        Norm lower bound, given directly or by its log (for mu beyond float range).

    Returns
    -------
    ApReport
        ``residual`` is reported whether or not the hypotheses hold.
    """
    mats = list(mats)
    n = len(mats)
    if n < 2:
        raise ValueError("need at least two matrices")
    if log_mu is None:
        if mu is None or not mu > 0:
            raise ValueError("mu must be positive")
        log_mu = math.log(mu)
    log_mu = float(log_mu)
    mu_val = math.exp(log_mu) if log_mu < 700 else math.inf
    norms = _log_norms_of(mats)
    pairs = [compose(mats[j + 1], mats[j]) for j in range(n - 1)]
    pair_norms = _log_norms_of(pairs)
    prod = mats[0]
    for A in mats[1:]:
        prod = compose(A, prod)
    min_ok = bool(np.min(norms) >= log_mu and log_mu > math.log(n))
    gaps = norms[1:] + norms[:-1] - pair_norms
    gap_ok = bool(np.max(gaps) < 0.5 * log_mu)
    if n == 2:
        # log||A2 A1|| - log||A2 A1||: the single pair term is the product itself.
        residual = 0.0
    else:
        residual = abs(prod.log_norm() + math.fsum(norms[1:-1]) - math.fsum(pair_norms))
    bound = n * math.exp(-log_mu)
    return ApReport(n, mu_val, min_ok, gap_ok, residual, bound, log_mu)


def _block_partition(I, block_len):
    if not block_len >= 1:
        raise ValueError("block length must be at least 1")
    if I.length / block_len < 3:
        raise ValueError("need |I| / block_len >= 3")
    n = max(3, int(round(I.length / block_len)))
    edges = I.a + I.length * np.arange(n + 1) / n
    edges[-1] = I.b
    return edges


def block_matrices(p, I, thetas, omega, E, block_len, cfg=DEFAULT_CONFIG):
    """Transfer matrices of the equal blocks partitioning ``I``; shape (n, B, 2, 2) and (n, B)."""
    edges = _block_partition(I, block_len)
    units, logs = [], []
    for j in range(edges.size - 1):
        u, lg = transfer_matrices(p, Interval(edges[j], edges[j + 1]), thetas, omega, E, cfg)
        units.append(u)
        logs.append(lg)
    return np.stack(units), np.stack(logs)


def ap_expansion(units, logs):
    """AP estimate of log ||A_n ... A_1|| per phase from block matrices ``(n, B, 2, 2)``."""
    pair_units = np.einsum("jbik,jbkl->jbil", units[1:], units[:-1])
    pair_logs = logs[1:] + logs[:-1]
    single = batch_log_sigma(units, logs)
    pair = batch_log_sigma(pair_units, pair_logs)
    estimate = np.sum(pair, axis=0) - np.sum(single[1:-1], axis=0)
    return estimate, single, pair


def ap_multiscale_lyapunov(p, I, omega, E, block_len, grid, cfg=DEFAULT_CONFIG, gamma=None,
                           max_failure_fraction=0.1):
    """Estimate L_I from block and block-pair norms via the Avalanche Principle.

    Parameters
    ----------
    block_len : float
        Target block length; ``I`` is cut into ``round(|I| / block_len)`` equal blocks.
    gamma : float, optional
        When given, mu = exp(gamma * block / 2). Otherwise mu is the smallest
        block norm at each phase.

    Raises
    ------
    ApHypothesisFailure
        If the hypotheses fail on more than ``max_failure_fraction`` of the phases.
    """
    omega = _omega(p, omega)
    units, logs = block_matrices(p, I, grid.points(), omega, E, block_len, cfg)
    n = units.shape[0]
    estimate, single, pair = ap_expansion(units, logs)
    if gamma is None:
        log_mu = np.min(single, axis=0)
    else:
        log_mu = np.full(single.shape[1], gamma * I.length / n / 2)
    min_ok = (np.min(single, axis=0) >= log_mu) & (log_mu > math.log(n))
    gap_ok = np.max(single[1:] + single[:-1] - pair, axis=0) < 0.5 * log_mu
    failed = float(np.mean(~(min_ok & gap_ok)))
    if failed > max_failure_fraction:
        raise ApHypothesisFailure(
            f"AP hypotheses fail on {failed:.1%} of phases with {n} blocks of length {I.length / n:.3g}")
    return _mean(estimate) / I.length


def sample_phases(d, count, seed=0):
    """Scrambled Sobol points on T^d with a fixed seed."""
    sampler = qmc.Sobol(d, scramble=True, seed=seed)
    m = int(math.log2(count))
    if 2 ** m == count:
        return sampler.random_base2(m)
    return sampler.random(count)


@dataclass(frozen=True)
class LdtResult:
    measure: float
    threshold: float
    L_I: float
    phases: np.ndarray = field(repr=False)
    deviations: np.ndarray = field(repr=False)

    @property
    def deviation_set(self):
        """Phases at which the deviation reaches the threshold."""
        return self.phases[np.abs(self.deviations) >= self.threshold]


def ldt_statistics(p, I, omega, E, params, cfg=DEFAULT_CONFIG):
    """Deviations log||M_I(theta)|| - |I| L_I over low-discrepancy phases."""
    if int(params.sample_count) < 100:
        raise ValueError("sample_count must be at least 100")
    phases = sample_phases(p.dim_d, int(params.sample_count), params.seed)
    ln = phase_log_norms(p, I, phases, omega, E, cfg=cfg)
    mean = _mean(ln)
    dev = ln - mean
    threshold = params.epsilon * I.length ** (1 - params.sigma)
    measure = float(np.count_nonzero(np.abs(dev) >= threshold)) / dev.size
    return LdtResult(measure, threshold, mean / I.length, phases, dev)


def ldt_deviation_measure(p, I, omega, E, params, cfg=DEFAULT_CONFIG):
    """Fraction of sampled phases with |log||M_I|| - |I| L_I| >= eps |I|^(1 - sigma)."""
    return ldt_statistics(p, I, omega, E, params, cfg).measure


@dataclass(frozen=True)
class UpperCheck:
    sup_dev: float
    bound: float
    ok: bool
    estimate: LyapunovEstimate


def uniform_upper_check(p, I, omega, E, grid, cfg=DEFAULT_CONFIG, sigma=0.25, C_fit=None,
                        gamma_floor=0.1):
    """sup over the grid of log||M_I(theta)|| - |I| L_I against C_fit |I|^(1 - sigma).

    With ``C_fit=None`` the constant is calibrated on this interval, so ``ok``
    holds trivially; pass the constant from the smallest scale of a sweep.

    Raises
    ------
    PositivityError
        If the estimate of L_I is below ``gamma_floor``.
    """
    omega = _omega(p, omega)
    ln = phase_log_norms(p, I, grid.points(), omega, E, cfg=cfg)
    value = _mean(ln) / I.length
    coarse = _mean(ln[grid.coarse_mask()]) / I.length
    est = LyapunovEstimate(value, I, grid, (0.0,) * p.dim_d, 0.5 * abs(value - coarse), gamma_floor,
                           tuple(omega), E)
    if value < gamma_floor:
        raise PositivityError(f"L_I = {value:.4g} below the positivity floor {gamma_floor}")
    sup_dev = float(np.max(ln) - value * I.length)
    scale = I.length ** (1 - sigma)
    if C_fit is None:
        C_fit = max(sup_dev, 0.0) / scale
    bound = C_fit * scale + 1e-9 * I.length
    return UpperCheck(sup_dev, bound, bool(sup_dev <= bound), est)


def uniform_upper_sweep(p, lengths, omega, E, grid, cfg=DEFAULT_CONFIG, sigma=0.25, gamma_floor=0.1):
    """Run ``uniform_upper_check`` on [0, n] for each n, calibrating C_fit at the smallest."""
    lengths = sorted(lengths)
    first = uniform_upper_check(p, Interval(0, lengths[0]), omega, E, grid, cfg, sigma, None, gamma_floor)
    C_fit = first.bound / lengths[0] ** (1 - sigma)
    out = [first]
    for n in lengths[1:]:
        out.append(uniform_upper_check(p, Interval(0, n), omega, E, grid, cfg, sigma, C_fit, gamma_floor))
    return out


def eta_lipschitz_check(p, I, omega, E, eta_list, grid, cfg=DEFAULT_CONFIG):
    """max |L_I(eta) - L_I(eta')| / ||eta - eta'|| over consecutive pairs of ``eta_list``."""
    etas = [np.atleast_1d(np.asarray(e, dtype=float)) for e in eta_list]
    if len(etas) < 2:
        raise ValueError("need at least two eta values")
    for e1, e2 in zip(etas, etas[1:]):
        if np.max(np.abs(e1 - e2)) == 0:
            raise ValueError("consecutive eta values must be distinct")
    vals = [finite_lyapunov(p, I, omega, E, grid, eta=e, cfg=cfg).value for e in etas]
    return max(abs(v2 - v1) / float(np.max(np.abs(e2 - e1)))
               for (v1, e1), (v2, e2) in zip(zip(vals, etas), zip(vals[1:], etas[1:])))


@dataclass(frozen=True)
class StabilityResult:
    lhs: float
    rhs: float
    conclusive: bool
    ok: bool


def stability_rough_check(p, I, base, perturbed, cfg=DEFAULT_CONFIG, C_num=None):
    """Compare |log||M_I(base)|| - log||M_I(pert)||| with the variation-of-constants bound.

    ``base`` and ``perturbed`` are ``(theta, omega, E)`` triples. The bound is
    rhs = exp(C_num |I|) (|d theta| + max(|a|, |b|) |d omega| + |d E|) / max ||M_I||.
    The comparison is only claimed when rhs < 0.1.
    """
    th0, w0, E0 = (np.atleast_1d(np.asarray(base[0])), np.atleast_1d(np.asarray(base[1], dtype=float)), base[2])
    th1, w1, E1 = (np.atleast_1d(np.asarray(perturbed[0])), np.atleast_1d(np.asarray(perturbed[1], dtype=float)),
                   perturbed[2])
    complex_run = np.iscomplexobj(th0) or np.iscomplexobj(th1) or isinstance(E0, complex) or isinstance(E1, complex)
    dt = np.complex128 if complex_run else float
    ln0 = float(batch_log_sigma(*transfer_matrices(p, I, th0[None, :].astype(dt), w0, dt(E0), cfg))[0])
    ln1 = float(batch_log_sigma(*transfer_matrices(p, I, th1[None, :].astype(dt), w1, dt(E1), cfg))[0])
    lhs = abs(ln0 - ln1)
    delta = (float(np.max(np.abs(th1 - th0))) + max(abs(I.a), abs(I.b)) * float(np.max(np.abs(w1 - w0)))
             + abs(E1 - E0))
    if C_num is None:
        C_num = max(gronwall_constant(p, E0.real if isinstance(E0, complex) else E0, I, th0.real, w0),
                    gronwall_constant(p, E1.real if isinstance(E1, complex) else E1, I, th1.real, w1))
    if delta == 0:
        return StabilityResult(lhs, 0.0, True, lhs == 0.0)
    log_rhs = C_num * I.length + math.log(delta) - max(ln0, ln1)
    rhs = math.exp(log_rhs) if log_rhs < 700 else math.inf
    conclusive = rhs < 0.1
    return StabilityResult(lhs, rhs, conclusive, bool(lhs <= rhs) if conclusive else True)


def convergence_rate_diagnostic(p, omega, E, scales, grid, cfg=DEFAULT_CONFIG, sigma=0.25):
    """|L_[0,n] - L_[0,2n]| n / log(1+n)^(1/sigma) for each n in ``scales``."""
    out = []
    for n in scales:
        a = finite_lyapunov(p, Interval(0, n), omega, E, grid, cfg=cfg).value
        b = finite_lyapunov(p, Interval(0, 2 * n), omega, E, grid, cfg=cfg).value
        out.append((n, abs(a - b) * n / math.log(1 + n) ** (1 / sigma)))
    return out


def scale_monotonicity_check(p, J, I, omega, E, grid, cfg=DEFAULT_CONFIG, C_num=None):
    """Check L_J >= L_I - C_num ((|J| + 1) / (|I| - |J|) + 1 / |J|) for nested J shorter than I.

    Returns ``(L_J, L_I, lower_bound, ok)``.
    """
    if not J.length < I.length:
        raise ValueError("J must be shorter than I")
    if C_num is None:
        C_num = gronwall_constant(p, E)
    LJ = finite_lyapunov(p, J, omega, E, grid, cfg=cfg).value
    LI = finite_lyapunov(p, I, omega, E, grid, cfg=cfg).value
    lower = LI - C_num * ((J.length + 1) / (I.length - J.length) + 1 / J.length)
    return LJ, LI, lower, bool(LJ >= lower)
