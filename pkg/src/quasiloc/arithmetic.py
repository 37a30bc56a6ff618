"""Diophantine conditions, orbit discrepancy, orbit-hit counts and resonance scans."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, DomainError

LATTICE_BUDGET = 10**8


@dataclass(frozen=True)
class DiophantineSpec:
    """Finite Diophantine condition ||k . omega|| >= c |k|^{-A}, |k| the sup norm."""

    c: float
    A: float
    d: int = 1

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.A > self.d:
            raise ValueError("need A > d")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("d must be a positive integer")


def dist_to_int(x):
    """Distance to the nearest integer, elementwise."""
    x = np.asarray(x, dtype=float)
    return np.abs(x - np.rint(x))


def _lattice_half(d, t):
    """Nonzero k with |k| <= t, one representative of each pair +-k (first nonzero entry positive)."""
    r = np.arange(-t, t + 1)
    if d == 1:
        return np.arange(1, t + 1).reshape(-1, 1)
    ks = np.array(list(itertools.product(r, repeat=d)), dtype=np.int64)
    nz = ks != 0
    first = np.argmax(nz, axis=1)
    keep = nz.any(axis=1) & (ks[np.arange(len(ks)), first] > 0)
    return ks[keep]


def dc_membership(omega, spec, t):
    """Exhaustive finite Diophantine check over 0 < |k| <= t.

    Returns
    -------
    ok : bool
    worst_k : ndarray of int
        Minimiser of ||k . omega|| |k|^A / c.
    margin : float
        That minimum; ``ok`` means ``margin >= 1``.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.size != spec.d:
        raise ValueError("omega has the wrong dimension")
    if not t >= 1:
        raise DomainError("t must be >= 1")
    T = int(math.floor(t))
    if (2 * T + 1) ** spec.d > LATTICE_BUDGET:
        raise BudgetExceeded(f"(2t+1)^d = {(2 * T + 1) ** spec.d} lattice points exceed {LATTICE_BUDGET}")
    ks = _lattice_half(spec.d, T)
    norm = np.max(np.abs(ks), axis=1).astype(float)
    score = dist_to_int(ks @ omega) * norm**spec.A / spec.c
    i = int(np.argmin(score))
    margin = float(score[i])
    return margin >= 1.0, ks[i].copy(), margin


def orbit_phases(omega, theta0, n):
    """theta0 + n omega mod 1 for integer n (array), shape (len(n), d).

    n omega is reduced mod 1 before adding theta0, so the error does not grow
    with the magnitude of theta0 + n omega.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    theta0 = np.broadcast_to(np.asarray(theta0, dtype=float), omega.shape)
    n = np.asarray(n, dtype=np.int64).reshape(-1, 1)
    frac = np.mod(n * omega, 1.0)
    return np.mod(frac + np.mod(theta0, 1.0), 1.0)


def discrepancy_count(omega, N, box):
    """Count n in 1..N with n omega mod 1 in the box, and |count - N Vol(box)|.

    ``box`` is a sequence of half-open (a_i, b_i) in [0, 1]; b_i = 1 includes 1.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if box.shape[0] != omega.size:
        raise ValueError("box dimension does not match omega")
    if np.any(box[:, 0] < 0) or np.any(box[:, 1] > 1) or np.any(box[:, 1] < box[:, 0]):
        raise ValueError("box must lie in [0, 1]^d")
    N = int(N)
    if N < 0:
        raise ValueError("N must be nonnegative")
    vol = float(np.prod(box[:, 1] - box[:, 0]))
    count = 0
    chunk = 1 << 20
    for s in range(1, N + 1, chunk):
        x = orbit_phases(omega, 0.0, np.arange(s, min(N, s + chunk - 1) + 1))
        inside = (x >= box[:, 0]) & ((x < box[:, 1]) | (box[:, 1] >= 1.0))
        count += int(np.count_nonzero(inside.all(axis=1)))
    return count, abs(count - N * vol)


def discrepancy_bound(N, A):
    """Shape N^{1 - 1/A} log^2 N of the discrepancy contract (0 for N < 2)."""
    return 0.0 if N < 2 else N ** (1 - 1 / A) * math.log(N) ** 2


@dataclass(frozen=True)
class OrbitCountReport:
    """Orbit-hit count against the sublinear bound N^{1 - delta}."""

    N: int
    hits: int
    delta: float
    passes: bool


def orbit_hit_count(omega, theta0, N, membership, delta, chunk=1 << 16):
    """Count n in 1..N with theta0 + n omega in S, S given by a vectorised predicate.

    ``membership`` maps an (P, d) array of phases in [0, 1)^d to a boolean (P,) array.
    """
    N = int(N)
    if N < 0:
        raise ValueError("N must be nonnegative")
    hits = 0
    for s in range(1, N + 1, chunk):
        x = orbit_phases(omega, theta0, np.arange(s, min(N, s + chunk - 1) + 1))
        hits += int(np.count_nonzero(np.asarray(membership(x), dtype=bool)))
    return OrbitCountReport(N, hits, float(delta), hits < N ** (1 - float(delta)))


def interval_membership(intervals):
    """Predicate for a finite union of phase intervals [a, b) on the circle (d = 1)."""
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)

    def member(x):
        x = np.asarray(x, dtype=float)[:, 0]
        return np.any((x[:, None] >= iv[:, 0]) & (x[:, None] < iv[:, 1]), axis=1)

    return member


def sampled_set_membership(samples, flags):
    """Predicate from a sampled set on a uniform grid of the circle: nearest sample decides (d = 1)."""
    samples = np.asarray(samples, dtype=float).ravel()
    flags = np.asarray(flags, dtype=bool).ravel()
    order = np.argsort(samples)
    s, f = samples[order], flags[order]

    def member(x):
        x = np.mod(np.asarray(x, dtype=float)[:, 0], 1.0)
        j = np.searchsorted(s, x)
        lo = np.mod(j - 1, len(s))
        hi = np.mod(j, len(s))
        dlo = dist_to_int(x - s[lo])
        dhi = dist_to_int(s[hi] - x)
        return np.where(dlo <= dhi, f[lo], f[hi])

    return member


@dataclass
class ResonanceReport:
    """Double resonances (E, n) found by a single-frequency scan; a demonstration, not a measure bound."""

    energies: np.ndarray
    hits: list
    any_resonance: np.ndarray
    skipped: np.ndarray
    sigma: float
    n_range: tuple
    label: str = "demonstration: single-omega scan, no measure-over-omega claim"
    details: dict = field(default_factory=dict)

    @property
    def fraction(self):
        active = ~self.skipped
        return float(np.mean(self.any_resonance[active])) if active.any() else 0.0

    def csv_rows(self):
        return [("E", "n", "log_norm_J", "log_norm_I")] + [tuple(h) for h in self.hits]


def resonance_scan(p, I, J, theta, omega, E_grid, n_range, gamma, cfg=None, sigma=0.25, grid=None):
    """Search for double resonances along the orbit of theta.

    For each energy both deviation conditions are tested:
    log||M_J(theta)|| <= |J| L_J - |J|^{1 - sigma/2} and
    log||M_I(theta + n omega)|| <= |I| L_I - |I|^{1 - sigma} for n in ``n_range``
    (inclusive). Energies with L_I < gamma are skipped and flagged.
    """
    from .lyapunov import PhaseGrid, finite_lyapunov, phase_log_norms
    from .transfer import DEFAULT_CONFIG

    cfg = DEFAULT_CONFIG if cfg is None else cfg
    grid = PhaseGrid(64, p.dim_d) if grid is None else grid
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    n_lo, n_hi = int(n_range[0]), int(n_range[1])
    ns = np.arange(max(n_lo, 0), n_hi + 1)
    E_grid = np.asarray(E_grid, dtype=float)
    hits, anyres, skipped = [], np.zeros(len(E_grid), bool), np.zeros(len(E_grid), bool)
    shifted = orbit_phases(omega, theta, ns)
    for i, E in enumerate(E_grid):
        L_I = finite_lyapunov(p, I, omega, E, grid, cfg=cfg).value
        if L_I < gamma:
            skipped[i] = True
            continue
        L_J = finite_lyapunov(p, J, omega, E, grid, cfg=cfg).value
        lJ = float(phase_log_norms(p, J, theta.reshape(1, -1), omega, E, cfg=cfg)[0])
        if lJ > J.length * L_J - J.length ** (1 - sigma / 2) or len(ns) == 0:
            continue
        lI = phase_log_norms(p, I, shifted, omega, E, cfg=cfg)
        bad = lI <= I.length * L_I - I.length ** (1 - sigma)
        for n, v in zip(ns[bad], lI[bad]):
            hits.append((float(E), int(n), lJ, float(v)))
        anyres[i] = bool(bad.any())
    return ResonanceReport(E_grid, hits, anyres, skipped, float(sigma), (n_lo, n_hi))
