"""Transfer matrices of -y'' + V(t, theta + t omega) y = E y.

For an interval I = [a, b] the fundamental solutions u_a, v_a satisfy
u_a(a) = 1, u_a'(a) = 0, v_a(a) = 0, v_a'(a) = 1 and

    M_I = [[u_a(b),  v_a(b)],
           [u_a'(b), v_a'(b)]],   det M_I = 1.

Norms grow like exp(|I| L), so matrices are stored as a unit-scale part
times exp(log_scale).
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field

import numpy as np

from . import _rk
from .potential import AnalyticPotential

LN2 = math.log(2.0)


@dataclass(frozen=True)
class Interval:
    """Closed interval [a, b] with a < b."""

    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ValueError("interval endpoints must be finite")
        if not a < b:
            raise ValueError(f"degenerate or reversed interval [{a}, {b}]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def length(self):
        return self.b - self.a

    def shifted(self, n):
        return Interval(self.a + n, self.b + n)

    def __contains__(self, t):
        return self.a <= t <= self.b

    @classmethod
    def parse(cls, text):
        """Parse ``"a,b"``."""
        a, b = (float(v) for v in str(text).split(","))
        return cls(a, b)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    renorm_interval: float = 1.0
    max_step: float = 0.5

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "renorm_interval", "max_step"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)


DEFAULT_CONFIG = IntegratorConfig()


# -- scaled 2x2 matrices -----------------------------------------------------------


def _pow2_split(x):
    """Exponent e with x / 2**e in [1/2, 1); 0 for x = 0."""
    if x == 0 or not math.isfinite(x):
        return 0
    return math.frexp(x)[1]


def sigma_max(m):
    """Largest singular value of a 2x2 matrix from the closed form.

    sigma^2 = (F + sqrt((F - 2D)(F + 2D))) / 2 with F the squared Frobenius
    norm and D = |det|, evaluated after scaling by the largest entry.
    """
    m = np.asarray(m)
    s = float(np.max(np.abs(m)))
    if s == 0 or not math.isfinite(s):
        return s
    m = m / s
    F = float(np.sum(np.abs(m) ** 2))
    D = abs(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    disc = max((F - 2 * D) * (F + 2 * D), 0.0)
    return s * math.sqrt(0.5 * (F + math.sqrt(disc)))


def batch_log_sigma(units, logs):
    """Vectorised log of the largest singular value of ``(..., 2, 2)`` scaled matrices."""
    u = np.asarray(units)
    s = np.max(np.abs(u), axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = u / np.where(s > 0, s, 1.0)[..., None, None]
        F = np.sum(np.abs(u) ** 2, axis=(-2, -1))
        D = np.abs(u[..., 0, 0] * u[..., 1, 1] - u[..., 0, 1] * u[..., 1, 0])
        disc = np.maximum((F - 2 * D) * (F + 2 * D), 0.0)
        return 0.5 * np.log(0.5 * (F + np.sqrt(disc))) + np.log(s) + logs


@dataclass(frozen=True)
class ScaledMatrix2:
    """The 2x2 matrix ``unit * exp(log_scale)``.

    The max-entry magnitude of ``unit`` lies in [1/2, 1) after
    normalisation; scaling is by powers of two so it is exact.
    """

    unit: np.ndarray
    log_scale: float = 0.0
    _normalised: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        u = np.array(self.unit, dtype=np.result_type(self.unit, float))
        if u.shape != (2, 2):
            raise ValueError("unit must be 2x2")
        s = float(self.log_scale)
        if not self._normalised:
            e = _pow2_split(float(np.max(np.abs(u))))
            if e:
                u = u * 2.0 ** -e
                s += e * LN2
        u.setflags(write=False)
        object.__setattr__(self, "unit", u)
        object.__setattr__(self, "log_scale", s)

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @classmethod
    def from_matrix(cls, m, log_scale=0.0):
        return cls(np.asarray(m), log_scale)

    def matrix(self):
        """Dense matrix; overflows to inf once log_scale exceeds ~709."""
        return self.unit * math.exp(self.log_scale)

    def log_norm(self):
        """log of the spectral norm."""
        return math.log(sigma_max(self.unit)) + self.log_scale

    def det_drift(self):
        """Departure from det = 1, relative to the squared norm.

        |det(unit) - exp(-2 log_scale)| / sigma_max(unit)^2, i.e. |det M - 1| / ||M||^2.
        The absolute log-determinant is not computable once ||M|| is large,
        since det(unit) then sits at the round-off level of the entries.
        """
        u = self.unit
        det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
        target = math.exp(-2.0 * self.log_scale) if self.log_scale > -350 else math.inf
        return float(abs(det - target)) / sigma_max(u) ** 2

    def inverse(self):
        """Inverse via the adjugate, assuming det = 1."""
        u = self.unit
        adj = np.array([[u[1, 1], -u[0, 1]], [-u[1, 0], u[0, 0]]])
        return ScaledMatrix2(adj, self.log_scale)

    def __matmul__(self, other):
        return compose(self, other)

    def __repr__(self):
        return f"ScaledMatrix2(unit={self.unit.tolist()}, log_scale={self.log_scale:.6g})"


def compose(M2, M1):
    """The product M2 @ M1 with log scales added."""
    return ScaledMatrix2(M2.unit @ M1.unit, M2.log_scale + M1.log_scale)


def log_norm(M):
    return M.log_norm()


def relative_difference(M1, M2):
    """Max-entry difference of two scaled matrices relative to the max entry of ``M1``."""
    ds = M2.log_scale - M1.log_scale
    diff = M1.unit - M2.unit * math.exp(ds)
    return float(np.max(np.abs(diff)) / np.max(np.abs(M1.unit)))


# -- solutions on a grid -----------------------------------------------------------


@dataclass(frozen=True)
class TransferSolution:
    """Fundamental solutions sampled on an ascending grid.

    ``u, du, v, dv`` hold unit-scale values and ``log_scale[i]`` the common
    log scale at ``grid[i]``. ``origin`` is the time where the identity
    initial data are imposed: ``interval.a`` for forward solutions,
    ``interval.b`` for the backward branch used by Green's functions.
    """

    interval: Interval
    grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    log_scale: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    energy: complex | float
    origin: float
    potential: AnalyticPotential = field(repr=False)
    cfg: IntegratorConfig = field(default=DEFAULT_CONFIG, repr=False)

    def matrix_at(self, i):
        """Scaled fundamental matrix at grid index ``i``."""
        unit = np.array([[self.u[i], self.v[i]], [self.du[i], self.dv[i]]])
        return ScaledMatrix2(unit, self.log_scale[i])

    def wronskian(self):
        """u v' - u' v at each sample, relative to the squared norm of the state."""
        W = self.u * self.dv - self.du * self.v
        units = np.stack([np.stack([self.u, self.v], -1), np.stack([self.du, self.dv], -1)], -2)
        sig2 = np.exp(2 * (batch_log_sigma(units, 0.0)))
        target = np.exp(-2.0 * self.log_scale)
        return np.abs(W - target) / sig2

    def state_at(self, t):
        """Unit state (u, v, u', v') and log scale at an arbitrary ``t`` in the interval."""
        if t not in self.interval:
            raise ValueError(f"t={t} outside {self.interval}")
        g = self.grid
        if self.origin == self.interval.a:
            i = int(np.searchsorted(g, t, side="right") - 1)
        else:
            i = int(np.searchsorted(g, t, side="left"))
        i = min(max(i, 0), g.size - 1)
        y0 = np.array([self.u[i], self.v[i], self.du[i], self.dv[i]])
        if g[i] == t:
            return y0, float(self.log_scale[i])
        states, logs = _rk.propagate(self.potential, g[i], [t], self.theta[None, :],
                                     self.omega, self.energy, self.cfg,
                                     y0=y0[:, None], log0=[self.log_scale[i]])
        return states[0, :, 0], float(logs[0, 0])


def _as_phase(x, d):
    x = np.atleast_1d(np.asarray(x))
    if x.shape != (d,):
        raise ValueError(f"phase vector must have length {d}, got shape {x.shape}")
    return x


def default_grid(I, step=0.05):
    n = max(2, int(math.ceil(I.length / step)))
    g = np.linspace(I.a, I.b, n + 1)
    g[0], g[-1] = I.a, I.b
    return g


def integrate_transfer(p, I, theta, omega, E, cfg=DEFAULT_CONFIG, grid=None, origin="a"):
    """Integrate the fundamental system over ``I`` and sample it on ``grid``.

    Parameters
    ----------
    p : AnalyticPotential
    I : Interval
    theta, omega : array_like, shape (d,)
    E : float or complex
    cfg : IntegratorConfig
    grid : array_like, optional
        Ascending sample times from ``I.a`` to ``I.b``. Defaults to a uniform
        grid of spacing about 0.05.
    origin : {"a", "b"}
        Endpoint carrying the identity initial data. With ``"b"`` the system
        is integrated backwards, giving u_b, v_b.

    Returns
    -------
    TransferSolution
    """
    theta = _as_phase(theta, p.dim_d)
    omega = _as_phase(omega, p.dim_d)
    grid = default_grid(I) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or grid[0] != I.a or grid[-1] != I.b or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must ascend strictly from I.a to I.b")
    if origin == "a":
        t0, t_out = I.a, grid
    elif origin == "b":
        t0, t_out = I.b, grid[::-1]
    else:
        raise ValueError("origin must be 'a' or 'b'")
    states, logs = _rk.propagate(p, t0, t_out, theta[None, :], omega, E, cfg)
    states, logs = states[:, :, 0], logs[:, 0]
    if origin == "b":
        states, logs = states[::-1], logs[::-1]
    states = np.ascontiguousarray(states)
    for arr in (states, logs, grid):
        arr.setflags(write=False)
    return TransferSolution(I, grid, states[:, 0], states[:, 2], states[:, 1], states[:, 3], logs,
                            theta, omega, E, I.a if origin == "a" else I.b, p, cfg)


def transfer_matrix(sol):
    """M over the solution's interval (the last sample for forward solutions)."""
    if sol.origin == sol.interval.a:
        return sol.matrix_at(-1)
    # Backward branch: M_[a,b] = (state at a)^(-1).
    return sol.matrix_at(0).inverse()


def transfer_matrices(p, I, thetas, omega, E, cfg=DEFAULT_CONFIG, t_out=None):
    """Batched M_I(theta) for many phases.

    Parameters
    ----------
    thetas : array_like, shape (B, d)
    E : scalar or array_like, shape (B,)
    t_out : array_like, optional
        Extra output times in (a, b]; defaults to ``[b]``.

    Returns
    -------
    units : ndarray, shape (n_out, B, 2, 2)  (squeezed to (B, 2, 2) when ``t_out`` is None)
    logs : ndarray, shape (n_out, B) or (B,)
    """
    thetas = np.atleast_2d(np.asarray(thetas))
    if thetas.shape[1] != p.dim_d:
        raise ValueError(f"thetas must have {p.dim_d} columns")
    times = [I.b] if t_out is None else t_out
    states, logs = _rk.propagate(p, I.a, times, thetas, omega, E, cfg)
    units = np.stack([np.stack([states[:, 0], states[:, 1]], -1),
                      np.stack([states[:, 2], states[:, 3]], -1)], -2)
    if t_out is None:
        return units[0], logs[0]
    return units, logs


def batch_log_norms(p, I, thetas, omega, E, cfg=DEFAULT_CONFIG):
    """log ||M_I(theta)|| for each row of ``thetas``."""
    units, logs = transfer_matrices(p, I, thetas, omega, E, cfg)
    return batch_log_sigma(units, logs)


def shift_covariance_check(p, I, theta, omega, E, n, cfg=DEFAULT_CONFIG):
    """Relative discrepancy between M_{n+I}(theta) and M_I(theta + n omega mod 1)."""
    if isinstance(n, bool) or not isinstance(n, numbers.Integral):
        raise ValueError(f"shift must be an integer, got {n!r}")
    n = int(n)
    theta = _as_phase(theta, p.dim_d)
    omega = _as_phase(omega, p.dim_d)
    shifted = np.mod(theta + n * omega, 1.0) if n else theta
    M1 = transfer_matrix(integrate_transfer(p, I.shifted(n), theta, omega, E, cfg, grid=[I.a + n, I.b + n]))
    M2 = transfer_matrix(integrate_transfer(p, I, shifted, omega, E, cfg, grid=[I.a, I.b]))
    return relative_difference(M1, M2)


def gronwall_constant(p, E, I=None, theta=None, omega=None, samples=2048):
    """Numerical stand-in for C(V, |E|): sup ||A(t)|| = sup max(1, |V - E|).

    With ``I, theta, omega`` the sup runs over a grid of the trajectory
    t -> (t, theta + t omega), t in I. Otherwise it runs over a lattice of
    the whole torus, which bounds every phase at once.
    """
    if I is not None and theta is not None and omega is not None:
        t = np.linspace(I.a, I.b, max(samples, int(64 * I.length)) + 1)
        x = _as_phase(theta, p.dim_d)[None, :] + t[:, None] * _as_phase(omega, p.dim_d)[None, :]
        vals = p.values(t, x)
    else:
        res = 256 if p.dim_d == 1 else (64 if p.dim_d == 2 else 0)
        if res == 0:
            return max(1.0, p.coefficient_mass + abs(E))
        ax = np.arange(res) / res
        grids = np.meshgrid(*([ax] * (p.dim_d + 1)), indexing="ij")
        vals = p.values(grids[0], np.stack(grids[1:], axis=-1))
    return float(max(1.0, np.max(np.abs(vals - E))))
