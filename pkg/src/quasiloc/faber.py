"""Faber polynomials on intervals and product-domain polynomial surrogates.

For K = [-L, L] the exterior map is phi(z) = z/L + sqrt((z/L)^2 - 1) with
inverse psi(w) = (L/2)(w + 1/w), and the Faber polynomials are
Phi_0 = 1, Phi_n(z) = 2 T_n(z / L).  A function analytic inside the level
ellipse Gamma_R = psi(|w| = R) has the expansion f = sum a_n Phi_n with

    a_n = 1/(2 pi i) * contour integral over |t| = rho of f(psi(t)) / t^(n+1) dt,   1 < rho < R,

which the trapezoid rule on a circle evaluates with an FFT.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, DomainError, QuadratureUnresolved, SurrogateInaccurate

COEFF_BUDGET = 10 ** 7
QUAD_BUDGET = 1 << 21


# -- univariate ---------------------------------------------------------------------


def faber_polynomial(L, n):
    """Monomial coefficients (ascending powers) of the Faber polynomial Phi_{[-L, L], n}.

    Uses Phi_0 = 1, Phi_1 = 2z/L, Phi_2 = (2z/L) Phi_1 - 2 and
    Phi_{k+1} = (2z/L) Phi_k - Phi_{k-1} for k >= 2, the recurrence induced by
    psi(w) = (L/2)(w + 1/w).
    """
    if not L > 0:
        raise ValueError("L must be positive")
    n = int(n)
    if n < 0:
        raise ValueError("n must be non-negative")
    prev = np.array([1.0])
    if n == 0:
        return prev
    cur = np.array([0.0, 2.0 / L])
    for k in range(1, n):
        nxt = np.zeros(k + 2)
        nxt[1:] = (2.0 / L) * cur
        nxt[: prev.size] -= (2.0 if k == 1 else 1.0) * prev
        prev, cur = cur, nxt
    return cur


def faber_basis(L, n_max, z):
    """Values Phi_0(z), ..., Phi_{n_max}(z); result has shape (n_max + 1, *z.shape)."""
    z = np.asarray(z)
    out = np.empty((n_max + 1,) + z.shape, dtype=np.result_type(z, float))
    out[0] = 1.0
    if n_max == 0:
        return out
    x = z / L
    out[1] = 2 * x
    if n_max >= 2:
        out[2] = 2 * x * out[1] - 2.0
    for k in range(2, n_max):
        out[k + 1] = 2 * x * out[k] - out[k - 1]
    return out


# -- domains ------------------------------------------------------------------------


@dataclass(frozen=True)
class FaberDomain:
    """Product of intervals [-L_i, L_i] with level parameters 1 < R' < R."""

    half_lengths: tuple
    R: float
    R_prime: float = None

    def __post_init__(self):
        Ls = tuple(float(v) for v in np.atleast_1d(self.half_lengths))
        if not Ls or any(not v > 0 for v in Ls):
            raise ValueError("half_lengths must be positive")
        R = float(self.R)
        Rp = 0.5 * (1 + R) if self.R_prime is None else float(self.R_prime)
        if not 1 < Rp < R:
            raise ValueError(f"need 1 < R' < R, got R'={Rp}, R={R}")
        object.__setattr__(self, "half_lengths", Ls)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "R_prime", Rp)

    @property
    def m(self):
        return len(self.half_lengths)

    def psi(self, i, w):
        """Inverse exterior map of the i-th interval."""
        return 0.5 * self.half_lengths[i] * (w + 1.0 / w)

    def perimeter_bound(self, i):
        """Upper bound pi L (R' + 1/R') for the length of Gamma_{K_i, R'}."""
        Rp = self.R_prime
        return math.pi * self.half_lengths[i] * (Rp + 1 / Rp)

    def distance(self, i):
        """Distance (L/2)(R' + 1/R' - 2) from K_i to Gamma_{K_i, R'}."""
        Rp = self.R_prime
        return 0.5 * self.half_lengths[i] * (Rp + 1 / Rp - 2)

    def cert_factor(self, N):
        """(R'/R)^N prod_i l_i / d_i, the certificate without sup|f|."""
        q = math.prod(self.perimeter_bound(i) / self.distance(i) for i in range(self.m))
        return (self.R_prime / self.R) ** N * q

    def to_json(self):
        return {"half_lengths": list(self.half_lengths), "R": self.R, "R_prime": self.R_prime}


def _caps(dom, N, caps):
    if caps is None:
        return (int(N),) * dom.m
    caps = tuple(min(int(c), int(N)) for c in np.atleast_1d(caps))
    if len(caps) != dom.m:
        raise ValueError("need one degree cap per variable")
    return caps


def _quad(caps, quad_points):
    if quad_points is None:
        q = tuple(max(4, 1 << int(math.ceil(math.log2(4 * max(c, 1))))) for c in caps)
    else:
        q = tuple(int(v) for v in np.broadcast_to(np.atleast_1d(quad_points), (len(caps),)))
    for qi, c in zip(q, caps):
        if qi < 4 or qi & (qi - 1):
            raise ValueError("quadrature counts must be powers of two >= 4")
        if qi < 4 * c:
            raise ValueError(f"{qi} quadrature points cannot resolve degree {c}; need >= 4 * degree")
    return q


def _torus_points(dom, q, radius):
    """Complex sample points psi_i(radius e^{2 pi i j / q_i}) on the product grid, shape (*q, m)."""
    axes = [dom.psi(i, radius * np.exp(2j * np.pi * np.arange(qi) / qi)) for i, qi in enumerate(q)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def _tensor_from_values(vals, rho, caps, stride=1):
    """Coefficient tensor from grid values; a stride of 2 on an axis uses its every-other-point subgrid."""
    m = len(caps)
    strides = tuple(np.broadcast_to(np.atleast_1d(stride), (m,)))
    v = vals[tuple(slice(None, None, int(k)) for k in strides)]
    A = np.fft.fftn(v, axes=tuple(range(m))) / np.prod(v.shape[:m])
    A = A[tuple(slice(0, c + 1) for c in caps)]
    for i, c in enumerate(caps):
        shape = [1] * A.ndim
        shape[i] = c + 1
        A = A * (rho ** -np.arange(c + 1.0)).reshape(shape)
    return A


def _total_degree_mask(caps, N):
    grids = np.meshgrid(*[np.arange(c + 1) for c in caps], indexing="ij")
    return sum(grids) <= N


def coefficient_count(caps, N):
    """Number of multi-indices with n_i <= caps_i and |n| <= N, without forming the grid."""
    counts = np.array([1], dtype=object)
    for c in caps:
        counts = np.convolve(counts, np.ones(int(c) + 1, dtype=object))[: int(N) + 1]
    return int(sum(counts))


def _masked(A, mask, m):
    return np.where(mask.reshape(mask.shape + (1,) * (A.ndim - m)), A, 0)


def faber_coefficient_tensor(f, dom, N, quad_points=None, caps=None, tol=1e-8, rho=None,
                             check=True, values=None, max_points=QUAD_BUDGET):
    """Dense tensor of Faber coefficients a_n, n_i <= cap_i, |n| <= N (zeros elsewhere).

    ``f`` maps an array of complex points of shape (P, m) to values of shape (P,)
    or (P, k). The quadrature check compares against the estimate from the
    every-other-point subgrid, which is the doubling test run downwards. With
    ``quad_points=None`` the counts start at 4 cap_i and each axis whose
    subgrid test fails is doubled until the test passes or the grid would
    exceed ``max_points``. Explicit ``quad_points`` are checked once.
    Returns ``(tensor, info)``; extra output axes trail the degree axes.
    """
    caps = _caps(dom, N, caps)
    adaptive = quad_points is None and values is None
    q = _quad(caps, quad_points)
    rho = 0.5 * (1 + dom.R) if rho is None else float(rho)
    mask = _total_degree_mask(caps, N)
    m = dom.m
    while True:
        if values is None or adaptive:
            pts = _torus_points(dom, q, rho)
            vals = np.asarray(f(pts.reshape(-1, m)))
            vals = vals.reshape(q + vals.shape[1:])
        else:
            vals = values
        A = _masked(_tensor_from_values(vals, rho, caps), mask, m)
        info = {"quad_points": q, "rho": rho, "caps": caps, "quad_change": 0.0}
        if not check:
            return A, info
        if not np.all(np.isfinite(A)):
            raise QuadratureUnresolved("non-finite function values on the quadrature contour")
        scale = float(np.max(np.abs(A))) or 1.0

        def change(stride):
            A2 = _masked(_tensor_from_values(vals, rho, caps, stride), mask, m)
            return float(np.max(np.abs(np.abs(A) - np.abs(A2)))) / scale

        info["quad_change"] = change(2)
        if info["quad_change"] <= tol:
            return A, info
        if not adaptive:
            raise QuadratureUnresolved(
                f"halving the quadrature changes coefficients by {info['quad_change']:.2e} (relative) > {tol:.0e}")
        bad = [i for i in range(m) if change(tuple(2 if j == i else 1 for j in range(m))) > tol / m] or list(range(m))
        q_new = tuple(qi * 2 if i in bad else qi for i, qi in enumerate(q))
        if math.prod(q_new) > max_points:
            raise QuadratureUnresolved(
                f"halving the quadrature changes coefficients by {info['quad_change']:.2e} (relative) > {tol:.0e} "
                f"and doubling to {q_new} exceeds {max_points} points")
        q = q_new


def faber_coefficients(f, dom, N, quad_points=None, caps=None, tol=1e-8):
    """Faber coefficients as a map from multi-index to value (real part; imaginary parts vanish for real f).

    See ``faber_coefficient_tensor`` for the quadrature and its check.
    """
    A, _ = faber_coefficient_tensor(f, dom, N, quad_points, caps, tol)
    if A.ndim != dom.m:
        raise ValueError("f must be scalar-valued")
    mask = _total_degree_mask(_caps(dom, N, caps), N)
    return {tuple(int(v) for v in idx): float(A[idx].real) for idx in zip(*np.nonzero(mask))}


# -- surrogates ---------------------------------------------------------------------


@dataclass(frozen=True)
class FaberSurrogate:
    """Truncated multivariate Faber series in model coordinates.

    A model point x maps to z_i = (x_i - centers_i) / scales_i in K_i.
    """

    coeffs: dict
    domain: FaberDomain
    N: int
    error_cert: float
    centers: tuple = None
    scales: tuple = None
    _tensor: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = self.domain.m
        c = (0.0,) * m if self.centers is None else tuple(float(v) for v in self.centers)
        s = (1.0,) * m if self.scales is None else tuple(float(v) for v in self.scales)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "scales", s)
        if any(sum(k) > self.N for k in self.coeffs):
            raise ValueError("coefficient exceeds the total degree N")
        if self._tensor is None:
            caps = [max((k[i] for k in self.coeffs), default=0) for i in range(m)]
            T = np.zeros([cp + 1 for cp in caps])
            for k, v in self.coeffs.items():
                T[k] = v
            object.__setattr__(self, "_tensor", T)

    @property
    def degree_caps(self):
        return tuple(n - 1 for n in self._tensor.shape)

    def to_domain(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return (x - np.asarray(self.centers)) / np.asarray(self.scales)

    def evaluate(self, x):
        """Values at model points ``x`` of shape (P, m) by tensor contraction with Faber bases."""
        z = self.to_domain(x)
        out = self._tensor
        # Contract the last axis first so the remaining axes keep their order.
        res = None
        for i in reversed(range(self.domain.m)):
            B = faber_basis(self.domain.half_lengths[i], out.shape[-1] - 1 if res is None else res.shape[-2] - 1,
                            z[:, i])
            if res is None:
                res = np.tensordot(out, B, axes=([out.ndim - 1], [0]))  # (..., P)
            else:
                # res has shape (n_0..n_i, P); contract n_i with B (n_i, P) pointwise in P.
                res = np.einsum("...kp,kp->...p", res, B)
        return res

    def evaluate_horner(self, x):
        """Independent path: convert to monomials per axis and evaluate by nested Horner."""
        z = self.to_domain(x)
        T = self._tensor
        for i in range(self.domain.m):
            n = T.shape[i]
            C = np.zeros((n, n))
            for k in range(n):
                C[k, : k + 1] = faber_polynomial(self.domain.half_lengths[i], k)
            T = np.moveaxis(np.tensordot(T, C, axes=([i], [0])), -1, i)
        out = np.empty(z.shape[0])
        for p_idx, zp in enumerate(z):
            A = T
            for i in reversed(range(self.domain.m)):
                acc = np.zeros(A.shape[:-1])
                for k in range(A.shape[-1] - 1, -1, -1):
                    acc = acc * zp[i] + A[..., k]
                A = acc
            out[p_idx] = float(A)
        return out

    def to_json(self):
        return {"domain": self.domain.to_json(), "N": self.N,
                "coeffs": [[*k, v] for k, v in sorted(self.coeffs.items())],
                "error_cert": self.error_cert, "centers": list(self.centers), "scales": list(self.scales)}

    @classmethod
    def from_json(cls, d):
        dom = FaberDomain(tuple(d["domain"]["half_lengths"]), d["domain"]["R"], d["domain"]["R_prime"])
        coeffs = {tuple(int(v) for v in row[:-1]): float(row[-1]) for row in d["coeffs"]}
        return cls(coeffs, dom, int(d["N"]), float(d["error_cert"]), tuple(d["centers"]), tuple(d["scales"]))

    def dumps(self):
        return json.dumps(self.to_json())


def _sparse(A, mask):
    return {tuple(int(v) for v in idx): float(A[idx].real) for idx in zip(*np.nonzero(mask)) if A[idx] != 0}


def approximate_on_product(f, dom, N, quad_points=None, caps=None, tol=1e-8, sup_points=None,
                           centers=None, scales=None):
    """Truncated Faber series of ``f`` with the product-domain error certificate.

    error_cert = (R'/R)^N prod_i l(Gamma_i) / d(K_i, Gamma_i) * sup|f|, with C(m) = 1
    and sup|f| sampled on the distinguished boundary prod_i Gamma_{K_i, R}
    (where the maximum over the closed product domain is attained).

    ``f`` takes model points x = centers + scales * z of shape (P, m).
    """
    c = np.zeros(dom.m) if centers is None else np.asarray(centers, dtype=float)
    sc = np.ones(dom.m) if scales is None else np.asarray(scales, dtype=float)
    f_model = f

    def f(z):
        return f_model(c + sc * z)

    A, info = faber_coefficient_tensor(f, dom, N, quad_points, caps, tol)
    if A.ndim != dom.m:
        raise ValueError("f must be scalar-valued")
    caps_t = info["caps"]
    mask = _total_degree_mask(caps_t, N)
    sup_q = info["quad_points"] if sup_points is None else tuple(
        int(v) for v in np.broadcast_to(np.atleast_1d(sup_points), (dom.m,)))
    pts = _torus_points(dom, sup_q, dom.R).reshape(-1, dom.m)
    sup = float(np.max(np.abs(f(pts))))
    cert = dom.cert_factor(N) * sup
    coeffs = _sparse(A, mask)
    return FaberSurrogate(coeffs, dom, int(N), cert, tuple(c), tuple(sc))


def sampled_error(s, f, points):
    """max |f - s| over model points (P, m)."""
    return float(np.max(np.abs(np.asarray(f(points)) - s.evaluate(points))))


# -- transfer-matrix surrogates -----------------------------------------------------


def degree_bound(I, T, C=0.0125):
    """C [(1 + max(|a|, |b|)) (1 + |I|) (1 + T)]^2, rounded up."""
    return int(math.ceil(C * ((1 + max(abs(I.a), abs(I.b))) * (1 + I.length) * (1 + T)) ** 2))


def strip_radius(p, I, L_theta, omega_halfwidth, safety=1e-9):
    """Largest R keeping every complexified phase theta + t omega, t in I, inside the strip.

    On Gamma_{K,R} the imaginary part is at most L (R - 1/R) / 2, so we need
    (R - 1/R)/2 * (L_theta + max(|a|, |b|) w) <= rho.
    """
    s = p.strip_rho * (1 - safety) / (L_theta + max(abs(I.a), abs(I.b)) * omega_halfwidth)
    return s + math.sqrt(s * s + 1)


@dataclass(frozen=True)
class TransferSurrogate:
    """Faber surrogates of the four entries (u_a(b), v_a(b), u_a'(b), v_a'(b)) and P_I = sum of squares.

    Variables are ``(x_1..x_d, omega_1..omega_d, E)`` where x is the phase
    theta + t omega. ``deviation`` is the sampled sup over the real box of
    |log||M_I|| - log|P_I| / 2|; ``hs_deviation`` is the same against the
    Hilbert-Schmidt norm, isolating the approximation error from the
    factor-sqrt(2) gap between the two norms.
    """

    entries: tuple
    interval: object
    T: float
    E_range: tuple
    omega_range: tuple
    deviation: float
    hs_deviation: float
    potential: object = field(repr=False)
    cfg: object = field(repr=False)

    @property
    def N(self):
        return self.entries[0].N

    @property
    def error_cert(self):
        return max(s.error_cert for s in self.entries)

    @property
    def domain(self):
        return self.entries[0].domain

    def P(self, x):
        return sum(s.evaluate(x) ** 2 for s in self.entries)

    def half_log_P(self, x):
        with np.errstate(divide="ignore"):
            return 0.5 * np.log(np.abs(self.P(x)))

    def to_json(self):
        return {"interval": [self.interval.a, self.interval.b], "T": self.T, "E_range": list(self.E_range),
                "omega_range": [list(r) for r in self.omega_range], "deviation": self.deviation,
                "hs_deviation": self.hs_deviation, "entries": [s.to_json() for s in self.entries]}


def _entry_function(p, I, cfg, chunk=1 << 15):
    from . import _rk

    d = p.dim_d

    def f(X):
        X = np.asarray(X, dtype=complex)
        out = np.empty((X.shape[0], 4), dtype=complex)
        for s in range(0, X.shape[0], chunk):
            x = X[s:s + chunk]
            st, lg = _rk.propagate(p, I.a, [I.b], x[:, :d], x[:, d:2 * d], x[:, 2 * d], cfg)
            out[s:s + chunk] = (st[0] * np.exp(lg[0])).T
        return out

    return f


def _real_box_samples(p, T, omega_range, E_range, count, seed=1):
    from scipy.stats import qmc

    d = p.dim_d
    lo = [-(1 + T)] * d + [r[0] for r in omega_range] + [E_range[0]]
    hi = [1 + T] * d + [r[1] for r in omega_range] + [E_range[1]]
    u = qmc.Sobol(2 * d + 1, scramble=True, seed=seed).random(count)
    return np.asarray(lo) + u * (np.asarray(hi) - np.asarray(lo))


def transfer_surrogate(p, I, T, E_range, N=None, cfg=None, omega_range=None, caps=None, quad_points=None,
                       R=None, budget=1.0, samples=2048, degree_constant=0.0125, tol=1e-3, check=True):
    """Polynomial surrogates of the entries of M_I in (x, omega, E) with a sampled deviation certificate.

    Parameters
    ----------
    p : AnalyticPotential
    I : Interval
    T : float
        Time window; the phase variable x = theta + t omega ranges over [-(1+T), 1+T].
    E_range : (float, float)
        Energy window [E', E'']; the energy domain is [-max|E|, max|E|].
    N : int, optional
        Total degree. Defaults to ``degree_bound(I, T, degree_constant)``.
    omega_range : sequence of (lo, hi) per frequency, width <= 2
        Each is rescaled onto [-1, 1]. Defaults to golden-mean +/- 0.005 for d = 1.
    caps : per-variable degree caps; default (min(N, 100),) * d + (min(N, 3),) * (d + 1).
    R : float, optional
        Level parameter; defaults to the largest value keeping complex phases in the strip.
    budget : float
        Allowed sampled deviation.

    Raises
    ------
    SurrogateInaccurate
        If the sampled deviation exceeds ``budget`` (with ``check=True``).
    BudgetExceeded
        If the number of retained coefficients exceeds 10^7.
    """
    from . import _rk
    from .transfer import DEFAULT_CONFIG, batch_log_sigma

    cfg = DEFAULT_CONFIG if cfg is None else cfg
    d = p.dim_d
    m = 2 * d + 1
    if omega_range is None:
        if d != 1:
            raise ValueError("omega_range is required when d > 1")
        g = (5 ** 0.5 - 1) / 2
        omega_range = ((g - 0.005, g + 0.005),)
    omega_range = tuple((float(lo), float(hi)) for lo, hi in omega_range)
    if len(omega_range) != d or any(not 0 < hi - lo <= 2 for lo, hi in omega_range):
        raise ValueError("need one omega interval of width in (0, 2] per frequency")
    E_lo, E_hi = float(E_range[0]), float(E_range[1])
    if E_hi < E_lo:
        raise ValueError("E_range must be increasing")
    L_E = max(abs(E_lo), abs(E_hi))
    if L_E == 0:
        raise ValueError("energy window must not be {0}")
    N = degree_bound(I, T, degree_constant) if N is None else int(N)
    if caps is None:
        caps = (min(N, 100),) * d + (min(N, 3),) * (d + 1)
    caps = _caps(FaberDomain((1.0,) * m, 2.0), N, caps)
    count = coefficient_count(caps, N)
    if count > COEFF_BUDGET:
        raise BudgetExceeded(f"{count} coefficients exceed the budget {COEFF_BUDGET}")
    half = [1.0 + T] * d + [1.0] * d + [L_E]
    w = max(0.5 * (hi - lo) for lo, hi in omega_range)
    R = strip_radius(p, I, 1.0 + T, w) if R is None else float(R)
    dom = FaberDomain(tuple(half), R)
    centers = (0.0,) * d + tuple(0.5 * (lo + hi) for lo, hi in omega_range) + (0.0,)
    scales = (1.0,) * d + tuple(0.5 * (hi - lo) for lo, hi in omega_range) + (1.0,)
    c, sc = np.asarray(centers), np.asarray(scales)
    f_model = _entry_function(p, I, cfg)

    def fz(z):
        return f_model(c + sc * z)

    A, info = faber_coefficient_tensor(fz, dom, N, quad_points, caps, tol, check=check)
    q = info["quad_points"]
    sup_grid = tuple(max(4, qi // 2) for qi in q)
    sup = np.max(np.abs(fz(_torus_points(dom, sup_grid, R).reshape(-1, m))), axis=0)
    mask = _total_degree_mask(caps, N)
    cf = dom.cert_factor(N)
    entries = tuple(FaberSurrogate(_sparse(A[..., k], mask), dom, N, cf * float(sup[k]), centers, scales,
                                   np.where(mask, A[..., k].real, 0.0)) for k in range(4))
    # Sampled deviation on the real box.
    X = _real_box_samples(p, T, omega_range, (E_lo, E_hi), samples)
    st, lg = _rk.propagate(p, I.a, [I.b], X[:, :d], X[:, d:2 * d], X[:, 2 * d], cfg)
    units = np.stack([np.stack([st[0, 0], st[0, 1]], -1), np.stack([st[0, 2], st[0, 3]], -1)], -2)
    direct = batch_log_sigma(units, lg[0])
    hs = 0.5 * np.log(np.sum(units ** 2, axis=(-2, -1))) + lg[0]
    sur = TransferSurrogate(entries, I, float(T), (E_lo, E_hi), omega_range, 0.0, 0.0, p, cfg)
    hp = sur.half_log_P(X)
    dev = float(np.max(np.abs(direct - hp)))
    hs_dev = float(np.max(np.abs(hs - hp)))
    sur = TransferSurrogate(entries, I, float(T), (E_lo, E_hi), omega_range, dev, hs_dev, p, cfg)
    if check and not dev <= budget:
        raise SurrogateInaccurate(f"sampled deviation {dev:.3g} exceeds budget {budget}")
    return sur


@dataclass(frozen=True)
class SublevelReport:
    """Sampled measure of S(H) = {theta : log|P|/2 <= |I| L - H + C0} with the sandwich checks.

    ``C0`` is the measured sup of |log||M|| - log|P|/2| (surrogate construction
    samples and these samples). ``lower_ok`` checks B(H) in S(H) and
    ``upper_ok`` checks S(H) in B(H/2) on the samples, B(H) = {log||M|| <= |I| L - H}.
    ``upper_expected`` is H >= 4 C0, when the second inclusion follows from the deviation bound.
    """

    measure: float
    measure_B: float
    measure_B_half: float
    C0: float
    lower_ok: bool
    upper_ok: bool
    upper_expected: bool
    thetas: np.ndarray = field(repr=False)
    in_S: np.ndarray = field(repr=False)

    def __float__(self):
        return self.measure


def surrogate_sublevel_measure(s, H, L_I_ref, I_len, samples=10_000, omega=None, E=None):
    """Sampled theta-measure of the surrogate sublevel set at fixed (omega, E), d = 1 phases.

    ``omega`` and ``E`` default to the centres of the surrogate's windows.
    Samples are the midpoints of a uniform grid of [0, 1).
    """
    from . import _rk
    from .transfer import batch_log_sigma

    p = s.potential
    d = p.dim_d
    if d != 1:
        raise ValueError("sublevel sampling is implemented for d = 1")
    omega = 0.5 * (s.omega_range[0][0] + s.omega_range[0][1]) if omega is None else float(np.ravel(omega)[0])
    E = 0.5 * (s.E_range[0] + s.E_range[1]) if E is None else float(E)
    th = (np.arange(samples) + 0.5) / samples
    X = np.column_stack([th, np.full(samples, omega), np.full(samples, E)])
    half = s.half_log_P(X)
    st, lg = _rk.propagate(p, s.interval.a, [s.interval.b], th[:, None], np.full((samples, 1), omega),
                           np.full(samples, E), s.cfg)
    units = np.stack([np.stack([st[0, 0], st[0, 1]], -1), np.stack([st[0, 2], st[0, 3]], -1)], -2)
    direct = batch_log_sigma(units, lg[0])
    C0 = max(s.deviation, float(np.max(np.abs(direct - half))))
    top = I_len * L_I_ref
    in_S = half <= top - H + C0
    in_B = direct <= top - H
    in_B2 = direct <= top - H / 2
    return SublevelReport(float(np.mean(in_S)), float(np.mean(in_B)), float(np.mean(in_B2)), C0,
                          bool(np.all(in_S[in_B])), bool(np.all(in_B2[in_S])), bool(H >= 4 * C0), th, in_S)


def orbit_average_check(p, I, theta, omega, E, N_shifts, cfg=None, L_I=None, dc=None, grid=None):
    """|(1/N) sum_{n=1}^N log||M_I(theta + n omega)|| - |I| L_I|.

    The frequency must satisfy the finite Diophantine condition ``dc`` at
    t = |I| (default c = 0.1, A = d + 1). ``L_I`` defaults to the lattice
    average on a 64-point-per-dimension grid.
    """
    from .arithmetic import DiophantineSpec, dc_membership, orbit_phases
    from .lyapunov import PhaseGrid, finite_lyapunov, phase_log_norms
    from .transfer import DEFAULT_CONFIG

    cfg = DEFAULT_CONFIG if cfg is None else cfg
    d = p.dim_d
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    dc = DiophantineSpec(0.1, d + 1.0, d) if dc is None else dc
    ok, k, margin = dc_membership(omega, dc, max(1.0, I.length))
    if not ok:
        raise DomainError(f"omega fails the Diophantine condition at t={I.length} (k={k.tolist()}, margin {margin:.3g})")
    N_shifts = int(N_shifts)
    if N_shifts < 1:
        raise ValueError("N_shifts must be positive")
    if L_I is None:
        L_I = finite_lyapunov(p, I, omega, E, PhaseGrid(64, d) if grid is None else grid, cfg=cfg).value
    phases = orbit_phases(omega, theta, np.arange(1, N_shifts + 1))
    logs = phase_log_norms(p, I, phases, omega, E, cfg=cfg)
    return abs(math.fsum(logs) / N_shifts - I.length * L_I)
