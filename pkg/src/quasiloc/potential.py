"""Quasiperiodic potentials V(t, x) on T x T^d given by finite Fourier sums.

The operator studied throughout the package is

    (H y)(t) = -y''(t) + V(t, theta + t*omega) y(t),

so a potential is a function of one time variable and ``d`` torus phases.
Only trigonometric polynomials are supported; the strip bound and the
evaluation are then exact and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * math.pi


def _canonical(m, k):
    """True when (m, k) is the lexicographically positive member of its +/- pair."""
    key = (m, *k)
    for v in key:
        if v != 0:
            return v > 0
    return False


def _reduce(a):
    """a - floor(Re a); exact integer shifts of ``a`` give identical bits."""
    if np.iscomplexobj(a):
        return a - np.floor(a.real)
    return a - np.floor(a)


@dataclass(frozen=True)
class AnalyticPotential:
    """Trigonometric polynomial ``V(t, x) = sum c[m, k] exp(2 pi i (m t + k.x))``.

    Parameters
    ----------
    coeffs : dict
        Maps ``(m, k)`` with ``k`` a tuple of length ``dim_d`` to a complex
        amplitude. Missing conjugate partners are filled in, so listing only
        one member of each ``(m, k), (-m, -k)`` pair is allowed. Pairs that are
        both present must be conjugate.
    dim_d : int
        Number of torus phases.
    strip_rho : float
        Half-width of the complex strip on which evaluation is allowed.
    """

    coeffs: dict
    dim_d: int
    strip_rho: float
    _c0: float = field(init=False, repr=False, compare=False)
    _m: np.ndarray = field(init=False, repr=False, compare=False)
    _k: np.ndarray = field(init=False, repr=False, compare=False)
    _re: np.ndarray = field(init=False, repr=False, compare=False)
    _im: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.dim_d) < 1:
            raise ValueError("dim_d must be a positive integer")
        if not self.strip_rho > 0:
            raise ValueError("strip_rho must be positive")
        d = int(self.dim_d)
        full = {}
        for (m, k), c in self.coeffs.items():
            k = tuple(int(v) for v in np.atleast_1d(k))
            if len(k) != d:
                raise ValueError(f"mode {(m, k)} has {len(k)} phase indices, expected {d}")
            full[(int(m), k)] = complex(c)
        scale = sum(abs(c) for c in full.values()) or 1.0
        for (m, k), c in list(full.items()):
            partner = (-m, tuple(-v for v in k))
            if partner in full:
                if abs(full[partner] - c.conjugate()) > 1e-12 * scale:
                    raise ValueError(f"coefficients at {(m, k)} and {partner} are not conjugate")
            else:
                full[partner] = c.conjugate()
        c0 = full.get((0, (0,) * d), 0j)
        if abs(c0.imag) > 1e-12 * scale:
            raise ValueError("constant Fourier mode must be real")
        object.__setattr__(self, "coeffs", dict(sorted(full.items())))
        object.__setattr__(self, "dim_d", d)
        object.__setattr__(self, "strip_rho", float(self.strip_rho))

        half = [(m, k, c) for (m, k), c in self.coeffs.items() if _canonical(m, k)]
        object.__setattr__(self, "_c0", float(c0.real))
        object.__setattr__(self, "_m", np.array([m for m, _, _ in half], dtype=float))
        object.__setattr__(self, "_k", np.array([k for _, k, _ in half], dtype=float).reshape(len(half), d))
        object.__setattr__(self, "_re", np.array([c.real for *_, c in half]))
        object.__setattr__(self, "_im", np.array([c.imag for *_, c in half]))

    # -- evaluation -----------------------------------------------------------------

    def values(self, t, x):
        """Vectorised evaluation without any strip check.

        ``t`` broadcasts against ``x[..., 0]``; ``x`` has trailing axis ``d``.
        Real inputs give a real array, complex inputs a complex one. The sum
        runs over the conjugate pairs in lexicographic order. Real parts are
        reduced mod 1 first, so exactly representable integer shifts are bitwise periodic.
        """
        t = _reduce(np.asarray(t))
        x = _reduce(np.asarray(x))
        out = np.full(np.broadcast_shapes(t.shape, x.shape[:-1]), self._c0,
                      dtype=np.result_type(t, x, float))
        for j in range(self._m.size):
            phase = TWO_PI * (self._m[j] * t + x @ self._k[j])
            if self._im[j] == 0.0:
                out = out + (2.0 * self._re[j]) * np.cos(phase)
            else:
                out = out + 2.0 * (self._re[j] * np.cos(phase) - self._im[j] * np.sin(phase))
        return out

    def eval(self, t, x):
        """V(t, x) at real arguments."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim_d,):
            raise ValueError(f"x must have length {self.dim_d}")
        return float(self.values(float(t), x))

    def eval_complex(self, t, x):
        """Analytic continuation of V; raises DomainError outside the strip."""
        x = np.atleast_1d(np.asarray(x, dtype=complex))
        if x.shape != (self.dim_d,):
            raise ValueError(f"x must have length {self.dim_d}")
        t = complex(t)
        self.check_strip(t.imag, np.max(np.abs(x.imag)))
        return complex(self.values(np.complex128(t), x))

    def check_strip(self, im_t, im_x):
        """Raise DomainError if either imaginary part exceeds strip_rho."""
        tol = 1e-12 * self.strip_rho
        if abs(im_t) > self.strip_rho + tol or abs(im_x) > self.strip_rho + tol:
            raise DomainError(
                f"imaginary parts ({abs(im_t):.3g}, {abs(im_x):.3g}) exceed strip rho={self.strip_rho:.3g}")

    # -- bounds and bookkeeping -----------------------------------------------------

    @property
    def coefficient_mass(self):
        """sum |c[m, k]|, an upper bound for sup |V| over real arguments."""
        return float(sum(abs(c) for c in self.coeffs.values()))

    def strip_sup_bound(self, rho=None):
        """Upper bound for |V| on the strip of half-width ``rho`` (default strip_rho)."""
        rho = self.strip_rho if rho is None else rho
        return float(sum(abs(c) * math.exp(TWO_PI * rho * (abs(m) + sum(abs(v) for v in k)))
                         for (m, k), c in self.coeffs.items()))

    def sup_abs(self, resolution=128):
        """Numerical sup of |V| over a lattice in T x T^d (coefficient mass when d > 2)."""
        if not self.coeffs:
            return 0.0
        if self.dim_d > 2:
            return self.coefficient_mass
        ax = np.arange(resolution) / resolution
        grids = np.meshgrid(*([ax] * (self.dim_d + 1)), indexing="ij")
        t = grids[0]
        x = np.stack(grids[1:], axis=-1)
        return float(np.max(np.abs(self.values(t, x))))

    @property
    def is_zero(self):
        return not any(abs(c) > 0 for c in self.coeffs.values())

    def to_json(self):
        return {
            "d": self.dim_d,
            "rho": self.strip_rho,
            "coeffs": [[m, list(k), c.real, c.imag] for (m, k), c in self.coeffs.items()],
        }

    def content_hash(self):
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def zero_potential(d=1, rho=1.0 / TWO_PI):
    return AnalyticPotential({}, d, rho)


def cosine_model(K, rho=1.0 / TWO_PI):
    """V(t, x) = K^2 (cos 2 pi t + cos 2 pi x) with one phase variable."""
    if not K > 0:
        raise ValueError("K must be positive")
    a = 0.5 * K * K
    return AnalyticPotential({(1, (0,)): a, (0, (1,)): a}, 1, rho)


def from_json(data):
    """Build a potential from ``{"d": int, "rho": float, "coeffs": [[m, [k...], re, im], ...]}``."""
    try:
        d = int(data["d"])
        rho = float(data["rho"])
        coeffs = {}
        for row in data["coeffs"]:
            m, k, re, im = row
            coeffs[(int(m), tuple(int(v) for v in k))] = complex(re, im)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed potential description: {exc}") from exc
    return AnalyticPotential(coeffs, d, rho)


def load(spec):
    """Resolve a CLI potential argument: ``cosine:K``, ``zero`` or a JSON file path."""
    if isinstance(spec, AnalyticPotential):
        return spec
    if isinstance(spec, dict):
        return from_json(spec)
    spec = str(spec)
    if spec.startswith("cosine:"):
        return cosine_model(float(spec.split(":", 1)[1]))
    if spec == "zero" or spec.startswith("zero:"):
        d = int(spec.split(":", 1)[1]) if ":" in spec else 1
        return zero_potential(d)
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"potential file {spec!r} not found")
    return from_json(json.loads(path.read_text()))
