"""Dirichlet Green's functions, decay windows and eigenfunction localization.

On I = [a, b], with v_a(a) = 0, v_a'(a) = 1 and v_b(b) = 0, v_b'(b) = 1,

    G_I(s, t) = v_a(min(s, t)) v_b(max(s, t)) / W,   W = W(v_a, v_b) = v_a(b) = -v_b(a),

and every solution y on I satisfies the Poisson formula

    y(t) = y(b) d_s G_I(b, t) - y(a) d_s G_I(a, t).

All magnitudes are handled as (unit value, log scale) pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisFailure, NoSignChange, VerificationFailure, WronskianNearZero
from .transfer import DEFAULT_CONFIG, Interval, TransferSolution, default_grid, integrate_transfer

NEAR_ZERO_LOG = -30.0


def _log_abs(x):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(x))


@dataclass(frozen=True)
class GreenFunction:
    """G_I built from the forward branch (origin a) and the backward branch (origin b)."""

    interval: Interval
    forward: TransferSolution
    backward: TransferSolution
    wronskian: tuple  # (unit, log_scale) of v_a(b)

    @property
    def grid(self):
        return self.forward.grid

    def _va(self, t):
        """(v_a, v_a') units and log scale at t."""
        y, lg = self.forward.state_at(t)
        return y[1], y[3], lg

    def _vb(self, t):
        y, lg = self.backward.state_at(t)
        return y[1], y[3], lg

    def log_wronskian(self):
        return math.log(abs(self.wronskian[0])) + self.wronskian[1]


def build_green(p, I, theta, omega, E, cfg=DEFAULT_CONFIG, grid=None):
    """Integrate both branches on ``grid`` and form the Green's function of ``I``.

    Raises
    ------
    WronskianNearZero
        If |v_a(b)| < exp(-30) ||M_I||, i.e. E is numerically a Dirichlet eigenvalue.
    """
    grid = default_grid(I) if grid is None else np.asarray(grid, dtype=float)
    fwd = integrate_transfer(p, I, theta, omega, E, cfg, grid=grid, origin="a")
    bwd = integrate_transfer(p, I, theta, omega, E, cfg, grid=grid, origin="b")
    w_unit, w_log = fwd.v[-1], float(fwd.log_scale[-1])
    m = fwd.matrix_at(-1)
    rel = math.log(abs(w_unit)) - math.log(float(np.max(np.abs(m.unit)))) if w_unit != 0 else -math.inf
    if rel < NEAR_ZERO_LOG:
        raise WronskianNearZero(f"|v_a(b)| / ||M_I|| = exp({rel:.1f}): E is numerically a Dirichlet eigenvalue")
    return GreenFunction(I, fwd, bwd, (w_unit, w_log))


def _combine(units, logs):
    """Product of unit factors (numerators) over the Wronskian, as (value, log|value|)."""
    num = units[0] * units[1]
    if num == 0:
        return (0j if np.iscomplexobj(num) else 0.0), -math.inf
    unit = num / units[2]
    log_mag = math.log(abs(unit)) + logs[0] + logs[1] - logs[2]
    if np.iscomplexobj(unit):
        v = unit / abs(unit) * math.exp(log_mag) if log_mag > -745 else 0j
        return complex(v), log_mag
    v = math.copysign(math.exp(log_mag), unit) if log_mag > -745 else 0.0
    return v, log_mag


def _check_inside(g, *ts):
    for t in ts:
        if t not in g.interval:
            raise ValueError(f"{t} outside {g.interval}")


def green_eval(g, s, t):
    """G_I(s, t) as ``(value, log|value|)``; symmetric by construction."""
    _check_inside(g, s, t)
    lo, hi = (s, t) if s <= t else (t, s)
    va, _, la = g._va(lo)
    vb, _, lb = g._vb(hi)
    return _combine((va, vb, g.wronskian[0]), (la, lb, g.wronskian[1]))


def green_partial_s(g, s, t):
    """d/ds G_I(s, t) as ``(value, log|value|)``.

    For s < t this is v_a'(s) v_b(t) / W and for s > t it is v_a(t) v_b'(s) / W.
    At s = t the one-sided value pointing into the interval is used at the
    endpoints and the average of the two sides elsewhere.
    """
    _check_inside(g, s, t)
    I = g.interval
    if s < t or (s == t and s == I.a and s != I.b):
        _, dva, la = g._va(s)
        vb, _, lb = g._vb(t)
        return _combine((dva, vb, g.wronskian[0]), (la, lb, g.wronskian[1]))
    if s > t or s == I.b:
        va, _, la = g._va(t)
        _, dvb, lb = g._vb(s)
        return _combine((va, dvb, g.wronskian[0]), (la, lb, g.wronskian[1]))
    left = green_partial_s_one_sided(g, s, t, "left")
    right = green_partial_s_one_sided(g, s, t, "right")
    v = 0.5 * (left[0] + right[0])
    return v, (math.log(abs(v)) if v != 0 else -math.inf)


def green_partial_s_one_sided(g, s, t, side):
    """``side="left"`` uses the s < t branch, ``"right"`` the s > t branch."""
    if side == "left":
        _, dva, la = g._va(s)
        vb, _, lb = g._vb(t)
        return _combine((dva, vb, g.wronskian[0]), (la, lb, g.wronskian[1]))
    va, _, la = g._va(t)
    _, dvb, lb = g._vb(s)
    return _combine((va, dvb, g.wronskian[0]), (la, lb, g.wronskian[1]))


def wronskian_triple_residual(g):
    """Residuals of W(v_a, v_b)(t) = v_a(b) = -v_b(a).

    Returns the max over grid samples of |W(t) - v_a(b)| / (||Y_a(t)|| ||Y_b(t)||),
    where Y = (v, v'), together with |v_a(b) + v_b(a)| / max(|v_a(b)|, |v_b(a)|).
    """
    f, b = g.forward, g.backward
    w_unit, w_log = g.wronskian
    Wt = f.v * b.dv - f.dv * b.v
    scale = f.log_scale + b.log_scale
    na = np.hypot(np.abs(f.v), np.abs(f.dv))
    nb = np.hypot(np.abs(b.v), np.abs(b.dv))
    ref = w_unit * np.exp(w_log - scale)
    along = float(np.max(np.abs(Wt - ref) / (na * nb)))
    vb_a = b.v[0] * math.exp(float(b.log_scale[0]) - w_log)
    ends = abs(w_unit + vb_a) / max(abs(w_unit), abs(vb_a))
    return along, float(ends)


def poisson_identity_check(p, I, theta, omega, E, y_samples, cfg=DEFAULT_CONFIG):
    """Max relative residual of the Poisson formula for a sampled solution.

    Parameters
    ----------
    y_samples : tuple ``(t, y)``
        A solution of the eigenvalue equation sampled at ascending times
        that include ``I.a`` and ``I.b``; only samples in ``I`` are used.

    Returns
    -------
    float
        max over interior samples of |y(t) - y(b) d_sG(b,t) + y(a) d_sG(a,t)| / max|y|.
    """
    t_all = np.asarray(y_samples[0], dtype=float)
    y_all = np.asarray(y_samples[1])
    inside = (t_all >= I.a) & (t_all <= I.b)
    t, y = t_all[inside], y_all[inside]
    if t.size < 2 or t[0] != I.a or t[-1] != I.b:
        raise ValueError("samples must include both endpoints of I")
    ymax = float(np.max(np.abs(y)))
    if ymax == 0:
        return 0.0
    g = build_green(p, I, theta, omega, E, cfg, grid=t)
    w_unit, w_log = g.wronskian
    f, b = g.forward, g.backward
    # d_sG(b, t) = v_a(t) / W,   d_sG(a, t) = v_b(t) / W.
    dGb = f.v / w_unit * np.exp(f.log_scale - w_log)
    dGa = b.v / w_unit * np.exp(b.log_scale - w_log)
    recon = y[-1] * dGb - y[0] * dGa
    return float(np.max(np.abs(y[1:-1] - recon[1:-1])) / ymax) if t.size > 2 else 0.0


# -- decay windows ------------------------------------------------------------------


@dataclass(frozen=True)
class DecayWindow:
    J: Interval
    K: float
    rate: float
    case_id: int
    gamma: float = 0.0
    threshold_met: bool = True
    worst_margin: float = field(default=math.nan)


def _log_entry(sol, i, name):
    return math.log(abs(getattr(sol, name)[i])) + float(sol.log_scale[i]) if getattr(sol, name)[i] != 0 else -math.inf


def _scan(sol, name, mask_idx, log_threshold, from_end):
    """First index (in scan order) with log|entry| >= threshold, else the maximiser."""
    vals = _log_abs(getattr(sol, name)[mask_idx]) + sol.log_scale[mask_idx]
    order = range(len(mask_idx) - 1, -1, -1) if from_end else range(len(mask_idx))
    for j in order:
        if vals[j] >= log_threshold:
            return int(mask_idx[j]), True
    return int(mask_idx[int(np.argmax(vals))]), False


def _grid_for(I, step):
    return default_grid(I, step)


def verify_decay(g, L_ref, K, n_samples=48):
    """Worst margin of log|G_J|, log|d_sG_J| against -|s-t| L_ref + 2K over sampled pairs.

    Returns ``(margin, (s, t))``; the bound holds on the samples iff margin <= 0.
    """
    f, b = g.forward, g.backward
    idx = np.unique(np.linspace(0, f.grid.size - 1, n_samples).round().astype(int))
    t = f.grid[idx]
    w_log = math.log(abs(g.wronskian[0])) + g.wronskian[1]
    la_v = _log_abs(f.v[idx]) + f.log_scale[idx]
    la_d = _log_abs(f.dv[idx]) + f.log_scale[idx]
    lb_v = _log_abs(b.v[idx]) + b.log_scale[idx]
    lb_d = _log_abs(b.dv[idx]) + b.log_scale[idx]
    S, T = np.meshgrid(np.arange(t.size), np.arange(t.size), indexing="ij")
    lo = np.minimum(S, T)
    hi = np.maximum(S, T)
    logG = la_v[lo] + lb_v[hi] - w_log
    # s < t branch: v_a'(s) v_b(t); s > t branch: v_a(t) v_b'(s); both on the diagonal.
    d_left = la_d[S] + lb_v[T] - w_log
    d_right = la_v[T] + lb_d[S] - w_log
    dlog = np.where(S < T, d_left, np.where(S > T, d_right, np.maximum(d_left, d_right)))
    bound = -np.abs(t[S] - t[T]) * L_ref + 2 * K
    margin = np.maximum(logG, dlog) - bound
    k = np.unravel_index(int(np.argmax(margin)), margin.shape)
    return float(margin[k]), (float(t[k[0]]), float(t[k[1]]))


def decay_window_search(p, I, theta, omega, E, L_ref, K_budget, gamma, cfg=DEFAULT_CONFIG,
                        step=None, n_verify=48):
    """Locate J inside I on which G_J decays at rate L_ref, following the four-case argument.

    Parameters
    ----------
    L_ref : float
        Lyapunov exponent used as decay rate (normally a ``finite_lyapunov`` value).
    K_budget : float
        Deviation budget K; requires log||M_I(theta)|| >= |I| L_ref - K.
    gamma : float
        Positivity floor; each shrink removes 2K/gamma from an end of I.

    Returns
    -------
    DecayWindow

    Raises
    ------
    HypothesisFailure
        If the norm lower bound fails, or the shrink 4K/gamma does not fit in I.
    VerificationFailure
        If a sampled pair violates the decay bound; ``worst`` holds ``(s, t, margin)``.
    """
    if not (gamma > 0 and K_budget > 0):
        raise ValueError("gamma and K_budget must be positive")
    shrink = 2 * K_budget / gamma
    if 2 * shrink >= I.length:
        raise HypothesisFailure(f"window shrink 4K/gamma = {2 * shrink:.3g} does not fit in |I| = {I.length:.3g}")
    step = min(0.05, shrink / 20) if step is None else step
    grid = _grid_for(I, step)
    fwd = integrate_transfer(p, I, theta, omega, E, cfg, grid=grid, origin="a")
    M = fwd.matrix_at(-1)
    target = I.length * L_ref - K_budget
    if M.log_norm() < target:
        raise HypothesisFailure(f"log||M_I|| = {M.log_norm():.4g} < |I| L - K = {target:.4g}")
    log_half = target - math.log(2)
    entries = {1: _log_entry(fwd, -1, "v"), 2: _log_entry(fwd, -1, "dv"),
               3: _log_entry(fwd, -1, "u"), 4: _log_entry(fwd, -1, "du")}
    case = next((c for c in (1, 2, 3, 4) if entries[c] >= log_half), None)
    if case is None:
        raise HypothesisFailure("no entry of M_I reaches exp(|I| L - K) / 2")
    near_b = np.nonzero(grid > I.b - shrink)[0][:-1]
    near_a = np.nonzero(grid < I.a + shrink)[0][1:]
    thr = I.length * L_ref - 1.5 * K_budget
    met = True
    if case == 1:
        J = I
    elif case == 2:
        i, met = _scan(fwd, "v", near_b, thr, from_end=True)
        J = Interval(I.a, grid[i])
    elif case == 3:
        bwd = integrate_transfer(p, I, theta, omega, E, cfg, grid=grid, origin="b")
        i, met = _scan(bwd, "v", near_a, thr, from_end=False)
        J = Interval(grid[i], I.b)
    else:
        i, met = _scan(fwd, "u", near_b, thr, from_end=True)
        t_tilde = grid[i]
        sub = Interval(I.a, t_tilde)
        sub_grid = grid[: i + 1]
        back = integrate_transfer(p, sub, theta, omega, E, cfg, grid=sub_grid, origin="b")
        idx = np.nonzero(sub_grid < I.a + shrink)[0][1:]
        j, met2 = _scan(back, "v", idx, I.length * L_ref - 1.25 * K_budget, from_end=False)
        met = met and met2
        J = Interval(sub_grid[j], t_tilde)
    jgrid = grid[(grid >= J.a) & (grid <= J.b)]
    g = build_green(p, J, theta, omega, E, cfg, grid=jgrid)
    margin, (s, t) = verify_decay(g, L_ref, K_budget, n_verify)
    if margin > 0:
        raise VerificationFailure(
            f"decay bound fails at (s, t) = ({s:.4g}, {t:.4g}) by {margin:.3g} in log", worst=(s, t, margin))
    return DecayWindow(J, K_budget, L_ref, case, gamma, met, margin)


# -- localization -------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationResult:
    energy: float
    decay_rate: float
    center: float
    t: np.ndarray = field(repr=False)
    log_abs_y: np.ndarray = field(repr=False)
    log_envelope: np.ndarray = field(repr=False)
    fit_mask: np.ndarray = field(repr=False)
    intercept: float = 0.0
    bisection_steps: int = 0

    def __iter__(self):
        return iter((self.energy, self.decay_rate, (self.t, self.log_abs_y)))


def _dirichlet_sign(p, box, theta, omega, E, cfg):
    sol = integrate_transfer(p, box, theta, omega, E, cfg, grid=[box.a, box.b])
    return np.sign(sol.v[-1])


def dirichlet_eigenvalue(p, box, theta, omega, bracket, cfg=DEFAULT_CONFIG, tol=None, max_iter=200):
    """Bisect the sign of v_a(b; E) over ``bracket``.

    Returns ``(E_star, steps)``.

    Raises
    ------
    NoSignChange
        If v_a(b) has the same sign at both ends of the bracket.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must be increasing")
    s_lo = _dirichlet_sign(p, box, theta, omega, lo, cfg)
    s_hi = _dirichlet_sign(p, box, theta, omega, hi, cfg)
    if s_lo == 0:
        return lo, 0
    if s_hi == 0:
        return hi, 0
    if s_lo == s_hi:
        raise NoSignChange(f"v_a(b) has the same sign at E = {lo} and E = {hi}")
    tol = 4 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi)) if tol is None else tol
    steps = 0
    while hi - lo > tol and steps < max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        s = _dirichlet_sign(p, box, theta, omega, mid, cfg)
        steps += 1
        if s == 0:
            return mid, steps
        if s == s_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), steps


def eigenfunction_profile(p, box, theta, omega, E, cfg=DEFAULT_CONFIG, step=0.05):
    """Two-sided shooting: v_a left of the matching point, v_b right of it.

    Forward integration of a decaying solution is unstable past its peak,
    so each branch is used only on the side where it is decaying backwards
    toward its own endpoint. The matching point maximises
    log||Y_a(t)|| + log||Y_b(t)||, which is 2 log||(y, y')(t)|| + const for the
    eigenfunction y.

    Returns ``(t, log|y|, log||(y, y')||, center)`` normalised so the envelope peaks at 0.
    """
    grid = default_grid(box, step)
    fwd = integrate_transfer(p, box, theta, omega, E, cfg, grid=grid, origin="a")
    bwd = integrate_transfer(p, box, theta, omega, E, cfg, grid=grid, origin="b")
    env_a = np.log(np.hypot(fwd.v, fwd.dv)) + fwd.log_scale
    env_b = np.log(np.hypot(bwd.v, bwd.dv)) + bwd.log_scale
    c = int(np.argmax(env_a + env_b))
    abs_a = _log_abs(fwd.v) + fwd.log_scale
    abs_b = _log_abs(bwd.v) + bwd.log_scale
    env = np.where(np.arange(grid.size) <= c, env_a - env_a[c], env_b - env_b[c])
    logy = np.where(np.arange(grid.size) <= c, abs_a - env_a[c], abs_b - env_b[c])
    shift = env.max()
    return grid, logy - shift, env - shift, float(grid[c])


def fit_decay(t, log_env, window=30.0):
    """Least-squares fit of log_env = c - rate |t - t_max| on the samples within ``window`` of the max.

    Returns ``(rate, intercept, mask)``.
    """
    k = int(np.argmax(log_env))
    mask = log_env >= log_env[k] - window
    x = np.abs(t - t[k])[mask]
    A = np.stack([np.ones_like(x), -x], axis=1)
    coef, *_ = np.linalg.lstsq(A, log_env[mask], rcond=None)
    return float(coef[1]), float(coef[0]), mask


def localize_eigenfunction(p, box, theta, omega, E_bracket, cfg=DEFAULT_CONFIG, step=0.05, window=30.0):
    """Find a Dirichlet eigenvalue of ``box`` in ``E_bracket`` and fit the decay of its eigenfunction.

    The decay rate is the slope of log||(y, y')|| against |t - argmax| over
    the region within ``exp(-window)`` of the maximum.

    Returns
    -------
    LocalizationResult
        Unpacks as ``(E_star, decay_rate, (t, log|y|))``.
    """
    E_star, steps = dirichlet_eigenvalue(p, box, theta, omega, E_bracket, cfg)
    t, logy, env, center = eigenfunction_profile(p, box, theta, omega, E_star, cfg, step)
    rate, intercept, mask = fit_decay(t, env, window)
    return LocalizationResult(E_star, rate, center, t, logy, env, mask, intercept, steps)
