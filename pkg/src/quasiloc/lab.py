"""Experiment orchestration: configuration, cached runs, CSV/JSON/SVG outputs."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import arithmetic, faber, green, lyapunov
from . import potential as potential_mod
from .errors import ConfigError, LabError, MissingColumn
from .transfer import IntegratorConfig, Interval, integrate_transfer, transfer_matrix

CACHE_ENV = "QUASILOC_CACHE"
GOLDEN = (5 ** 0.5 - 1) / 2

EXPERIMENTS = ("transfer", "lyapunov", "ldt", "ap", "green", "localize", "faber", "dc", "discrepancy",
               "orbitcount", "resonance-scan")


# -- configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``intervals`` is the interval schedule, ``params`` holds experiment-specific
    extras (see ``run``). ``potential`` is ``"cosine:K"``, ``"zero"``, a JSON file
    path or an inline description.
    """

    experiment: str
    potential: object = "cosine:3"
    omega: tuple = (GOLDEN,)
    theta: tuple = (0.0,)
    eta: float = 0.0
    energy: float = 0.0
    energy_window: tuple = (-1.0, 1.0)
    intervals: tuple = ((0.0, 20.0),)
    grid_points: int = 64
    ldt: dict = field(default_factory=lambda: {"epsilon": 0.5, "sigma": 0.25, "sample_count": 1024})
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    output_dir: str = "results"
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown value {self.experiment!r}; expected one of {EXPERIMENTS}")
        if isinstance(self.potential, str) and not (self.potential.startswith(("cosine:", "zero"))
                                                    or Path(self.potential).exists()):
            raise ConfigError(f"potential: file {self.potential!r} not found")
        for name in ("omega", "theta"):
            v = getattr(self, name)
            v = (v,) if isinstance(v, (int, float)) else v
            try:
                object.__setattr__(self, name, tuple(float(x) for x in v))
            except (TypeError, ValueError):
                raise ConfigError(f"{name}: expected a number or list of numbers") from None
        try:
            ivs = tuple((float(a), float(b)) for a, b in self.intervals)
            for a, b in ivs:
                Interval(a, b)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"intervals: {exc}") from None
        object.__setattr__(self, "intervals", ivs)
        try:
            w = tuple(float(x) for x in self.energy_window)
        except (TypeError, ValueError):
            raise ConfigError("energy_window: expected two numbers") from None
        if len(w) != 2 or w[1] < w[0]:
            raise ConfigError("energy_window: expected [E', E''] with E' <= E''")
        object.__setattr__(self, "energy_window", w)
        for name in ("eta", "energy", "rel_tol", "abs_tol"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{name}: expected a finite number")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ConfigError("rel_tol/abs_tol: must be positive")
        if isinstance(self.grid_points, bool) or not isinstance(self.grid_points, int) \
                or self.grid_points < 2 or self.grid_points % 2:
            raise ConfigError("grid_points: expected an even integer >= 2")
        if not isinstance(self.ldt, dict):
            raise ConfigError("ldt: expected a table")
        try:
            lyapunov.LdtParams(**{"seed": self.seed, **self.ldt})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"ldt: {exc}") from None
        if not isinstance(self.params, dict):
            raise ConfigError("params: expected a table")

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config: expected a table")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown field")
        if "experiment" not in data:
            raise ConfigError("experiment: required field missing")
        return cls(**data)

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config: file {str(path)!r} not found")
        text = path.read_bytes()
        try:
            data = tomli.loads(text.decode()) if path.suffix == ".toml" else json.loads(text)
        except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot parse {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self):
        d = dataclasses.asdict(self)
        for k in ("omega", "theta", "energy_window"):
            d[k] = list(d[k])
        d["intervals"] = [list(iv) for iv in self.intervals]
        return d

    def content_hash(self):
        """Hash of the canonical JSON form with the potential resolved to its coefficients."""
        d = self.to_dict()
        d.pop("output_dir")
        d["potential"] = self.resolve_potential().content_hash()
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def resolve_potential(self):
        return potential_mod.load(self.potential)

    def integrator(self):
        return IntegratorConfig(rel_tol=self.rel_tol, abs_tol=self.abs_tol)


# -- records and persistence --------------------------------------------------------


@dataclass(frozen=True)
class ReportRecord:
    experiment_id: str
    timestamp: str
    config_hash: str
    results: dict
    artifacts: tuple = ()
    passed: bool = True

    def to_json(self):
        return json.dumps({"experiment_id": self.experiment_id, "timestamp": self.timestamp,
                           "config_hash": self.config_hash, "results": self.results,
                           "artifacts": list(self.artifacts), "passed": self.passed},
                          sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["experiment_id"], d["timestamp"], d["config_hash"], d["results"],
                   tuple(d["artifacts"]), bool(d["passed"]))


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return atomic_write(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def cache_dir():
    d = os.environ.get(CACHE_ENV)
    return Path(d) if d else None


def cached_lyapunov(p, I, omega, E, grid, cfg, cache=None):
    """finite_lyapunov with a persistent flat-file cache keyed by (potential, omega, E, I, grid, tolerances)."""
    cache = cache_dir() if cache is None else Path(cache)
    if cache is None:
        return lyapunov.finite_lyapunov(p, I, omega, E, grid, cfg=cfg)
    key = json.dumps([p.content_hash(), [float(w) for w in np.atleast_1d(omega)], repr(complex(E)),
                      [I.a, I.b], grid.points_per_dim, grid.dim, list(grid.offset), cfg.rel_tol, cfg.abs_tol])
    path = cache / "lyapunov" / (hashlib.sha256(key.encode()).hexdigest()[:24] + ".json")
    if path.exists():
        return lyapunov.LyapunovEstimate.from_json(json.loads(path.read_text()))
    est = lyapunov.finite_lyapunov(p, I, omega, E, grid, cfg=cfg)
    atomic_write(path, json.dumps(est.to_json(), sort_keys=True))
    return est


# -- experiments --------------------------------------------------------------------


def _grid(cfg, p):
    return lyapunov.PhaseGrid(cfg.grid_points, p.dim_d)


def _exp_transfer(c, p, out):
    I = Interval(*c.intervals[0])
    sol = integrate_transfer(p, I, c.theta, c.omega, c.energy, c.integrator(), grid=[I.a, I.b])
    M = transfer_matrix(sol)
    res = {"matrix": M.unit.tolist(), "log_scale": M.log_scale, "log_norm": M.log_norm(),
           "det_drift": M.det_drift()}
    path = atomic_write(out / "transfer.json", json.dumps(res, sort_keys=True, indent=2))
    return res, [path], True


def _exp_lyapunov(c, p, out):
    icfg, grid = c.integrator(), _grid(c, p)
    rows, res = [], {}
    for a, b in c.intervals:
        est = cached_lyapunov(p, Interval(a, b), c.omega, c.energy, grid, icfg)
        rows.append((b - a, grid.size, c.eta, est.value, est.spread, "", ""))
        res[f"L[{a:g},{b:g}]"] = est.value
    res["value"] = rows[0][3]
    paths = [write_csv(out / "lyapunov.csv", LYAP_COLUMNS, rows)]
    n_max = int(c.params.get("n_max", 0))
    if n_max:
        tab = lyapunov.subadditivity_table(p, c.omega, c.energy, n_max, grid, icfg)
        paths.append(write_csv(out / "subadditivity.csv", ("n", "L_n"), tab.rows))
        paths.append(emit_plot(paths[-1], "Ln"))
        res["violations"] = len(tab.violations)
    return res, paths, True


LYAP_COLUMNS = ("interval_len", "grid_points", "eta", "value", "spread", "sup_dev", "ldt_measure")


def _exp_ldt(c, p, out):
    params = lyapunov.LdtParams(**{"seed": c.seed, **c.ldt})
    icfg, grid = c.integrator(), _grid(c, p)
    rows, measures = [], []
    for a, b in c.intervals:
        I = Interval(a, b)
        r = lyapunov.ldt_statistics(p, I, c.omega, c.energy, params, icfg)
        sup_dev = float(np.max(r.deviations))
        rows.append((I.length, params.sample_count, c.eta, r.L_I, "", sup_dev, r.measure))
        measures.append(r.measure)
    path = write_csv(out / "ldt.csv", LYAP_COLUMNS, rows)
    ok = all(m2 <= m1 for m1, m2 in zip(measures, measures[1:]))
    res = {"measures": measures, "non_increasing": ok}
    return res, [path, emit_plot(path, "ldt")], ok


def _exp_ap(c, p, out):
    icfg, grid = c.integrator(), _grid(c, p)
    block = float(c.params.get("block_len", 8.0))
    rows = []
    ok = True
    for a, b in c.intervals:
        I = Interval(a, b)
        ap = lyapunov.ap_multiscale_lyapunov(p, I, c.omega, c.energy, block, grid, icfg)
        direct = cached_lyapunov(p, I, c.omega, c.energy, grid, icfg).value
        bound = 3 * math.log(I.length) / I.length
        rows.append((I.length, block, ap, direct, abs(ap - direct), bound))
        ok &= abs(ap - direct) <= bound
    path = write_csv(out / "ap.csv", ("interval_len", "block_len", "ap_value", "direct_value", "diff", "bound"),
                     rows)
    return {"rows": [list(map(float, r)) for r in rows]}, [path], bool(ok)


def _exp_green(c, p, out):
    I = Interval(*c.intervals[0])
    icfg = c.integrator()
    g = green.build_green(p, I, c.theta, c.omega, c.energy, icfg)
    s = float(c.params.get("s", 0.5 * (I.a + I.b)))
    t = float(c.params.get("t", s))
    value, log_abs = green.green_eval(g, s, t)
    res = {"s": s, "t": t, "G": value, "log_abs_G": log_abs, "wronskian_log": g.log_wronskian()}
    ok = True
    if "K" in c.params:
        L_ref = cached_lyapunov(p, I, c.omega, c.energy, _grid(c, p), icfg).value
        w = green.decay_window_search(p, I, c.theta, c.omega, c.energy, L_ref, float(c.params["K"]),
                                      float(c.params.get("gamma", 0.1)), icfg)
        res.update({"case": w.case_id, "window": [w.J.a, w.J.b], "verified_margin": w.worst_margin})
    path = atomic_write(out / "green.json", json.dumps(res, sort_keys=True, indent=2))
    return res, [path], ok


def _exp_localize(c, p, out):
    box = Interval(*c.intervals[0])
    icfg = c.integrator()
    loc = green.localize_eigenfunction(p, box, c.theta, c.omega, c.energy_window, icfg,
                                       float(c.params.get("step", 0.05)), float(c.params.get("window", 30.0)))
    L = cached_lyapunov(p, box, c.omega, loc.energy, _grid(c, p), icfg).value
    ratio = loc.decay_rate / L if L > 0 else float("nan")
    csv_path = write_csv(out / "profile.csv", ("t", "log_abs_y", "log_envelope"),
                         zip(loc.t, loc.log_abs_y, loc.log_envelope))
    res = {"energy": loc.energy, "decay_rate": loc.decay_rate, "center": loc.center,
           "intercept": loc.intercept, "lyapunov": L, "ratio": ratio}
    js = atomic_write(out / "localize.json", json.dumps(res, sort_keys=True, indent=2))
    svg = emit_plot(csv_path, "profile", fit=(loc.center, loc.intercept, loc.decay_rate))
    ok = bool(0.5 < ratio and abs(ratio - 1) <= 0.25)
    return res, [csv_path, js, svg], ok


def _exp_faber(c, p, out):
    I = Interval(*c.intervals[0])
    kw = {k: c.params[k] for k in ("N", "caps", "quad_points", "budget", "samples") if k in c.params}
    if "caps" in kw:
        kw["caps"] = tuple(kw["caps"])
    s = faber.transfer_surrogate(p, I, float(c.params.get("T", 1.0)), c.energy_window, cfg=c.integrator(),
                                 omega_range=[(w - c.params.get("omega_halfwidth", 0.005),
                                               w + c.params.get("omega_halfwidth", 0.005)) for w in c.omega],
                                 check=False, **kw)
    path = atomic_write(out / "surrogate.json", json.dumps(s.to_json(), sort_keys=True))
    res = {"N": s.N, "deviation": s.deviation, "hs_deviation": s.hs_deviation, "error_cert": s.error_cert}
    return res, [path], s.deviation <= float(c.params.get("budget", 1.0))


def _dc_spec(c, d):
    return arithmetic.DiophantineSpec(float(c.params.get("c", 0.2)), float(c.params.get("A", d + 1.0)), d)


def _exp_dc(c, p, out):
    d = len(c.omega)
    ok, k, margin = arithmetic.dc_membership(c.omega, _dc_spec(c, d), float(c.params.get("t", 100)))
    res = {"ok": ok, "worst_k": k.tolist(), "margin": margin}
    return res, [atomic_write(out / "dc.json", json.dumps(res, sort_keys=True))], ok


def _exp_discrepancy(c, p, out):
    d = len(c.omega)
    box = c.params.get("box", [[0.0, 0.5]] * d)
    Ns = c.params.get("N", [1000])
    Ns = [Ns] if isinstance(Ns, int) else list(Ns)
    rows = []
    for N in Ns:
        count, err = arithmetic.discrepancy_count(c.omega, N, box)
        rows.append((N, count, err, arithmetic.discrepancy_bound(N, float(c.params.get("A", d + 1.0)))))
    path = write_csv(out / "discrepancy.csv", ("N", "count", "error", "bound_shape"), rows)
    return {"rows": [list(r) for r in rows]}, [path], True


def _exp_orbitcount(c, p, out):
    N = int(c.params.get("N", 10_000))
    delta = float(c.params.get("delta", 0.1))
    I = Interval(*c.intervals[0])
    params = lyapunov.LdtParams(**{"seed": c.seed, **c.ldt})
    samples = int(c.params.get("set_samples", 4096))
    member, measure = ldt_membership(p, I, c.omega, c.energy, params.epsilon, params.sigma, samples,
                                     c.integrator())
    rep = arithmetic.orbit_hit_count(c.omega, c.theta, N, member, delta)
    res = {"N": rep.N, "hits": rep.hits, "delta": rep.delta, "passes": rep.passes, "set_measure": measure}
    return res, [atomic_write(out / "orbitcount.json", json.dumps(res, sort_keys=True))], rep.passes


def ldt_membership(p, I, omega, E, epsilon, sigma, samples, cfg):
    """Deviation set {|log||M_I|| - |I| L_I| >= eps |I|^(1-sigma)} sampled on a uniform grid, as a predicate."""
    th = (np.arange(samples) + 0.5) / samples
    ln = lyapunov.phase_log_norms(p, I, th[:, None], omega, E, cfg=cfg)
    dev = ln - math.fsum(ln) / samples
    flags = np.abs(dev) >= epsilon * I.length ** (1 - sigma)
    return arithmetic.sampled_set_membership(th, flags), float(np.mean(flags))


def _exp_resonance(c, p, out):
    I = Interval(*c.intervals[0])
    J = Interval(*c.intervals[1]) if len(c.intervals) > 1 else Interval(I.a, I.a + I.length ** 1.5)
    lo, hi = c.energy_window
    E_grid = np.linspace(lo, hi, int(c.params.get("energies", 16)))
    n_range = tuple(c.params.get("n_range", (1, 500)))
    r = arithmetic.resonance_scan(p, I, J, c.theta, c.omega, E_grid, n_range, float(c.params.get("gamma", 0.1)),
                                  c.integrator(), float(c.ldt.get("sigma", 0.25)), _grid(c, p))
    path = write_csv(out / "resonance.csv", r.csv_rows()[0], r.csv_rows()[1:])
    res = {"fraction": r.fraction, "hits": len(r.hits), "skipped": int(r.skipped.sum()), "label": r.label}
    return res, [path], True


_DISPATCH = {"transfer": _exp_transfer, "lyapunov": _exp_lyapunov, "ldt": _exp_ldt, "ap": _exp_ap,
             "green": _exp_green, "localize": _exp_localize, "faber": _exp_faber, "dc": _exp_dc,
             "discrepancy": _exp_discrepancy, "orbitcount": _exp_orbitcount, "resonance-scan": _exp_resonance}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def run(config, use_cache=True):
    """Run one experiment, writing outputs under ``output_dir/<experiment>-<hash>``.

    With the cache directory env var set, a stored record for the same config
    hash is returned without recomputation if its artifacts still exist.
    """
    h = config.content_hash()
    cache = cache_dir() if use_cache else None
    out = Path(config.output_dir) / f"{config.experiment}-{h}"
    if cache is not None:
        rec_path = cache / "records" / f"{h}.json"
        if rec_path.exists():
            rec = ReportRecord.from_json(rec_path.read_text())
            if all(Path(a).exists() for a in rec.artifacts):
                return rec
    p = config.resolve_potential()
    try:
        results, paths, passed = _DISPATCH[config.experiment](config, p, out)
    except LabError as exc:
        wrapped = type(exc).__new__(type(exc))
        wrapped.__dict__.update(exc.__dict__)
        wrapped.args = (f"[{config.experiment} {h}] {exc}",)
        raise wrapped from exc
    stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    rec = ReportRecord(f"{config.experiment}-{h}", stamp, h, _jsonable(results), tuple(str(x) for x in paths),
                       bool(passed))
    atomic_write(out / "config.json", json.dumps(config.to_dict(), sort_keys=True, indent=2, default=str))
    if cache is not None:
        atomic_write(cache / "records" / f"{h}.json", rec.to_json())
    return rec


# -- plots ---------------------------------------------------------------------------

PLOT_KINDS = {"profile": ("t", "log_abs_y"), "Ln": ("n", "L_n"), "ldt": ("interval_len", "ldt_measure")}


def _read_columns(path, need):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MissingColumn(f"{path}: empty file, need columns {need}")
    header = rows[0]
    for col in need:
        if col not in header:
            raise MissingColumn(f"{path}: missing column {col!r}")
    idx = [header.index(col) for col in need]
    data = [[float(r[i]) for i in idx] for r in rows[1:] if all(r[i] != "" for i in idx)]
    return np.array(data, dtype=float).reshape(-1, len(need))


def _svg_polyline(xs, ys, box, color, dash=""):
    x0, x1, y0, y1, W, H, m = box
    sx = (W - 2 * m) / (x1 - x0 or 1.0)
    sy = (H - 2 * m) / (y1 - y0 or 1.0)
    pts = " ".join(f"{m + (x - x0) * sx:.2f},{H - m - (y - y0) * sy:.2f}" for x, y in zip(xs, ys))
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{d} points="{pts}"/>'


def emit_plot(csv_path, kind, fit=None, svg_path=None):
    """Static SVG for a results CSV.

    ``kind`` is ``"profile"`` (log|y| against t, optional ``fit=(center,
    intercept, rate)`` overlay), ``"Ln"`` (L_n against n) or ``"ldt"``
    (deviation measure against |I|).
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    xcol, ycol = PLOT_KINDS[kind]
    data = _read_columns(csv_path, (xcol, ycol))
    if data.size == 0:
        raise MissingColumn(f"{csv_path}: no rows with {xcol}, {ycol}")
    xs, ys = data[:, 0], data[:, 1]
    finite = np.isfinite(ys)
    W, H, m = 640, 400, 50
    y_lo, y_hi = float(np.min(ys[finite])), float(np.max(ys[finite]))
    box = (float(xs.min()), float(xs.max()), y_lo, y_hi, W, H, m)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<line x1="{m}" y1="{H - m}" x2="{W - m}" y2="{H - m}" stroke="black"/>',
             f'<line x1="{m}" y1="{m}" x2="{m}" y2="{H - m}" stroke="black"/>',
             f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{xcol}</text>',
             f'<text x="12" y="{H / 2}" font-size="12" transform="rotate(-90 12 {H / 2})">{ycol}</text>',
             f'<text x="{m}" y="{m - 8}" font-size="10">[{y_lo:.4g}, {y_hi:.4g}] over [{xs.min():.4g}, {xs.max():.4g}]</text>',
             _svg_polyline(xs[finite], ys[finite], box, "#1f4e99")]
    if kind != "profile":
        parts.append("".join(f'<circle cx="{m + (x - box[0]) * (W - 2 * m) / (box[1] - box[0] or 1):.2f}" '
                             f'cy="{H - m - (y - y_lo) * (H - 2 * m) / (y_hi - y_lo or 1):.2f}" r="3" fill="#1f4e99"/>'
                             for x, y in zip(xs[finite], ys[finite])))
    if fit is not None:
        center, intercept, rate = fit
        fy = intercept - rate * np.abs(xs - center)
        parts.append(_svg_polyline(xs, np.clip(fy, y_lo, y_hi), box, "#c0392b", "6,4"))
    parts.append("</svg>")
    svg_path = Path(csv_path).with_suffix(".svg") if svg_path is None else Path(svg_path)
    atomic_write(svg_path, "\n".join(parts) + "\n")
    return svg_path
