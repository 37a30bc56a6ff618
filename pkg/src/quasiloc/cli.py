"""Command-line entry point: ``python -m quasiloc <subcommand> ...``.

Exit codes: 0 pass, 1 assertion failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys

from .errors import (ConfigError, DomainError, HypothesisFailure, LabError, NoSignChange, SurrogateInaccurate,
                     VerificationFailure)
from .lab import ExperimentConfig, run

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _floats(text):
    return [float(x) for x in text.split(",")]


def _interval(text):
    a, b = _floats(text)
    return [a, b]


def _common(sp):
    sp.add_argument("--config", help="TOML or JSON experiment config")
    sp.add_argument("--potential", help="cosine:K, zero, or a JSON potential file")
    sp.add_argument("--interval", action="append", type=_interval, metavar="A,B",
                    help="interval a,b (repeat for a schedule)")
    sp.add_argument("--theta", type=_floats, help="phase, comma separated for d > 1")
    sp.add_argument("--omega", type=_floats, help="frequency, comma separated for d > 1")
    sp.add_argument("--energy", type=float)
    sp.add_argument("--rel-tol", type=float, dest="rel_tol")
    sp.add_argument("--grid-points", type=int, dest="grid_points")
    sp.add_argument("--output-dir", dest="output_dir")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--no-cache", action="store_true", help="ignore the record cache")


def build_parser():
    ap = argparse.ArgumentParser(prog="quasiloc", description="Localization lab for continuous quasiperiodic "
                                 "Schrodinger operators")
    sub = ap.add_subparsers(dest="command", required=True)

    sub_specs = {
        "transfer": "transfer matrix M_I: matrix, log scale, log norm, determinant drift",
        "lyapunov": "finite-scale Lyapunov exponents over an interval schedule",
        "ldt": "large-deviation measure over low-discrepancy phases",
        "ap": "Avalanche-Principle multiscale estimate against the direct average",
        "green": "Dirichlet Green's function value and optional decay window",
        "localize": "Dirichlet eigenvalue in a bracket and eigenfunction decay fit",
        "faber": "transfer-matrix polynomial surrogate with sampled deviation",
        "dc": "finite Diophantine condition check",
        "discrepancy": "orbit counts in a box against N Vol",
        "orbitcount": "orbit hits on the sampled LDT deviation set",
        "resonance-scan": "double-resonance scan along one orbit (demonstration)",
    }
    for name, help_text in sub_specs.items():
        sp = sub.add_parser(name, help=help_text)
        _common(sp)
        if name in ("ldt", "orbitcount"):
            sp.add_argument("--epsilon", type=float)
            sp.add_argument("--sigma", type=float)
            sp.add_argument("--samples", type=int, dest="sample_count")
        if name == "lyapunov":
            sp.add_argument("--n-max", type=int, dest="n_max", help="also tabulate L_n for n = 1..n_max")
        if name == "ap":
            sp.add_argument("--block-len", type=float, dest="block_len")
        if name == "green":
            sp.add_argument("--s", type=float)
            sp.add_argument("--t", type=float)
            sp.add_argument("--K", type=float, help="run the decay-window search with this budget")
            sp.add_argument("--gamma", type=float)
        if name in ("localize", "faber", "resonance-scan"):
            sp.add_argument("--bracket", type=_interval, dest="energy_window", metavar="LO,HI")
        if name == "localize":
            sp.add_argument("--step", type=float)
        if name == "faber":
            sp.add_argument("--N", type=int)
            sp.add_argument("--T", type=float)
            sp.add_argument("--caps", type=lambda s: [int(x) for x in s.split(",")])
            sp.add_argument("--budget", type=float)
        if name == "dc":
            sp.add_argument("--c", type=float)
            sp.add_argument("--A", type=float)
            sp.add_argument("--t", type=float)
        if name == "discrepancy":
            sp.add_argument("--N", type=lambda s: [int(x) for x in s.split(",")])
            sp.add_argument("--box", type=_interval, action="append")
        if name == "orbitcount":
            sp.add_argument("--N", type=int)
            sp.add_argument("--delta", type=float)
        if name == "resonance-scan":
            sp.add_argument("--energies", type=int)
            sp.add_argument("--n-range", type=lambda s: [int(x) for x in s.split(",")], dest="n_range")
            sp.add_argument("--gamma", type=float)
    st = sub.add_parser("suite", help="run the acceptance criteria and print one PASS/FAIL line each")
    st.add_argument("--criteria", type=lambda s: [int(x) for x in s.split(",")], default=None,
                    help="comma-separated subset of 1..8")
    return ap


TOP_LEVEL = {"potential", "theta", "omega", "energy", "rel_tol", "grid_points", "output_dir", "seed",
             "energy_window"}
LDT_KEYS = {"epsilon", "sigma", "sample_count"}
SKIP = {"command", "config", "interval", "no_cache"}


def config_from_args(args):
    data = {}
    if args.config:
        data = ExperimentConfig.load(args.config).to_dict()
    data["experiment"] = args.command
    params = dict(data.get("params", {}))
    ldt = dict(data.get("ldt", {"epsilon": 0.5, "sigma": 0.25, "sample_count": 1024}))
    for key, value in vars(args).items():
        if key in SKIP or value is None:
            continue
        if key in TOP_LEVEL:
            data[key] = value
        elif key in LDT_KEYS:
            ldt[key] = value
        else:
            params[key] = value
    if args.interval:
        data["intervals"] = args.interval
    data["params"] = params
    data["ldt"] = ldt
    return ExperimentConfig.from_dict(data)


def _attach_negative_values(argv):
    """Join ``--flag -1,2`` into ``--flag=-1,2`` so negative lists are not read as options."""
    out = []
    for tok in argv:
        if out and re.match(r"^-\d|^-\.\d", tok) and out[-1].startswith("--") and "=" not in out[-1]:
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None):
    parser = build_parser()
    argv = _attach_negative_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    if args.command == "suite":
        from .suites import run_suite

        results = run_suite(args.criteria)
        return EXIT_PASS if all(r.passed for r in results) else EXIT_FAIL
    try:
        cfg = config_from_args(args)
        rec = run(cfg, use_cache=not args.no_cache)
    except (ConfigError, FileNotFoundError, DomainError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VerificationFailure, SurrogateInaccurate, HypothesisFailure, NoSignChange) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except LabError as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps({"record": json.loads(rec.to_json())}, indent=2, sort_keys=True))
    return EXIT_PASS if rec.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
