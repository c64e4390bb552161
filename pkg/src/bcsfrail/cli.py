"""Command-line driver: fit, simulate, cross-ratio and compare.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 bad input file.
Failures print a single ``ErrorClass: message`` line on stderr.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (atomic_write, describe_error, fit_result_record, fmt, grid_csv_text, read_dataset_csv,
                     read_model_config, summary_csv_text, write_result)
from .errors import FrailtyError, InputError, ParameterError
from .estimation import fit
from .frailty import cross_ratio, cross_ratio_closed_form
from .simulation import SimConfig, run_study

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_INPUT = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_axis(text: str) -> np.ndarray:
    """``a:b:steps`` (inclusive, evenly spaced) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, steps = text.split(":")
            steps = int(steps)
            if steps < 1:
                raise ValueError
            return np.linspace(float(a), float(b), steps)
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"cannot parse time axis {text!r}; use start:stop:steps or a comma list") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bcsfrail", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"bcsfrail {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="maximum likelihood fit of one model")
    f.add_argument("--data", required=True)
    f.add_argument("--model", required=True)
    f.add_argument("--out", required=True)

    s = sub.add_parser("simulate", help="run a simulation study")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--replicates", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)

    c = sub.add_parser("cross-ratio", help="cross-ratio grid as CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--t1", required=True)
    c.add_argument("--t2", required=True)
    c.add_argument("--causes", help="j1,j2 (default: every pair)")
    c.add_argument("--closed-form", action="store_true",
                   help="evaluate tails analytically instead of by quadrature")
    c.add_argument("--out", required=True)

    m = sub.add_parser("compare", help="AIC table for several models on one dataset")
    m.add_argument("--data", required=True)
    m.add_argument("--model", required=True, nargs="+")
    m.add_argument("--out", required=True)
    return p


def _fit_one(data_path, model_path):
    config = read_model_config(model_path)
    t = config.template
    data = read_dataset_csv(data_path, L1=t.L1, L2=t.L2)
    return config, data, fit(data, t, config.init_for(data), config.fit_options)


def cmd_fit(args):
    config, data, res = _fit_one(args.data, args.model)
    inputs = {"data": str(args.data), "model": str(args.model), "model_config": config.source, "n": len(data)}
    write_result(fit_result_record(res, inputs), args.out)


def cmd_simulate(args):
    config = read_model_config(args.config)
    sim = dict(config.simulation)
    for key in ("replicates", "n", "seed"):
        if getattr(args, key) is not None:
            sim[key] = getattr(args, key)
    missing = [k for k in ("p_cen", "n", "replicates") if k not in sim]
    if missing:
        raise InputError(f"[simulation] needs {', '.join(missing)}", path=args.config)
    try:
        sc = SimConfig(config.spec(), sim["p_cen"], sim["n"], sim["replicates"], sim.get("seed", 0),
                       config.fit_options, sim.get("confidence", 0.95), config.template)
    except ParameterError as exc:
        raise InputError(str(exc), path=args.config) from None
    summary = run_study(sc)
    out = Path(args.out)
    atomic_write(out / "summary.csv", summary_csv_text(summary))
    record = {
        "schema": 1, "tool": "bcsfrail", "version": __version__, "kind": "simulation",
        "inputs": {"config": str(args.config), "model_config": config.source, "simulation": sim},
        "mu_monitor": summary.mu_monitor,
        "replicates": summary.replicates,
        "successes": summary.successes,
        "excluded": {"not_converged": summary.not_converged, "se_unavailable": summary.se_unavailable,
                     "failed": summary.failed},
        "parameters": [{"name": p.name, "truth": p.truth, "bias": p.bias, "sse": p.sse,
                        "ase": p.ase if np.isfinite(p.ase) else None, "cp": p.cp if np.isfinite(p.cp) else None,
                        "n_estimates": p.n_estimates, "n_se": p.n_se} for p in summary.params],
    }
    write_result(record, out / "result.json")


def cmd_cross_ratio(args):
    spec = read_model_config(args.model).spec()
    t1s, t2s = parse_axis(args.t1), parse_axis(args.t2)
    if np.any(t1s <= 0) or np.any(t2s <= 0):
        raise UsageError("cross-ratio times must be positive")
    if args.causes:
        try:
            pairs = [tuple(int(v) for v in args.causes.split(","))]
        except ValueError:
            raise UsageError(f"--causes expects j1,j2, got {args.causes!r}") from None
        if len(pairs[0]) != 2:
            raise UsageError("--causes expects two indices")
    else:
        pairs = [(a, b) for a in range(1, spec.L1 + 1) for b in range(1, spec.L2 + 1)]
    func = cross_ratio_closed_form if args.closed_form else cross_ratio
    rows = []
    for j1, j2 in pairs:
        for t2 in t2s:
            for t1 in t1s:
                rows.append((float(t1), float(t2), j1, j2, float(func(spec, j1, j2, float(t1), float(t2)))))
    atomic_write(args.out, grid_csv_text(rows))


def cmd_compare(args):
    rows = []
    for model_path in args.model:
        config = read_model_config(model_path)
        t = config.template
        data = read_dataset_csv(args.data)
        if t.frailty.endswith("cause-specific") and data.L1 != data.L2:
            raise InputError(f"{t.frailty} needs L1 == L2 but the dataset has ({data.L1}, {data.L2})",
                             path=model_path)
        if (data.L1, data.L2) != (t.L1, t.L2):
            raise InputError(f"model declares causes ({t.L1}, {t.L2}) but the dataset has ({data.L1}, {data.L2})",
                             path=model_path)
        res = fit(data, t, config.init_for(data), config.fit_options)
        rows.append((res.aic, str(model_path), t.frailty, res))
    rows.sort(key=lambda r: r[0])
    header = ["model", "frailty", "loglik", "n_params", "aic", "converged"]
    lines = [",".join(header)]
    for aic_value, path, frailty, res in rows:
        lines.append(",".join([path, frailty, fmt(res.loglik), str(res.n_params), fmt(aic_value),
                               "true" if res.converged else "false"]))
    atomic_write(args.out, "\n".join(lines) + "\n")


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "cross-ratio": cmd_cross_ratio, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"UsageError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(describe_error(exc), file=sys.stderr)
        return EXIT_INPUT
    except FrailtyError as exc:
        print(describe_error(exc), file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(describe_error(exc), file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
