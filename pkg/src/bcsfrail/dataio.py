"""Dataset CSV, model configuration files and result files.

Configuration files are INI-style::

    [model]
    causes = 2 2
    frailty = correlated        ; shared | correlated | shared-cause-specific
                                ; | correlated-cause-specific
    tie_sigmas = no
    tie_shapes = no

    [hazards]
    family = exponential        ; or family1 / family2, one name per cause
    alpha1 = 2.4 5.8
    alpha2 = 3.5 4.5
    gamma1 = 1 1                ; shapes, ignored for exponential

    [frailty]
    sigma1 = 0.9
    sigma2 = 0.7
    rho = 0.65

    [fit]
    restarts = 1
    fixed = gamma1.1            ; hold these at the values given above

    [simulation]
    p_cen = 0.1
    n = 300
    replicates = 500
    seed = 1

Parameter values are optional for ``fit`` (missing ones start from the
crude-rate defaults) and required for ``simulate`` and ``cross-ratio``.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FrailtyError, InputError, ParameterError
from .estimation import FitOptions, FitResult, ParamVector, Template, default_init
from .frailty import FRAILTY_TAGS, ModelSpec
from .hazards import HazardFamily
from .likelihood import Dataset

DATASET_HEADER = ["x1", "x2", "j1", "j2"]
GRID_HEADER = ["t1", "t2", "j1", "j2", "cr"]
SUMMARY_HEADER = ["param", "truth", "bias", "sse", "ase", "cp"]
SCHEMA = 1


def fmt(x) -> str:
    """Shortest decimal that round-trips to the same double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# datasets --------------------------------------------------------------------


def read_dataset_csv(path, L1: int | None = None, L2: int | None = None) -> Dataset:
    """Parse an ``x1,x2,j1,j2`` file; diagnostics carry 1-based line numbers."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise InputError(f"cannot read dataset: {exc.strerror}", path=path) from None
    reader = csv.reader(io.StringIO(raw, newline=""))
    header = None
    cols = ([], [], [], [])
    for lineno, row in enumerate(reader, 1):
        if not row or all(not c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip().lower() for c in row]
            if header != DATASET_HEADER:
                raise InputError(f"expected header {','.join(DATASET_HEADER)}, found {','.join(row)}", lineno, path)
            continue
        if len(row) != 4:
            raise InputError(f"expected 4 fields, found {len(row)}", lineno, path)
        for i, name in enumerate(DATASET_HEADER):
            text = row[i].strip()
            if i < 2:
                try:
                    v = float(text)
                except ValueError:
                    raise InputError(f"{name}={text!r} is not a number", lineno, path) from None
                if not math.isfinite(v) or v <= 0:
                    raise InputError(f"{name}={text!r} must be a positive finite time", lineno, path)
            else:
                if not re.fullmatch(r"[+]?\d+", text):
                    raise InputError(f"{name}={text!r} is not a nonnegative integer", lineno, path)
                v = int(text)
                limit = L1 if i == 2 else L2
                if limit is not None and v > limit:
                    raise InputError(f"{name}={v} exceeds the declared number of causes {limit}", lineno, path)
            cols[i].append(v)
    if header is None:
        raise InputError("missing header line", 1, path)
    if not cols[0]:
        raise InputError("dataset has no observations", path=path)
    l1 = L1 if L1 is not None else max(1, max(cols[2]))
    l2 = L2 if L2 is not None else max(1, max(cols[3]))
    return Dataset(cols[0], cols[1], cols[2], cols[3], l1, l2)


def dataset_csv_text(data: Dataset) -> str:
    rows = ([fmt(a), fmt(b), str(int(c)), str(int(d))] for a, b, c, d in zip(data.x1, data.x2, data.j1, data.j2))
    return _csv_text(DATASET_HEADER, rows)


def write_dataset_csv(data: Dataset, path):
    atomic_write(path, dataset_csv_text(data))


# configuration ---------------------------------------------------------------


_BOOLEAN = {"1": True, "yes": True, "true": True, "on": True, "0": False, "no": False, "false": False, "off": False}


@dataclass
class ModelConfig:
    """A parsed configuration: template, known parameter values and options."""

    template: Template
    values: dict
    fit_options: FitOptions
    check: bool = True
    simulation: dict = field(default_factory=dict)
    source: str = ""
    path: str | None = None

    def missing(self) -> list:
        return [n for n in self.template.names if n not in self.values]

    def spec(self) -> ModelSpec:
        """Fully specified model; every free parameter must have a value."""
        missing = self.missing()
        if missing:
            raise InputError(f"model needs values for {', '.join(missing)}", path=self.path)
        try:
            return self.template.build({n: self.values[n] for n in self.template.names}, check=self.check)
        except ParameterError as exc:
            raise InputError(str(exc), path=self.path) from None

    def init_for(self, data: Dataset) -> ParamVector:
        base = default_init(self.template, data).as_dict()
        base.update({n: v for n, v in self.values.items() if n in base})
        pv = ParamVector(self.template.names, [base[n] for n in self.template.names])
        try:
            self.template.build(pv)
        except ParameterError as exc:
            raise InputError(f"initial values are invalid: {exc}", path=self.path) from None
        return pv


class _Lines:
    """Line numbers of each (section, key) so diagnostics can point at them."""

    def __init__(self, text):
        self.index = {}
        self.sections = {}
        section = None
        for lineno, line in enumerate(text.splitlines(), 1):
            m = re.match(r"\s*\[([^\]]+)\]", line)
            if m:
                section = m.group(1).strip().lower()
                self.sections.setdefault(section, lineno)
                continue
            m = re.match(r"\s*([^=:;#\s][^=:]*?)\s*[=:]", line)
            if m and section is not None:
                self.index.setdefault((section, m.group(1).strip().lower()), lineno)

    def __call__(self, section, key=None):
        if key is None:
            return self.sections.get(section)
        return self.index.get((section, key), self.sections.get(section))


def read_model_config(path) -> ModelConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise InputError(f"cannot read config: {exc.strerror}", path=path) from None
    return parse_model_config(text, path)


def parse_model_config(text: str, path=None) -> ModelConfig:
    lines = _Lines(text)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise InputError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, path) from None
    except configparser.DuplicateSectionError as exc:
        raise InputError(f"duplicate section [{exc.section}]", exc.lineno, path) from None
    except configparser.MissingSectionHeaderError as exc:
        raise InputError("text before the first [section]", exc.lineno, path) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise InputError("cannot parse line", lineno, path) from None

    def err(msg, section, key=None):
        return InputError(msg, lines(section, key), path)

    known = {"model", "hazards", "frailty", "fit", "simulation"}
    for section in parser.sections():
        if section.lower() not in known:
            raise err(f"unknown section [{section}]", section.lower())
    if not parser.has_section("model"):
        raise InputError("missing [model] section", 1, path)

    def get(section, key, default=None):
        if parser.has_section(section) and parser.has_option(section, key):
            return parser.get(section, key).strip()
        return default

    def numbers(section, key, count=None, kind=float):
        raw = get(section, key)
        if raw is None:
            return None
        try:
            vals = [kind(tok) for tok in raw.replace(",", " ").split()]
        except ValueError:
            raise err(f"{key} must be a list of numbers, got {raw!r}", section, key) from None
        if count is not None and len(vals) == 1 and count > 1:
            vals = vals * count
        if count is not None and len(vals) != count:
            raise err(f"{key} needs {count} value(s), got {len(vals)}", section, key)
        return vals

    def boolean(section, key, default=False):
        raw = get(section, key)
        if raw is None:
            return default
        if raw.lower() not in _BOOLEAN:
            raise err(f"{key} must be yes/no, got {raw!r}", section, key)
        return _BOOLEAN[raw.lower()]

    allowed = {
        "model": {"causes", "frailty", "tie_sigmas", "tie_shapes", "check"},
        "hazards": {"family", "family1", "family2", "alpha1", "alpha2", "gamma1", "gamma2"},
        "frailty": {"sigma", "sigma1", "sigma2", "rho"},
        "fit": {"max_iterations", "tolerance", "restarts", "fd_step", "seed", "fixed", "nodes"},
        "simulation": {"p_cen", "n", "replicates", "seed", "confidence"},
    }
    for section in parser.sections():
        for key in parser.options(section):
            if key not in allowed[section.lower()]:
                raise err(f"unknown key {key!r} in [{section}]", section.lower(), key)

    causes = numbers("model", "causes", kind=int)
    if causes is None or len(causes) != 2 or min(causes) < 1:
        raise err("causes must give two positive counts, e.g. 'causes = 2 2'", "model", "causes")
    L1, L2 = causes
    frailty = (get("model", "frailty") or "").lower()
    if frailty not in FRAILTY_TAGS:
        raise err(f"frailty must be one of {', '.join(FRAILTY_TAGS)}, got {frailty!r}", "model", "frailty")

    families = []
    for k, L in ((1, L1), (2, L2)):
        raw = get("hazards", f"family{k}", get("hazards", "family", "exponential"))
        key = f"family{k}" if get("hazards", f"family{k}") is not None else "family"
        names = raw.split()
        if len(names) == 1:
            names = names * L
        if len(names) != L:
            raise err(f"{key} needs 1 or {L} family names", "hazards", key)
        try:
            families.append(tuple(HazardFamily.parse(n) for n in names))
        except ParameterError as exc:
            raise err(str(exc), "hazards", key) from None

    fixed_names = (get("fit", "fixed") or "").replace(",", " ").split()
    try:
        template = Template(tuple(families), frailty, tie_shapes=boolean("model", "tie_shapes"),
                            tie_sigmas=boolean("model", "tie_sigmas"))
    except ParameterError as exc:
        raise err(str(exc), "model") from None

    values = {}
    for k, L in ((1, L1), (2, L2)):
        alpha = numbers("hazards", f"alpha{k}", L)
        gamma = numbers("hazards", f"gamma{k}", L)
        for j in range(L):
            if alpha is not None:
                values[f"alpha{k}.{j + 1}"] = alpha[j]
            if gamma is not None and families[k - 1][j] is not HazardFamily.EXPONENTIAL:
                values[template.alias(f"gamma{k}.{j + 1}")] = gamma[j]
            elif gamma is not None and gamma[j] != 1.0:
                raise err(f"exponential hazards have shape 1 (gamma{k} cause {j + 1} = {gamma[j]!r})",
                          "hazards", f"gamma{k}")
    if frailty == "shared":
        s = numbers("frailty", "sigma", 1)
        if s is not None:
            values["sigma"] = s[0]
    elif frailty == "shared-cause-specific":
        s = numbers("frailty", "sigma", L1)
        if s is not None:
            values.update({f"sigma.{j + 1}": v for j, v in enumerate(s)})
    else:
        count = 1 if frailty == "correlated" else L1
        suffix = (lambda j: "") if frailty == "correlated" else (lambda j: f".{j + 1}")
        s_tied = numbers("frailty", "sigma", count)
        s1 = numbers("frailty", "sigma1", count)
        s2 = numbers("frailty", "sigma2", count)
        rho = numbers("frailty", "rho", count)
        if template.tie_sigmas:
            tied = s_tied or s1
            if tied is not None:
                values.update({template.alias(f"sigma1{suffix(j)}"): v for j, v in enumerate(tied)})
        else:
            if s_tied is not None:
                raise err("use sigma1/sigma2 for correlated models (or set tie_sigmas)", "frailty", "sigma")
            for name, vals in (("sigma1", s1), ("sigma2", s2)):
                if vals is not None:
                    values.update({f"{name}{suffix(j)}": v for j, v in enumerate(vals)})
        if rho is not None:
            values.update({f"rho{suffix(j)}": v for j, v in enumerate(rho)})

    fixed = []
    for name in fixed_names:
        if name not in template.names:
            raise err(f"cannot fix {name!r}: not a free parameter (free: {', '.join(template.names)})", "fit", "fixed")
        if name not in values:
            raise err(f"cannot fix {name!r} without a value", "fit", "fixed")
        fixed.append((name, values.pop(name)))
    if fixed:
        template = Template(template.families, template.frailty, template.tie_shapes, template.tie_sigmas, tuple(fixed))

    opts = {}
    for key, kind in (("max_iterations", int), ("restarts", int), ("seed", int), ("nodes", int),
                      ("tolerance", float), ("fd_step", float)):
        vals = numbers("fit", key, 1, kind)
        if vals is not None:
            opts[key] = vals[0]
    try:
        fit_options = FitOptions(**opts)
    except ParameterError as exc:
        raise err(str(exc), "fit") from None

    sim = {}
    for key, kind in (("p_cen", float), ("n", int), ("replicates", int), ("seed", int), ("confidence", float)):
        vals = numbers("simulation", key, 1, kind)
        if vals is not None:
            sim[key] = vals[0]

    config = ModelConfig(template, values, fit_options, boolean("model", "check", True), sim, text,
                         str(path) if path is not None else None)
    if not config.missing() and config.check:
        try:
            template.build({n: values[n] for n in template.names})
        except ParameterError as exc:
            raise InputError(str(exc), lines("frailty") or lines("hazards"), path) from None
    return config


def model_config_text(spec: ModelSpec, template: Template | None = None, fit_options: FitOptions | None = None,
                      simulation: dict | None = None) -> str:
    """Config text that parses back to ``spec``."""
    template = template or Template.from_spec(spec)
    out = ["[model]", f"causes = {spec.L1} {spec.L2}", f"frailty = {spec.frailty.tag}"]
    if template.tie_sigmas:
        out.append("tie_sigmas = yes")
    if not spec.check:
        out.append("check = no")
    out.append("")
    out.append("[hazards]")
    for k, row in enumerate(spec.hazards, 1):
        out.append(f"family{k} = " + " ".join(h.family.value for h in row))
        out.append(f"alpha{k} = " + " ".join(fmt(h.alpha) for h in row))
        out.append(f"gamma{k} = " + " ".join(fmt(h.gamma) for h in row))
    out.append("")
    out.append("[frailty]")
    fr = spec.frailty
    if fr.tag == "shared":
        out.append(f"sigma = {fmt(fr.sigma)}")
    elif fr.tag == "shared-cause-specific":
        out.append("sigma = " + " ".join(fmt(s) for s in fr.sigmas))
    else:
        as_list = lambda v: " ".join(fmt(x) for x in np.atleast_1d(v))  # noqa: E731
        if template.tie_sigmas:
            out.append(f"sigma = {as_list(fr.sigma1)}")
        else:
            out.append(f"sigma1 = {as_list(fr.sigma1)}")
            out.append(f"sigma2 = {as_list(fr.sigma2)}")
        out.append(f"rho = {as_list(fr.rho)}")
    if fit_options is not None:
        out += ["", "[fit]"]
        for key in ("max_iterations", "tolerance", "restarts", "fd_step", "seed", "nodes"):
            v = getattr(fit_options, key)
            if v is not None:
                out.append(f"{key} = {fmt(v)}")
    if simulation:
        out += ["", "[simulation]"] + [f"{k} = {fmt(v)}" for k, v in simulation.items()]
    return "\n".join(out) + "\n"


# results ---------------------------------------------------------------------


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def fit_result_record(res: FitResult, inputs: dict) -> dict:
    se = res.se if res.se is not None else [None] * len(res.names)
    return {
        "schema": SCHEMA,
        "tool": "bcsfrail",
        "version": __version__,
        "kind": "fit",
        "inputs": inputs,
        "frailty": res.template.frailty if res.template else None,
        "parameters": [{"name": n, "estimate": _num(v), "se": _num(s)} for n, v, s in zip(res.names, res.estimates, se)],
        "loglik": _num(res.loglik),
        "n_params": res.n_params,
        "aic": _num(res.aic),
        "converged": res.converged,
        "iterations": res.iterations,
        "evaluations": res.evaluations,
        "underflow_warnings": res.underflow_warnings,
        "hessian_pd": res.hessian_pd,
        "diagnostics": list(res.diagnostics),
    }


def write_result(record: dict, path):
    atomic_write(path, json.dumps(record, indent=2, allow_nan=False) + "\n")


def read_result(path) -> dict:
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read result file: {exc}", path=path) from None
    if record.get("schema") != SCHEMA:
        raise InputError(f"unsupported result schema {record.get('schema')!r}", path=path)
    return record


def summary_csv_text(summary) -> str:
    rows = [[p.name, fmt(p.truth), fmt(p.bias), fmt(p.sse), fmt(p.ase), fmt(p.cp)] for p in summary.params]
    return _csv_text(SUMMARY_HEADER, rows)


def grid_csv_text(rows) -> str:
    return _csv_text(GRID_HEADER, ([fmt(t1), fmt(t2), str(j1), str(j2), fmt(cr)] for t1, t2, j1, j2, cr in rows))


def read_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def describe_error(exc: BaseException) -> str:
    """One-line ``ErrorClass: message`` for stderr."""
    msg = " ".join(str(exc).split())
    return f"{type(exc).__name__}: {msg}"


__all__ = [
    "ModelConfig", "read_dataset_csv", "write_dataset_csv", "dataset_csv_text", "read_model_config",
    "parse_model_config", "model_config_text", "fit_result_record", "write_result", "read_result",
    "summary_csv_text", "grid_csv_text", "read_csv_rows", "describe_error", "atomic_write", "fmt",
    "FrailtyError",
]
