"""Command-line front end.

    crossbif <mode> --config run.json [--out DIR] [--seed-eps V] [--tol NAME=VAL]

Modes: classify-map, continue, libration-scan, monodromy, perturb-check.
Exit status 0 on success, 2 for configuration errors, 3 for numerical
failures; errors are also written to stderr as ``{"error", "message"}`` JSON.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .classifier import Tolerances, classify, destruction_check_map
from .continuation import (
    continue_branch,
    find_trace2_crossings,
    newton_fixed_point,
    split_cross_branches,
    trace_on_branch,
    verify_prop3,
    verify_prop4,
)
from .errors import ConfigInvalid, CrossbifError
from .family import BUILTIN_G, rotated_conjugate, shear_family
from .perturbation import PerturbationTerm, is_cross_preserving, perturbation_report
from .poincare import (
    HamiltonianSystem,
    SectionSpec,
    demo_potential,
    find_libration,
    find_well,
    hill_fundamental,
    libration_branch_scan,
    poincare_family,
    potential_from_monomials,
)
from .polynomial import Polynomial

log = logging.getLogger(__name__)

SCHEMA_TAG = "crossbif.report/1"
MODES = ("classify-map", "continue", "libration-scan", "monodromy", "perturb-check")
BRANCH_HEADER = "eps,q,p,trace"
SCAN_HEADER = "eps,T,trace,phiT,psiT,dphiT,dpsiT"

_num = {"type": "number"}
_int = {"type": "integer", "minimum": 0}
_triple = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_g_monomial = {
    "type": "object",
    "properties": {"i": _int, "j": _int, "k": _int, "c": _num},
    "required": ["i", "j", "c"],
    "additionalProperties": False,
}
_v_monomial = {
    "type": "object",
    "properties": {"i": _int, "j": _int, "c": _num},
    "required": ["i", "j", "c"],
    "additionalProperties": False,
}
_f_monomial = {
    "type": "object",
    "properties": {"i": _int, "j": _int, "k": _int, "l": _int, "c": _num},
    "required": ["c"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "mode": {"enum": list(MODES)},
        "name": {"type": "string"},
        "family": {
            "type": "object",
            "properties": {
                "builtin": {"enum": sorted(BUILTIN_G)},
                "g": {"type": "array", "items": _g_monomial},
                "drift_q": {"type": "array", "items": _g_monomial},
                "drift_p": {"type": "array", "items": _g_monomial},
                "theta": _num,
                "theta_deg": _num,
            },
            "additionalProperties": False,
        },
        "point": _triple,
        "seed": _triple,
        "eps_range": _pair,
        "step": {"type": "number", "exclusiveMinimum": 0},
        "split": {"type": "boolean"},
        "potential": {
            "oneOf": [
                {"type": "array", "items": _v_monomial, "minItems": 1},
                {
                    "type": "object",
                    "properties": {
                        "builtin": {"const": "demo"},
                        "lambda": _num,
                        "omega": _num,
                        "alpha": _num,
                    },
                    "required": ["builtin"],
                    "additionalProperties": False,
                },
            ]
        },
        "E0": _num,
        "eps": _num,
        "section_y0": _num,
        "chart_radius": {"type": "number", "exclusiveMinimum": 0},
        "n": {"type": "integer", "minimum": 2},
        "classify": {"type": "boolean"},
        "fd_check": {"type": "boolean"},
        "crossing": {
            "type": "object",
            "properties": {"eps_range": _pair, "n": {"type": "integer", "minimum": 2},
                           "index": _int},
            "required": ["eps_range", "n"],
            "additionalProperties": False,
        },
        "perturbations": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "monomials": {"type": "array", "items": _f_monomial},
                },
                "required": ["name"],
                "additionalProperties": False,
            },
        },
        "tolerances": {"type": "object", "additionalProperties": _num},
        "outputs": {
            "type": "object",
            "properties": {"report": {"type": "string"}, "csv": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

REQUIRED = {
    "classify-map": ["family", "point"],
    "continue": ["family", "seed", "eps_range", "step"],
    "libration-scan": ["potential", "E0", "eps_range", "n"],
    "monodromy": ["potential", "E0"],
    "perturb-check": ["potential", "E0", "perturbations"],
}


# -- config ---------------------------------------------------------------------


def load_config(path, mode: str, tol_overrides=(), seed_eps=None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from exc
    if mode not in MODES:
        raise ConfigInvalid(f"unknown mode {mode!r}")
    if cfg.get("mode", mode) != mode:
        raise ConfigInvalid(f"config is for mode {cfg['mode']!r}, not {mode!r}")
    missing = [k for k in REQUIRED[mode] if k not in cfg]
    if missing:
        raise ConfigInvalid(f"mode {mode} needs {missing}")
    tols = dict(cfg.get("tolerances", {}))
    for item in tol_overrides:
        name, sep, val = item.partition("=")
        if not sep:
            raise ConfigInvalid(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            tols[name.strip()] = float(val)
        except ValueError as exc:
            raise ConfigInvalid(f"--tol {name}: {val!r} is not a number") from exc
    try:
        Tolerances().updated(**tols)
    except KeyError as exc:
        raise ConfigInvalid(str(exc.args[0])) from exc
    cfg = dict(cfg)
    cfg["mode"] = mode
    if tols:
        cfg["tolerances"] = tols
    if seed_eps is not None:
        cfg["seed_eps"] = float(seed_eps)
    return cfg


def build_family(spec: dict):
    if "builtin" in spec and "g" in spec:
        raise ConfigInvalid("family: give either builtin or g, not both")
    if "builtin" in spec:
        g = BUILTIN_G[spec["builtin"]]
        name = spec["builtin"]
    elif "g" in spec:
        g = _g_poly(spec["g"])
        name = "shear"
    else:
        raise ConfigInvalid("family needs builtin or g")
    drifts = [_g_poly(spec[k]) if k in spec else None for k in ("drift_q", "drift_p")]
    if g.nvars == 2 and any(d is not None and d.nvars == 3 for d in drifts):
        g = Polynomial(3, {e + (0,): c for e, c in g.terms.items()})
    if g.nvars == 3:
        drifts = [None if d is None else (d if d.nvars == 3 else Polynomial(3, {e + (0,): c for e, c in d.terms.items()}))
                  for d in drifts]
    try:
        fam = shear_family(g, drifts[0], drifts[1], name=name)
    except ValueError as exc:
        raise ConfigInvalid(f"family: {exc}") from exc
    if "theta" in spec and "theta_deg" in spec:
        raise ConfigInvalid("family: give either theta (radians) or theta_deg, not both")
    theta = float(spec["theta"]) if "theta" in spec else math.radians(spec.get("theta_deg", 0.0))
    return rotated_conjugate(fam, theta) if theta else fam


def _g_poly(monomials) -> Polynomial:
    if any(m.get("k", 0) for m in monomials):
        return Polynomial.from_monomials(3, [((m["i"], m["j"], m.get("k", 0)), m["c"]) for m in monomials])
    return Polynomial.from_monomials(2, [((m["i"], m["j"]), m["c"]) for m in monomials])


def build_system(spec) -> HamiltonianSystem:
    if isinstance(spec, dict):
        return demo_potential(spec.get("lambda", 1.0), spec.get("omega", 1.2), spec.get("alpha", 1.5))
    try:
        return HamiltonianSystem(potential_from_monomials(spec), name="potential")
    except CrossbifError as exc:
        raise ConfigInvalid(f"potential: {exc}") from exc


def build_term(spec: dict) -> PerturbationTerm:
    if "monomials" in spec:
        return PerturbationTerm.from_monomials(spec["monomials"], name=spec["name"])
    try:
        return PerturbationTerm.named(spec["name"])
    except KeyError as exc:
        raise ConfigInvalid(f"perturbation: {exc.args[0]}") from exc


# -- modes ------------------------------------------------------------------------


def _tols(cfg) -> Tolerances:
    return Tolerances().updated(**cfg.get("tolerances", {}))


def _section(cfg, system):
    y0 = cfg.get("section_y0")
    return SectionSpec(find_well(system) if y0 is None else float(y0))


def run_classify(cfg):
    fam = build_family(cfg["family"])
    pt = list(cfg["point"])
    if "seed_eps" in cfg:
        pt[2] = cfg["seed_eps"]
    tols = _tols(cfg)
    if fam.two_param:
        slice_rep = classify(fam.slice(0.0), pt, tols)
        out = {"classification": slice_rep.to_dict()}
        if slice_rep.kind.is_cross:
            out["destruction"] = destruction_check_map(fam, pt, tols=tols).to_dict()
        return out, None
    return {"classification": classify(fam, pt, tols).to_dict()}, None


def run_continue(cfg):
    fam = build_family(cfg["family"])
    if fam.two_param:
        fam = fam.slice(0.0)
    tols = _tols(cfg)
    seed = list(cfg["seed"])
    if "seed_eps" in cfg:
        x = newton_fixed_point(fam, cfg["seed_eps"], seed[:2], tols.fixed_point)
        seed = [x[0], x[1], cfg["seed_eps"]]
    branch = continue_branch(fam, seed, cfg["eps_range"], cfg["step"], tols.fixed_point)
    trace_on_branch(fam, branch)
    crossings = find_trace2_crossings(fam, branch, tols.trace, tols)
    payload = {
        "samples": len(branch),
        "boundary": branch.boundary,
        "flat_trace": branch.flat_trace,
        "crossings": [c.to_dict() for c in crossings],
    }
    if cfg.get("split", False):
        checks = []
        for c in crossings:
            if c.report is None or not c.report.kind.is_cross:
                continue
            A, B = split_cross_branches(fam, c.point, tols=tols)
            entry = {"eps_star": c.eps_star, "tr_prime_A": A.fits["tr_prime"]}
            if B.parametrization == "by_eps":
                entry["tr_prime_B"] = B.fits["tr_prime"]
                entry["prop3_residual"] = verify_prop3(fam, A, B)
            else:
                res, trb = verify_prop4(fam, A, B)
                entry["tr_prime_B_limit"] = trb
                entry["eps_B_second_fit"] = B.fits["eps_B_second"]
                entry["prop4_residual"] = res
            checks.append(entry)
        payload["branch_checks"] = checks
    rows = [(r[0], r[1], r[2], t) for r, t in zip(branch.samples, branch.trace)]
    return payload, (BRANCH_HEADER, rows)


def run_scan(cfg):
    system = build_system(cfg["potential"])
    section = _section(cfg, system)
    scan = libration_branch_scan(system, cfg["E0"], cfg["eps_range"], cfg["n"], section,
                                 classify_crossings=cfg.get("classify", True), tols=_tols(cfg))
    payload = {
        "system": system.name,
        "section_y0": section.y0,
        "samples": len(scan.rows),
        "boundary": scan.boundary,
        "flat_trace": scan.flat_trace,
        "crossings": [c.to_dict() for c in scan.crossings],
    }
    return payload, (SCAN_HEADER, list(scan.csv_rows()))


def _energy(cfg):
    return cfg["E0"] + cfg.get("seed_eps", cfg.get("eps", 0.0))


def run_monodromy(cfg):
    system = build_system(cfg["potential"])
    section = _section(cfg, system)
    E = _energy(cfg)
    orbit = find_libration(system, E, section)
    mono = hill_fundamental(orbit)
    payload = {
        "system": system.name,
        "E": E,
        "section_y0": section.y0,
        "T": orbit.T,
        "T_quadrature": orbit.quadrature_period(),
        "turning_points": [orbit.y1, orbit.y2],
        "monodromy": mono.to_dict(),
        "matrix": mono.matrix.tolist(),
    }
    if cfg.get("fd_check", False):
        fam = poincare_family(system, E, section, cfg.get("chart_radius"))
        J = fam.jet((0.0, 0.0, 0.0), order=1, method="fd").jacobian()
        payload["fd_jacobian"] = J.tolist()
        payload["fd_deviation"] = float(np.max(np.abs(J - mono.matrix)))
    return payload, None


def run_perturb(cfg):
    system = build_system(cfg["potential"])
    section = _section(cfg, system)
    if "crossing" in cfg:
        cr = cfg["crossing"]
        scan = libration_branch_scan(system, cfg["E0"], cr["eps_range"], cr["n"], section,
                                     classify_crossings=False)
        idx = cr.get("index", 0)
        if idx >= len(scan.crossings):
            raise CrossbifError(f"crossing index {idx} not found ({len(scan.crossings)} crossings)")
        E = cfg["E0"] + scan.crossings[idx].eps_star
    else:
        E = _energy(cfg)
    orbit = find_libration(system, E, section)
    hill = hill_fundamental(orbit)
    reports = []
    for spec in cfg["perturbations"]:
        term = build_term(spec)
        rep = perturbation_report(orbit, hill, term)
        reports.append({"name": term.name, "cross_preserving": is_cross_preserving(term), **rep.to_dict()})
    payload = {
        "system": system.name,
        "E": E,
        "section_y0": section.y0,
        "monodromy": hill.to_dict(),
        "perturbations": reports,
    }
    return payload, None


RUNNERS = {
    "classify-map": run_classify,
    "continue": run_continue,
    "libration-scan": run_scan,
    "monodromy": run_monodromy,
    "perturb-check": run_perturb,
}


# -- output ---------------------------------------------------------------------


def _clean(obj):
    """Make a payload JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v + 0.0 if math.isfinite(v) else repr(v)
    return obj


def render_report(cfg: dict, payload: dict) -> str:
    doc = {"schema": SCHEMA_TAG, "version": __version__, "mode": cfg["mode"], "config": cfg,
           "result": payload}
    return json.dumps(_clean(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def render_csv(header: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header.split(","))
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: dict, out_dir) -> dict:
    """Execute a validated config and write its report (and CSV, if any) into ``out_dir``."""
    payload, table = RUNNERS[cfg["mode"]](cfg)
    out = Path(out_dir)
    outputs = cfg.get("outputs", {})
    report_path = out / outputs.get("report", "report.json")
    if table is not None:
        csv_name = outputs.get("csv", "branch.csv" if cfg["mode"] == "continue" else "scan.csv")
        payload["csv"] = csv_name
        atomic_write(out / csv_name, render_csv(*table))
    atomic_write(report_path, render_report(cfg, payload))
    return payload


def _fail(code: str, message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}, sort_keys=True) + "\n")
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="crossbif", description="Cross-bifurcations of symplectic map families.")
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--seed-eps", type=float, default=None, help="override the parameter value of the seed")
    parser.add_argument("--tol", action="append", default=[], metavar="NAME=VAL", help="tolerance override")
    parser.add_argument("-v", "--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.mode, args.tol, args.seed_eps)
        run(cfg, args.out)
    except ConfigInvalid as exc:
        return _fail("config_invalid", str(exc), 2)
    except CrossbifError as exc:
        return _fail(exc.code, str(exc), 3)
    except (ValueError, ArithmeticError) as exc:
        return _fail("numerical", f"{type(exc).__name__}: {exc}", 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())
