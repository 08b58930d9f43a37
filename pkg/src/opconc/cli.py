"""Command-line front end.

    opconc bound|invert|simulate|enumerate|verify|compare --config FILE [--out DIR] [--threads N] [--suite NAME]

Exit codes: 0 success, 1 a checked assertion failed, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from opconc import bounds, compare, mc, suites
from opconc.bounds import Mode, VarianceProxy
from opconc.ensembles import ensemble_from_json, theoretical_params
from opconc.errors import OpconcError
from opconc.martingale import MartingaleBoundInput, freedman_bound_grid_min
from opconc.policy import NumericPolicy, load_policy_from_env, policy_override
from opconc.psi import PsiFn
from opconc.specmat import SymMatrix

COMMANDS = ("bound", "invert", "simulate", "enumerate", "verify", "compare")

# -- schemas -------------------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT1 = {"type": "integer", "minimum": 1}
_GRID = {"type": "array", "items": _NUM}
_MATRIX = {
    "type": "object",
    "properties": {"dim": _INT1, "rows": {"type": "array", "items": {"type": "array", "items": _NUM}}},
    "required": ["dim", "rows"],
    "additionalProperties": False,
}
_PSI = {
    "type": "object",
    "properties": {"kind": {"enum": ["normal", "poisson", "gamma", "exponential"]},
                   "c": _POS, "nu": _POS, "alpha": _POS, "sigma_sq": _POS},
    "required": ["kind"],
    "additionalProperties": False,
}
_POLICY = {
    "type": "object",
    "properties": {name: _NUM for name in NumericPolicy.__dataclass_fields__},
    "additionalProperties": False,
}
_ENSEMBLE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["rademacher", "gaussian", "bounded_covariance", "cond_sym_martingale"]},
        "seed_root": {"type": "integer", "minimum": 0},
        "coeffs": {"type": "array", "items": _MATRIX, "minItems": 1},
        "repeat": _INT1,
        "pop_cov": _MATRIX,
        "clip": _POS,
        "base": _MATRIX,
        "drive": {"type": "number", "minimum": 0},
        "n": _INT1,
    },
    "required": ["kind", "seed_root"],
    "additionalProperties": False,
}
_STATISTIC = {
    "oneOf": [
        {"enum": ["sup_maxeig", "sup_opnorm"]},
        {"type": "object",
         "properties": {"kind": {"const": "joint_freedman"}, "sigma_sq": _POS, "v_kind": {"type": "string"}},
         "required": ["kind", "sigma_sq", "v_kind"], "additionalProperties": False},
    ]
}
_BOUND_KINDS = ["master", "hoeffding", "subgaussian", "bennett", "bernstein", "subexponential"]
_MODES = {"type": "array", "items": {"enum": ["maxeig", "opnorm"]}}


def _obj(properties: dict, required: Sequence[str] = ()) -> dict:
    return {"type": "object", "properties": {**properties, "policy": _POLICY},
            "required": list(required), "additionalProperties": False}


SCHEMAS = {
    "bound": _obj({"kind": {"enum": _BOUND_KINDS}, "modes": _MODES, "r_grid": _GRID, "trace_V": _NUM,
                   "sigma_sq": _NUM, "V": _MATRIX, "c": _POS, "nu": _POS, "alpha": _POS, "psi": _PSI},
                  ["kind", "r_grid"]),
    "invert": _obj({"n": _INT1, "c": _POS, "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    "V": _MATRIX, "trace_V": _POS, "sigma_sq": _POS,
                    "normalization": {"enum": list(bounds.NORMALIZATIONS)},
                    "method": {"enum": ["display", "exact"]}},
                   ["n", "c", "delta"]),
    "simulate": _obj({"ensemble": _ENSEMBLE, "n": _INT1, "trials": _INT1,
                      "check": {"enum": ["tail", "submartingale", "supermartingale", "coverage"]},
                      "r_grid": _GRID, "statistic": _STATISTIC,
                      "bound": {"enum": _BOUND_KINDS + ["freedman", "none"]}, "mode": {"enum": ["maxeig", "opnorm"]},
                      "psi": _PSI, "theta": {"type": "number", "minimum": 0}, "f": {"enum": ["phi", "varphi"]},
                      "v_kind": {"type": "string"}, "delta": {"type": "number", "exclusiveMinimum": 0,
                                                              "exclusiveMaximum": 1},
                      "normalization": {"enum": list(bounds.NORMALIZATIONS)}},
                     ["ensemble", "trials"]),
    "enumerate": _obj({"ensemble": _ENSEMBLE, "n": _INT1, "r_grid": _GRID, "statistic": _STATISTIC,
                       "bounds": {"type": "array", "items": {"enum": ["hoeffding", "bennett", "bernstein"]}},
                       "mode": {"enum": ["maxeig", "opnorm"]}},
                      ["ensemble", "r_grid"]),
    "verify": _obj({"suites": {"type": "array", "items": {"enum": list(suites.SUITES)}}}),
    "compare": _obj({"report": {"enum": ["constants", "intrinsic", "martingale"]}, "V": _MATRIX, "d": _INT1,
                     "sigma_sq": _POS, "r_grid": _GRID,
                     "EV_spectrum": {"type": "array", "items": {"type": "number", "minimum": 0}}, "c": _POS}),
}


class ConfigProblem(Exception):
    """Configuration or precondition error surfaced with exit code 2."""


class Report:
    def __init__(self, fields: Sequence[str], rows: list[dict], ok: bool = True, summary: dict | None = None,
                 lines: Sequence[str] = ()):
        self.fields = tuple(fields)
        self.rows = rows
        self.ok = ok
        self.summary = summary or {}
        self.lines = list(lines)


# -- formatting ----------------------------------------------------------------


def fmt(value) -> str:
    """CSV cell: floats to 17 significant digits, '.' decimal separator."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(value)


def to_csv(fields: Sequence[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([fmt(row.get(f)) for f in fields])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def to_json(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- helpers -------------------------------------------------------------------


def _variance(cfg: dict) -> VarianceProxy:
    if "V" in cfg:
        V = SymMatrix.from_json(cfg["V"])
        return VarianceProxy.from_matrix(V, cfg.get("sigma_sq"))
    if "trace_V" in cfg and "sigma_sq" in cfg:
        return VarianceProxy(float(cfg["trace_V"]), float(cfg["sigma_sq"]))
    raise ConfigProblem("give either V or both trace_V and sigma_sq")


def _need(cfg: dict, *names: str) -> None:
    missing = [n for n in names if n not in cfg]
    if missing:
        raise ConfigProblem(f"missing field(s) {missing}")


def _tail_bound(kind: str, vp: VarianceProxy, cfg: dict, r: float, mode: Mode) -> bounds.TailBoundResult:
    if kind == "hoeffding":
        return bounds.hoeffding_bound(vp, r, mode)
    if kind == "subgaussian":
        return bounds.subgaussian_bound(vp, r, mode)
    if kind == "bennett":
        return bounds.bennett_bound(vp, cfg["c"], r, mode)
    if kind == "bernstein":
        return bounds.bernstein_bound(vp, cfg["c"], r, mode)
    if kind == "subexponential":
        return bounds.subexponential_bound(vp, cfg["nu"], cfg["alpha"], r, mode)
    return bounds.master_bound(vp.d_prime, cfg["psi"], vp.sigma_sq, r, mode)


_BOUND_NEEDS = {"bennett": ("c",), "bernstein": ("c",), "subexponential": ("nu", "alpha"), "master": ("psi",)}


# -- commands ------------------------------------------------------------------


def cmd_bound(cfg: dict, args) -> Report:
    kind = cfg["kind"]
    _need(cfg, *_BOUND_NEEDS.get(kind, ()))
    vp = _variance(cfg)
    params = dict(cfg)
    if "psi" in cfg:
        params["psi"] = PsiFn.from_json(cfg["psi"])
    modes = [Mode.parse(m) for m in cfg.get("modes", ["opnorm"])]
    rows = [_tail_bound(kind, vp, params, float(r), m).to_row() for m in modes for r in cfg["r_grid"]]
    return Report(bounds.CSV_FIELDS, rows, summary={"d_prime": vp.d_prime, "sigma_sq": vp.sigma_sq})


INVERT_FIELDS = ("method", "normalization", "n", "delta", "radius")


def cmd_invert(cfg: dict, args) -> Report:
    n, c, delta = int(cfg["n"]), float(cfg["c"]), float(cfg["delta"])
    method = cfg.get("method", "display")
    norm = cfg.get("normalization", "per_sum")
    if "V" in cfg:
        V = SymMatrix.from_json(cfg["V"])
        s2 = float(np.linalg.eigvalsh(V.values)[-1])
        tr = float(np.trace(V.values))
    else:
        _need(cfg, "trace_V", "sigma_sq")
        s2, tr = float(cfg["sigma_sq"]), float(cfg["trace_V"])
    if tr < s2 * (1.0 - 1e-12):
        raise ConfigProblem(f"d′ = {tr / s2:.6g} violates d′ ≥ 1")
    if method == "exact":
        radius = bounds.bernstein_relaxed_radius(n, s2, c, tr, delta)
    else:
        if norm == "per_sample":
            s2, tr = s2 / n, tr / n
        radius = bounds.confidence_radius(n, math.sqrt(s2), c, tr, delta)
    row = {"method": method, "normalization": norm if method == "display" else "", "n": n, "delta": delta,
           "radius": radius}
    return Report(INVERT_FIELDS, [row])


def _cap_trials(cfg: dict, args) -> int:
    trials = int(cfg["trials"])
    if args.max_trials is not None:
        trials = min(trials, args.max_trials)
    return trials


STEP_FIELDS = ("step", "mean", "se", "diff_mean", "diff_se")


def _step_rows(rep: mc.StepReport) -> list[dict]:
    rows = []
    for t in range(rep.means.size):
        rows.append({"step": t, "mean": float(rep.means[t]), "se": float(rep.ses[t]),
                     "diff_mean": float(rep.diff_means[t - 1]) if t else None,
                     "diff_se": float(rep.diff_ses[t - 1]) if t else None})
    return rows


def _simulated_bound(cfg: dict, ens, n: int, stat: mc.Statistic, r: float) -> tuple[str, float | None]:
    kind = cfg.get("bound")
    if kind is None:
        kind = "freedman" if stat.kind == "joint_freedman" else "none"
    if kind == "none":
        return "", None
    params = theoretical_params(ens, n)
    valid = {p.kind for p in params.psi_valid}
    if kind == "freedman":
        if stat.kind != "joint_freedman" or "psi" not in cfg:
            raise ConfigProblem("freedman bound needs the joint_freedman statistic and a psi")
        psi = PsiFn.from_json(cfg["psi"])
        ev = np.linalg.eigvalsh(params.V_n.values)
        return kind, freedman_bound_grid_min(MartingaleBoundInput(tuple(ev), stat.sigma_sq, r, psi))[1]
    need = {"hoeffding": "normal", "subgaussian": "normal", "bennett": "poisson", "bernstein": "gamma",
            "master": cfg.get("psi", {}).get("kind")}.get(kind)
    if kind == "hoeffding" and ens.kind not in ("rademacher", "cond_sym_martingale"):
        raise ConfigProblem("hoeffding bound needs a dominating coefficient sequence (rademacher)")
    if need not in valid:
        raise ConfigProblem(f"{kind} bound does not apply to the {ens.kind} ensemble")
    vp = VarianceProxy(params.trace_V, params.sigma_sq)
    mode = Mode.parse(cfg.get("mode", "maxeig" if stat.kind == "sup_maxeig" else "opnorm"))
    extra = {"c": params.c_bound, "psi": PsiFn.from_json(cfg["psi"]) if "psi" in cfg else None}
    return kind, _tail_bound(kind, vp, extra, r, mode).raw


def cmd_simulate(cfg: dict, args) -> Report:
    ens = ensemble_from_json(cfg["ensemble"])
    n = int(cfg.get("n", ens.length))
    trials = _cap_trials(cfg, args)
    check = cfg.get("check", "tail")
    threads = args.threads
    if check == "tail":
        _need(cfg, "r_grid")
        stat = mc.Statistic.parse(cfg.get("statistic", "sup_opnorm"))
        ests = mc.run_trials(ens, n, trials, cfg["r_grid"], stat, threads=threads)
        kinds_values = [_simulated_bound(cfg, ens, n, stat, e.r) for e in ests]
        if kinds_values and kinds_values[0][1] is not None:
            comps = mc.compare_to_bound(ests, kinds_values[0][0], [v for _, v in kinds_values])
            rows = [c.to_row() for c in comps]
            ok = all(c.status != "FAIL" for c in comps)
            counts = {s: sum(c.status == s for c in comps) for s in ("PASS", "FAIL", "UNVERIFIABLE")}
        else:
            rows = [{**e.to_row(), "bound_kind": "", "bound_value": None, "pass": ""} for e in ests]
            ok, counts = True, {}
        return Report(mc.MC_CSV_FIELDS, rows, ok, {"check": "tail", "trials": trials, **counts})
    if check == "submartingale":
        rep = mc.submartingale_check(ens, n, float(cfg.get("theta", 0.5)), cfg.get("f", "phi"), trials,
                                     threads=threads)
    elif check == "supermartingale":
        _need(cfg, "v_kind", "psi", "theta")
        rep = mc.supermartingale_check(ens, cfg["v_kind"], PsiFn.from_json(cfg["psi"]), float(cfg["theta"]),
                                       trials, n, threads=threads)
    else:
        _need(cfg, "delta")
        cov = mc.coverage_check(ens, n, float(cfg["delta"]), trials, cfg.get("normalization", "per_sum"),
                                threads=threads)
        row = {"radius": cov.radius, "coverage": cov.coverage, "threshold": cov.threshold,
               "trials": cov.trials, "pass": "PASS" if cov.passed else "FAIL"}
        return Report(tuple(row), [row], cov.passed, {"check": "coverage"})
    return Report(STEP_FIELDS, _step_rows(rep), rep.passed,
                  {"check": check, "trials": trials, "worst_z": rep.worst_z, "status": "PASS" if rep.passed else "FAIL"})


ENUM_FIELDS = ("statistic", "r", "p_exact", "bound_kind", "bound_value", "pass")


def cmd_enumerate(cfg: dict, args) -> Report:
    ens = ensemble_from_json(cfg["ensemble"])
    n = int(cfg.get("n", ens.length))
    stat = mc.Statistic.parse(cfg.get("statistic", "sup_opnorm"))
    probs = mc.enumerate_exact(ens, cfg["r_grid"], stat, n=n)
    params = theoretical_params(ens, n)
    vp = VarianceProxy(params.trace_V, params.sigma_sq)
    mode = Mode.parse(cfg.get("mode", "maxeig" if stat.kind == "sup_maxeig" else "opnorm"))
    rows, ok = [], True
    for kind in cfg.get("bounds", ["hoeffding", "bennett"]):
        for r, p in zip(cfg["r_grid"], probs):
            b = _tail_bound(kind, vp, {"c": params.c_bound}, float(r), mode).raw
            passed = p <= b
            ok &= passed
            rows.append({"statistic": stat.label, "r": float(r), "p_exact": p, "bound_kind": kind,
                         "bound_value": b, "pass": "PASS" if passed else "FAIL"})
    return Report(ENUM_FIELDS, rows, ok, {"n": n, "paths": 1 << n})


SUITE_FIELDS = ("suite", "checked", "failures", "worst_point", "worst_excess", "status", "detail")


def cmd_verify(cfg: dict, args) -> Report:
    names = args.suite or cfg.get("suites")
    results = suites.run_suites(names, perturb_phi=args.perturb_phi)
    rows = [r.to_row() for r in results]
    lines = [f"{r.name}: {'PASS' if r.passed else 'FAIL'} ({r.checked} checks"
             + (f", {r.failures} failures; {r.detail}" if not r.passed else "") + ")" for r in results]
    return Report(SUITE_FIELDS, rows, all(r.passed for r in results), lines=lines)


def cmd_compare(cfg: dict, args) -> Report:
    report = cfg.get("report", "constants")
    if report == "constants":
        return Report(compare.CONSTANTS_FIELDS, compare.constants_table())
    if report == "intrinsic":
        _need(cfg, "V", "r_grid")
        V = SymMatrix.from_json(cfg["V"])
        rows = compare.intrinsic_vs_ambient(V, int(cfg.get("d", V.dim)), cfg.get("sigma_sq"), cfg["r_grid"])
        return Report(compare.INTRINSIC_FIELDS, rows)
    _need(cfg, "EV_spectrum", "sigma_sq", "c", "r_grid")
    try:
        rows = compare.martingale_sharpening_report(cfg["EV_spectrum"], cfg["sigma_sq"], cfg["c"], cfg["r_grid"])
    except compare.SharpeningViolation as exc:
        return Report(compare.SHARPENING_FIELDS, [], False, {"violation": str(exc)})
    return Report(compare.SHARPENING_FIELDS, rows)


HANDLERS = {"bound": cmd_bound, "invert": cmd_invert, "simulate": cmd_simulate, "enumerate": cmd_enumerate,
            "verify": cmd_verify, "compare": cmd_compare}


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opconc", description="Matrix concentration bounds and their verification.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--out", type=Path, help="directory for <command>.csv and <command>.json")
    p.add_argument("--threads", type=int, default=1, help="Monte Carlo workers (results do not depend on it)")
    p.add_argument("--suite", action="append", choices=list(suites.SUITES), help="verify: run only this suite")
    p.add_argument("--max-trials", type=int, default=None, help="cap on Monte Carlo trials")
    p.add_argument("--perturb-phi", type=float, default=0.0, help=argparse.SUPPRESS)
    return p


def _error(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}, ensure_ascii=False) + "\n")
    return 2


def _load_config(args) -> dict:
    if args.config is None:
        if args.command in ("verify", "compare"):
            return {}
        raise ConfigProblem(f"{args.command} needs --config")
    try:
        cfg = json.loads(args.config.read_text())
    except OSError as exc:
        raise ConfigProblem(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigProblem(f"config is not valid JSON: {exc}") from None
    jsonschema.validate(cfg, SCHEMAS[args.command])
    return cfg


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        return _error("ConfigError", "--threads must be >= 1")
    try:
        load_policy_from_env()
        cfg = _load_config(args)
        with policy_override(**{k: float(v) for k, v in cfg.pop("policy", {}).items()}):
            report = HANDLERS[args.command](cfg, args)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        return _error("SchemaError", f"{where}: {exc.message}")
    except (ConfigProblem, OpconcError, ValueError, KeyError, TypeError) as exc:
        return _error(type(exc).__name__, str(exc))

    csv_text = to_csv(report.fields, report.rows)
    summary = {"command": args.command, "status": "PASS" if report.ok else "FAIL", "rows": len(report.rows),
               **report.summary}
    for line in report.lines:
        print(line)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"{args.command}.csv").write_text(csv_text)
        (args.out / f"{args.command}.json").write_text(to_json({**summary, "results": report.rows}))
    elif not report.lines:
        sys.stdout.write(csv_text)
    return 0 if report.ok else 1


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
