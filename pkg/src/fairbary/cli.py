"""Command-line front end.

Exit codes: 0 success, 2 usage or schema error, 3 infeasible instance,
4 internal invariant breach. Errors are printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .audit import audit_envy, audit_order
from .classifier import ClassifierError, lp_oracle, optimal_fair_classifier
from .instance import (AUTO, FairInstance, InstanceError, MassBoundError, OmegaSpec, RawInstance,
                       derive, example_spec, instantiate, random_awareness, random_overlap)
from .nestedness import (NESTED, NestednessError, check_nested, equivalence_check,
                         make_grid, potential_diagnostic, regression_from_classifiers)
from .regression import awareness_reference, solve_fair_regression

SCHEMA_VERSION = "v1"
EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_INVARIANT = 0, 2, 3, 4

_atom = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["schema", "mode"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "mode": {"enum": ["raw", "omega"]},
        "raw": {
            "type": "object",
            "required": ["records"],
            "properties": {"records": {"type": "array", "minItems": 1, "items": {
                "type": "array", "minItems": 4, "maxItems": 4,
                "prefixItems": [{"type": ["string", "integer"]}, {"enum": [1, 2]},
                                {"type": "number"}, {"type": "number", "minimum": 0}]}}},
        },
        "omega": {
            "type": "object",
            "required": ["mu_plus", "mu_minus"],
            "properties": {
                "mu_plus": {"type": "array", "minItems": 1, "items": _atom},
                "mu_minus": {"type": "array", "minItems": 1, "items": _atom},
                "d_scale": {"oneOf": [{"const": AUTO}, {"type": "number", "exclusiveMinimum": 0}]},
                "eq_eta": {"type": "number"},
            },
        },
        "metadata": {"type": "object", "additionalProperties": {"type": "string"}},
    },
    "allOf": [
        {"if": {"properties": {"mode": {"const": "raw"}}}, "then": {"required": ["raw"]}},
        {"if": {"properties": {"mode": {"const": "omega"}}}, "then": {"required": ["omega"]}},
    ],
}


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind, self.message = code, kind, message


# instance and result files

def instance_to_json(inst_doc: dict) -> str:
    return json.dumps(inst_doc, indent=1, sort_keys=True)


def omega_document(spec: OmegaSpec, metadata: dict | None = None) -> dict:
    return {"schema": SCHEMA_VERSION, "mode": "omega",
            "omega": {"mu_plus": [list(a) for a in spec.mu_plus_atoms],
                      "mu_minus": [list(a) for a in spec.mu_minus_atoms],
                      "d_scale": spec.d_scale, "eq_eta": spec.eq_eta},
            "metadata": {k: str(v) for k, v in (metadata or {}).items()}}


def raw_document(inst: FairInstance, metadata: dict | None = None) -> dict:
    return {"schema": SCHEMA_VERSION, "mode": "raw",
            "raw": {"records": [[str(x), s, y, p] for x, s, y, p in inst.raw.records]},
            "metadata": {k: str(v) for k, v in (metadata or {}).items()}}


def load_instance(path) -> tuple[FairInstance, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(EXIT_USAGE, "io", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_USAGE, "json", f"malformed JSON in {path}: {exc.msg}") from None
    try:
        jsonschema.validate(doc, INSTANCE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise CliError(EXIT_USAGE, "schema", f"schema violation: {exc.message}") from None
    try:
        if doc["mode"] == "raw":
            inst = derive(RawInstance(tuple(tuple(r) for r in doc["raw"]["records"])))
        else:
            om = doc["omega"]
            spec = OmegaSpec(tuple(map(tuple, om["mu_plus"])), tuple(map(tuple, om["mu_minus"])),
                             om.get("d_scale", AUTO), om.get("eq_eta", 0.0))
            inst = instantiate(spec)
    except MassBoundError as exc:
        raise CliError(EXIT_INFEASIBLE, "infeasible", str(exc)) from None
    except InstanceError as exc:
        code = EXIT_INFEASIBLE if "coincide" in str(exc) else EXIT_USAGE
        raise CliError(code, "instance", str(exc)) from None
    return inst, doc


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_result(path, kind: str, inst: FairInstance, payload: dict, grid=None):
    doc = {
        "schema": SCHEMA_VERSION,
        "kind": kind,
        "provenance": {"instance_hash": inst.digest(), "tool_version": __version__,
                       "grid": grid, "d_scale": inst.scale},
        "payload": payload,
    }
    text = json.dumps(_clean(doc), indent=1, sort_keys=True)
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def load_result(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(EXIT_USAGE, "io", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_USAGE, "json", f"malformed JSON in {path}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA_VERSION or "kind" not in doc:
        raise CliError(EXIT_USAGE, "schema", "not a v1 result file")
    return doc


def _omega_payload(inst: FairInstance) -> dict:
    s = inst.scale
    return {"plus": [[h, d / s, w] for h, d, w in inst.omega_plus.atoms()],
            "minus": [[h, d / s, w] for h, d, w in inst.omega_minus.atoms()],
            "coordinates": "original d (instance d divided by d_scale)"}


def _per_x(inst: FairInstance, values) -> dict:
    return {str(x): v for x, v in zip(inst.x_support, np.asarray(values).tolist())}


def _check(cond: bool, what: str):
    if not cond:
        raise CliError(EXIT_INVARIANT, "invariant", f"invariant breach: {what}")


# subcommands

def cmd_gen(args):
    if args.example is not None:
        spec = example_spec(args.example, args.n)
        doc = omega_document(spec, {"example": args.example, "n_atoms_per_segment": args.n})
    else:
        rng = np.random.default_rng(args.seed)
        if args.random == "awareness":
            inst = random_awareness(rng, args.n, binary=args.binary)
        else:
            inst = random_overlap(rng, args.n, binary=args.binary)
        doc = raw_document(inst, {"random": args.random, "seed": args.seed, "n": args.n})
    text = instance_to_json(doc)
    if args.out in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        Path(args.out).write_text(text + "\n")


def cmd_solve(args):
    inst, _ = load_instance(args.instance)
    sol = solve_fair_regression(inst)
    plan = sol.plan
    _check(np.allclose(np.bincount(plan.rows, plan.flows, len(inst.omega_plus)), inst.omega_plus.w,
                       rtol=0, atol=1e-9), "plan row marginals")
    _check(np.allclose(np.bincount(plan.cols, plan.flows, len(inst.omega_minus)), inst.omega_minus.w,
                       rtol=0, atol=1e-9), "plan column marginals")
    _check(abs(sol.excess_risk_randomized - sol.ot_value) <= 1e-9 * max(1.0, sol.ot_value),
           "randomized risk equals the transport value")
    _check(sol.parity_gap_randomized <= 1e-9, "randomized rule satisfies parity")
    payload = {
        "ot_value": sol.ot_value,
        "excess_risk_randomized": sol.excess_risk_randomized,
        "excess_risk_deterministic": sol.excess_risk_deterministic,
        "parity_gap_randomized": sol.parity_gap_randomized,
        "parity_gap_deterministic": sol.parity_gap_deterministic,
        "barycenter": sol.barycenter.as_pairs(),
        "f_det": _per_x(inst, sol.f_det),
        "plan": [[int(i), int(j), f] for i, j, f in plan.cells],
        "omega": _omega_payload(inst),
        "metadata": sol.metadata,
    }
    if inst.is_awareness():
        payload["awareness_reference"] = _per_x(inst, awareness_reference(inst))
    write_result(args.out, "solve", inst, payload)


def cmd_classify(args):
    inst, _ = load_instance(args.instance)
    c = optimal_fair_classifier(inst, args.y)
    _check(c.parity_gap <= 1e-12, "randomized classifier satisfies parity")
    payload = {
        "y": args.y,
        "kappa": c.kappa, "kappa_orig": c.kappa_orig,
        "interval": {"kappa_minus": c.interval.kappa_minus, "kappa_plus": c.interval.kappa_plus,
                     "kappa_minus_orig": c.interval.kappa_minus_orig,
                     "kappa_plus_orig": c.interval.kappa_plus_orig,
                     "crossing_gap": c.interval.crossing_gap, "regime": c.interval.regime},
        "probs": _per_x(inst, c.probs),
        "parity_gap": c.parity_gap,
        "surrogate_risk": c.surrogate_risk,
        "risk": c.risk,
        "deterministic": {"accept": _per_x(inst, c.det_accept), "parity_gap": c.det_parity_gap,
                          "surrogate_risk": c.det_surrogate_risk},
        "metadata": c.metadata,
    }
    if c.risk is None:
        payload["note"] = "labels are not binary; only the surrogate risk is reported"
    try:
        v, _ = lp_oracle(inst, args.y)
        payload["lp_oracle"] = v
        _check(abs(v - c.surrogate_risk) <= 1e-9, "classifier matches the LP optimum")
    except ClassifierError as exc:
        payload["lp_oracle"] = None
        payload["lp_oracle_skipped"] = str(exc)
    write_result(args.out, "classify", inst, payload)


def parse_grid(text: str):
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise CliError(EXIT_USAGE, "usage", f"grid must be min:max:step, got {text!r}") from None
    return lo, hi, step


def cmd_nested(args):
    inst, _ = load_instance(args.instance)
    if args.grid is None:
        lo, hi, step = float(inst.eta.min()) - 1.0, float(inst.eta.max()) + 1.0, 0.01
    else:
        lo, hi, step = parse_grid(args.grid)
    try:
        make_grid(lo, hi, step)
    except NestednessError as exc:
        raise CliError(EXIT_USAGE, "usage", str(exc)) from None
    rep = check_nested(inst, lo, hi, step)
    eq = equivalence_check(inst, lo, hi, step, report=rep)
    payload = {
        "verdict": rep.verdict,
        "kappa_table": [[k.y, k.kappa_minus, k.kappa_plus, k.kappa_minus_orig, k.kappa_plus_orig,
                         k.crossing_gap, k.regime] for k in rep.kappa_table],
        "kappa_table_columns": ["y", "kappa_minus", "kappa_plus", "kappa_minus_orig",
                                "kappa_plus_orig", "crossing_gap", "regime"],
        "violations": [[str(v.x), v.y, v.y_prime, v.mu_mass, v.mu_plus_mass] for v in rep.violations],
        "violating_mass": rep.violating_mass,
        "violating_plus_mass": rep.violating_plus_mass,
        "excluded_cells": rep.excluded_cells,
        "equivalence": {"nested": eq.nested, "risk_gap": eq.risk_gap,
                        "pushforward_gap": eq.pushforward_gap, "witness_y": eq.witness_y,
                        "suboptimality_margin": eq.suboptimality_margin, "ot_value": eq.ot_value},
        "omega": _omega_payload(inst),
        "metadata": rep.metadata,
    }
    if rep.verdict == NESTED:
        cr = regression_from_classifiers(inst, rep)
        pd = potential_diagnostic(inst, rep)
        payload["f_star"] = _per_x(inst, cr.f_star)
        payload["F"] = cr.F
        payload["potential"] = {"duality_gap_plus": pd.duality_gap_plus,
                                "duality_gap_minus": pd.duality_gap_minus}
        levels = [float(np.quantile(rep.grid, 0.4)), float(np.quantile(rep.grid, 0.6))]
    else:
        levels = [rep.violations[0].y, rep.violations[0].y_prime]
    if args.levels:
        try:
            levels = [float(t) for t in args.levels.split(",")]
        except ValueError:
            raise CliError(EXIT_USAGE, "usage", f"levels must be comma-separated numbers: {args.levels!r}") from None
        if len(levels) != 2:
            raise CliError(EXIT_USAGE, "usage", "exactly two levels are needed")
    snapped = [float(rep.grid[int(np.argmin(np.abs(rep.grid - t)))]) for t in levels]
    payload["levels"] = [[y, rep.kappa_table[rep.index(y)].kappa_plus_orig] for y in snapped]
    if rep.verdict != NESTED:
        fl = rep.flipped(*snapped)
        payload["flipped"] = [[float(inst.eta[k]), float(inst.delta[k] / inst.scale)]
                              for k in np.flatnonzero(fl)]
    write_result(args.out, "nested", inst, payload, grid={"min": lo, "max": hi, "step": step})


def cmd_audit(args):
    inst, _ = load_instance(args.instance)
    res = load_result(args.result)
    if res["provenance"].get("instance_hash") != inst.digest():
        raise CliError(EXIT_USAGE, "usage", "result was produced from a different instance")
    payload = {}
    if res["kind"] == "solve":
        f = res["payload"]["f_det"]
        rep = audit_order(inst, np.array([f[str(x)] for x in inst.x_support]))
        payload["order_f_det"] = {"preserves_order": rep.preserves_order,
                                  "n_violations": rep.n_violations,
                                  "violating_pair_mass": rep.violating_pair_mass,
                                  "witnesses": [[str(t) for t in w[:2]] + list(w[2:])
                                                for w in rep.violating_pairs],
                                  "overlap": rep.overlap, "metadata": rep.metadata}
        if "awareness_reference" in res["payload"]:
            ref = res["payload"]["awareness_reference"]
            r2 = audit_order(inst, np.array([ref[str(x)] for x in inst.x_support]))
            payload["order_awareness_reference"] = {"preserves_order": r2.preserves_order,
                                                    "n_violations": r2.n_violations}
    elif res["kind"] == "classify":
        y = res["payload"]["y"]
        c = optimal_fair_classifier(inst, y)
        env = audit_envy(inst, c, y)
        payload["envy"] = {"case": env.case, "identical": env.identical, "overlap": env.overlap,
                           "masses": {str(k): list(v) for k, v in env.masses.items()},
                           "witnesses": [[str(a), str(b), s] for a, b, s in env.witnesses]}
    else:
        raise CliError(EXIT_USAGE, "usage", f"cannot audit a {res['kind']!r} result")
    write_result(args.out, "audit", inst, payload)


def _plot_series(res: dict, kind: str) -> tuple[list, list]:
    """Return (header, rows) of the plotted data."""
    p = res["payload"]
    if kind in ("omega", "boundary"):
        if "omega" not in p:
            raise CliError(EXIT_USAGE, "usage", "result holds no Omega atoms")
        rows = [["plus", h, d, w] for h, d, w in p["omega"]["plus"]]
        rows += [["minus", h, d, w] for h, d, w in p["omega"]["minus"]]
        if kind == "boundary":
            if "levels" not in p:
                raise CliError(EXIT_USAGE, "usage", "boundary plots need a nested result")
            rows += [["level", y, k, 0.0] for y, k in p["levels"]]
            rows += [["flipped", h, d, 0.0] for h, d in p.get("flipped", [])]
        return ["series", "h", "d", "w_or_kappa"], rows
    if kind == "cdf":
        if "F" not in p:
            raise CliError(EXIT_USAGE, "usage", "cdf plots need a nested result with a NESTED verdict")
        grid = [row[0] for row in p["kappa_table"]]
        return ["y", "F"], [[y, f] for y, f in zip(grid, p["F"])]
    raise CliError(EXIT_USAGE, "usage", f"unknown plot kind {kind!r}")


def _svg(res: dict, kind: str, header, rows, out):
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "fairbary"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    if kind in ("omega", "boundary"):
        for name, color in (("plus", "tab:red"), ("minus", "tab:blue")):
            pts = np.array([r[1:3] for r in rows if r[0] == name])
            ax.scatter(pts[:, 0], pts[:, 1], s=4, color=color, label=f"mu_{name}")
        fl = np.array([r[1:3] for r in rows if r[0] == "flipped"])
        if fl.size:
            ax.scatter(fl[:, 0], fl[:, 1], s=10, color="violet", label="rejected then accepted")
        ds = np.array([r[2] for r in rows if r[0] in ("plus", "minus")])
        dd = np.linspace(ds.min(), ds.max(), 50)
        for _, y, k, _ in (r for r in rows if r[0] == "level"):
            ax.plot(y + k * dd, dd, "k--", lw=1, label=f"y={y:g}, kappa={k:.3g}")
        ax.set_xlabel("eta")
        ax.set_ylabel("delta")
        ax.legend(fontsize=7)
    else:
        arr = np.array(rows, dtype=float)
        ax.step(arr[:, 0], arr[:, 1], where="post")
        ax.set_xlabel("y")
        ax.set_ylabel("F(y)")
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_plot(args):
    res = load_result(args.result)
    header, rows = _plot_series(res, args.kind)
    out = Path(args.out)
    if out.suffix.lower() == ".csv":
        lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
        out.write_text("\n".join(lines) + "\n")
    elif out.suffix.lower() == ".svg":
        _svg(res, args.kind, header, rows, out)
    else:
        raise CliError(EXIT_USAGE, "usage", "plot output must end in .svg or .csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairbary", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fairbary {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write an example or random instance file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--example", type=int, choices=(1, 2))
    src.add_argument("--random", choices=("overlap", "awareness"))
    p.add_argument("--n", type=int, default=200, help="atoms per segment or group (default 200)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--binary", action="store_true", help="binary labels for random instances")
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="optimal fair regression via the barycenter problem")
    p.add_argument("instance")
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("classify", help="optimal fair classifier at level y")
    p.add_argument("instance")
    p.add_argument("--y", type=float, required=True)
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("nested", help="nestedness scan, equivalence and potential checks")
    p.add_argument("instance")
    p.add_argument("--grid", help="min:max:step (write --grid=-2:3:0.01 for a negative min); "
                                  "default [min eta - 1, max eta + 1] with step 0.01")
    p.add_argument("--levels", help="two comma-separated levels y,y' drawn by boundary plots "
                                    "(default: first violation, or the 40%%/60%% grid quantiles)")
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_nested)

    p = sub.add_parser("audit", help="order / envy audit of a solve or classify result")
    p.add_argument("instance")
    p.add_argument("result")
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("plot", help="SVG or CSV figure from a result file")
    p.add_argument("result")
    p.add_argument("--kind", required=True, help="omega, boundary or cdf")
    p.add_argument("-o", "--out", required=True, help="output path ending in .svg or .csv")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        json.dump({"error": {"code": exc.code, "type": exc.kind, "message": exc.message}}, sys.stderr)
        sys.stderr.write("\n")
        return exc.code
    except (InstanceError, NestednessError, ClassifierError) as exc:
        json.dump({"error": {"code": EXIT_USAGE, "type": "validation", "message": str(exc)}}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
