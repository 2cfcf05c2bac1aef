"""Command-line front end.

Every subcommand accepts its options either as flags or through
``--config file.json`` whose keys are the option names (dashes replaced by
underscores); the file is validated against a schema derived from the parser
and unknown keys are rejected. Explicit flags override the file.

Exit status: 0 all checks passed, 1 a check failed, 2 usage or schema error,
3 guard rejection. Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import time
from decimal import Decimal, localcontext
from fractions import Fraction
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from .errors import GuardError

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_GUARD = 0, 1, 2, 3
STOCHASTIC = {"perc-mc", "laces"}
REPORT_COLUMNS = ["manifest", "module", "check", "status", "value", "tolerance"]


class UsageError(Exception):
    """Invalid configuration or input file."""


# ---------------------------------------------------------------- helpers

def _rational(v) -> str:
    f = Fraction(v)
    return f"{f.numerator}/{f.denominator}"


def decimal_string(v, digits: int = 40) -> str:
    """Decimal expansion of a rational (``"n/d"`` or Fraction) to ``digits`` significant digits."""
    f = Fraction(v)
    with localcontext() as ctx:
        ctx.prec = digits
        return format(Decimal(f.numerator) / Decimal(f.denominator), "f" if abs(f) >= 1e-6 or f == 0 else "e")


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return decimal_string(v)
    if isinstance(v, str) and "/" in v:
        try:
            return decimal_string(Fraction(v))
        except (ValueError, ZeroDivisionError):
            return v
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True, default=_json_default)
    return str(v)


def check(module: str, name: str, ok: bool, value=None, tolerance=None) -> dict:
    if isinstance(value, Fraction):
        value = _rational(value)
    elif isinstance(value, (np.floating, np.integer)):
        value = value.item()
    return {"module": module, "check": name, "status": "pass" if ok else "fail",
            "value": value, "tolerance": tolerance}


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba", "networkx", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    from . import __version__
    out["lacekit"] = __version__
    return out


def _json_default(o):
    if isinstance(o, Fraction):
        return _rational(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise UsageError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"malformed JSON in {path}: {e}") from e


def _kernel(args):
    from .lattice import build_kernel, kernel_from_json

    if getattr(args, "kernel", None):
        try:
            return kernel_from_json(_read_json(args.kernel))
        except (ValueError, KeyError, TypeError) as e:
            raise UsageError(f"invalid kernel {args.kernel}: {e}") from e
    if args.L is None or args.d is None:
        raise UsageError("give --kernel or both --L and --d")
    return build_kernel("uniform", args.L, args.d, exclude_origin=bool(getattr(args, "exclude_origin", False)))


def _graph(args):
    from . import perc_exact as pe

    builtin = {"single-bond": pe.single_bond, "line": pe.line_graph, "parallel": pe.parallel_paths,
               "box": pe.box_graph}
    if getattr(args, "graph", None):
        try:
            return pe.FiniteGraph.from_json(_read_json(args.graph))
        except (ValueError, KeyError, TypeError) as e:
            raise UsageError(f"invalid graph {args.graph}: {e}") from e
    name = getattr(args, "builtin", None)
    if name is None:
        raise UsageError("give --graph or --builtin")
    return builtin[name]()


def write_field_csv(path, est) -> None:
    """CSV with columns x1..xd, tau, stderr in torus index order."""
    t = est.field.torus
    coords = t.coords().reshape(-1, t.d)
    tau = est.field.values.ravel()
    err = est.stderr.values.ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(t.d)] + ["tau", "stderr"])
        for c, v, e in zip(coords, tau, err):
            w.writerow([int(a) for a in c] + [repr(float(v)), repr(float(e))])


def read_field_csv(path, side: int | None = None):
    """Load a field written by :func:`write_field_csv` (extra columns ignored)."""
    from .lattice import ScalarField, Torus

    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as e:
        raise UsageError(f"file not found: {path}") from e
    if not rows:
        raise UsageError(f"{path} has no rows")
    xs = sorted(k for k in rows[0] if k.startswith("x") and k[1:].isdigit())
    if not xs or "tau" not in rows[0]:
        raise UsageError(f"{path} needs columns x1..xd and tau")
    d = len(xs)
    pts = np.array([[int(r[f"x{i + 1}"]) for i in range(d)] for r in rows])
    vals = np.array([float(r["tau"]) for r in rows])
    side = side or int(pts.max() - pts.min() + 1)
    torus = Torus(d, side)
    if len(rows) != torus.volume:
        raise UsageError(f"{path} has {len(rows)} rows, expected {torus.volume} for side {side}")
    arr = np.zeros(torus.shape)
    for p_, v in zip(pts, vals):
        arr[torus.index(p_)] = v
    return ScalarField(torus, arr, "mc", True)


# ---------------------------------------------------------------- commands

def cmd_kernel(args):
    from .lattice import verify_kernel_bounds

    k = _kernel(args)
    total = sum(k.weights.values(), Fraction(0))
    sym = all(k.weight(tuple(-c for c in x)) == w for x, w in k.weights.items())
    ir = verify_kernel_bounds(k, args.resolution)
    checks = [check("lattice", "normalized", total == 1, total, "exact"),
              check("lattice", "symmetric", sym),
              check("lattice", "infrared_bounds", not ir["violations"],
                    {"delta2_est": ir["delta2_est"], "delta3_est": ir["delta3_est"]}, "> 0")]
    result = {"kernel": k.to_json(), "sigma2": _rational(k.sigma2), "D0": _rational(k.weight((0,) * k.d)),
              "support_size": len(k.weights), "delta2_est": ir["delta2_est"], "delta3_est": ir["delta3_est"]}
    arts = []
    if args.out:
        _dump(k.to_json(), args.out)
        arts.append(args.out)
    return checks, arts, result


def cmd_greens(args):
    from . import greens as gr
    from .lattice import Torus

    k = _kernel(args)
    torus = Torus(k.d, args.side)
    try:
        res = gr.greens_torus(k, args.mu, torus, image_correct=args.image_correct)
    except gr.GreensError as e:
        raise UsageError(str(e)) from e
    vals = res.field.values
    # the uncorrected mu = 1 field sits zero_mode_shift below the Z^d values
    s0 = float(vals[(0,) * k.d]) + (res.zero_mode_shift if res.mu == 1 and not res.image_corrected else 0.0)
    checks = [check("greens", "origin_at_least_one", s0 >= 1 - 1e-9, s0, ">= 1")]
    if res.mu < 1:
        r = gr.sle_residual(res, k)
        checks.append(check("greens", "generating_identity", r <= 1e-9, r, 1e-9))
    result = {"mu": res.mu, "sigma2": res.sigma2, "zero_mode_shift": res.zero_mode_shift,
              "image_corrected": res.image_corrected, "side": args.side}
    if k.d > 2:
        result["a_d"] = gr.a_d(k.d)
    if res.mu == 1 and k.d > 2:
        rat = gr.asymptote_ratios(res, args.rmin, args.rmax)
        table = []
        for r0 in range(int(math.floor(args.rmin)), int(math.ceil(args.rmax)) + 1):
            sel = (rat["radius"] >= r0) & (rat["radius"] < r0 + 1)
            if sel.any():
                table.append({"radius": r0, "min": float(rat["ratio"][sel].min()),
                              "max": float(rat["ratio"][sel].max()), "sites": int(sel.sum())})
        result["ratio_table"] = table
        if res.image_corrected:
            ok = args.lo <= rat["min"] and rat["max"] <= args.hi
            checks.append(check("greens", "asymptote_ratio", ok, {"min": rat["min"], "max": rat["max"]},
                                [args.lo, args.hi]))
    arts = []
    if args.out:
        res.field.save(args.out)
        arts += [args.out, args.out + ".json"]
    if args.report:
        _dump(result, args.report)
        arts.append(args.report)
    return checks, arts, result


def cmd_laces(args):
    from .laces import selfcheck

    rep = selfcheck(args.max_b, args.trials, args.seed)
    checks = [check("laces", "JK_identity", not rep["failures"], len(rep["failures"]), "exact / 1e-12"),
              check("laces", "lace_count_L1", rep["lace_counts"]["L1_all"], 1, "== 1"),
              check("laces", "lace_count_L2_0_3", rep["lace_counts"]["L2_0_3"] == 3,
                    rep["lace_counts"]["L2_0_3"], "== 3")]
    arts = []
    if args.out:
        _dump(rep, args.out)
        arts.append(args.out)
    return checks, arts, rep


def cmd_enumerate(args):
    from . import enumerate as en

    k = _kernel(args)
    s = en.two_point_series(args.model.upper(), k, args.order, args.radius)
    checks = [check("enumerate", "lattice_symmetric", s.is_symmetric())]
    result = {"model": args.model.upper(), "order": args.order, "sites": len(s.entries),
              "susceptibility": s.total().to_strings()}
    if args.critical:
        est = en.critical_estimate(args.model.upper(), k, args.order)
        result["critical"] = {kk: (_rational(v) if isinstance(v, Fraction) else v) for kk, v in est.items()}
    arts = []
    if args.out:
        s.save(args.out)
        arts.append(args.out)
    return checks, arts, result


def cmd_expand_verify(args):
    from . import enumerate as en
    from .series import SiteSeries

    if args.series:
        try:
            U = SiteSeries.from_json(_read_json(args.series))
        except (ValueError, KeyError, TypeError) as e:
            raise UsageError(f"invalid series {args.series}: {e}") from e
        model, k, order = U.model, U.kernel, U.max_order
    else:
        if not args.model or args.order is None:
            raise UsageError("give --series or --model with --order")
        model, k, order, U = args.model.upper(), _kernel(args), args.order, None
    rep = en.verify_expansion_identity(model, k, order, args.radius, U=U)
    checks = [check("enumerate", f"identity_order_{n}", ok, "exact" if ok else "mismatch", 0)
              for n, ok in sorted(rep.per_order.items())]
    result = {"model": model, "max_order": order, "radius": rep.radius, "ok": rep.ok,
              "sites_checked": rep.sites_checked,
              "first_failure": [str(v) for v in rep.first_failure] if rep.first_failure else None}
    arts = []
    if args.out:
        _dump(result, args.out)
        arts.append(args.out)
    return checks, arts, result


def cmd_perc_exact(args):
    from . import perc_exact as pe

    g = _graph(args)
    kw = {"budget": args.budget} if args.budget else {}
    if args.action == "verify":
        x = None if args.x is None else args.x
        rep = pe.verify_perc_expansion(g, x, args.N, **kw)
        checks = [check("perc_exact", f"identity_N{args.N}", rep.ok,
                        "exact" if rep.ok else rep.first_mismatch, 0)]
        result = rep.to_json()
    else:
        polys = pe.two_point_all(g, g.origin)
        result = {"sites": [list(s) for s in g.sites], "origin": g.origin,
                  "tau": [p_.to_strings() for p_ in polys]}
        checks = [check("perc_exact", "tau_origin_one", polys[g.origin] == pe.ActivityPoly.one(polys[g.origin].max_order))]
    arts = []
    if args.out:
        _dump(result, args.out)
        arts.append(args.out)
    return checks, arts, result


def cmd_perc_mc(args):
    from . import perc_mc as mc
    from .lattice import Torus

    workers = args.workers
    if args.oracle:
        args.graph, args.builtin = (None, args.oracle) if args.oracle in ("single-bond", "line", "parallel", "box") \
            else (args.oracle, None)
        g = _graph(args)
        grid = args.p_grid or [0.2, 0.4, 0.6]
        rep = mc.oracle_comparison(g, grid, args.trials, args.seed, workers)
        worst = max((abs(r["mc"] - r["exact"]) / r["sigma"] for r in rep["rows"] if r["sigma"] > 0), default=0.0)
        checks = [check("perc_mc", "oracle_3sigma", rep["ok"], worst, 3.0)]
        arts = []
        if args.out:
            _dump(rep, args.out)
            arts.append(args.out)
        return checks, arts, {"oracle": rep}
    k = _kernel(args)
    if args.side is None:
        raise UsageError("--side is required for torus runs")
    torus = Torus(k.d, args.side)
    if args.p_grid:
        rep = mc.susceptibility_scan(k, torus, args.p_grid, args.trials, args.seed, args.fraction, workers)
        checks = [check("perc_mc", "chi_monotone", all(a["chi"] <= b["chi"] for a, b in zip(rep["rows"], rep["rows"][1:])))]
        arts = []
        if args.out:
            _dump(rep, args.out)
            arts.append(args.out)
        return checks, arts, rep
    if args.p is None:
        raise UsageError("--p is required")
    try:
        cfg = mc.McConfig(k, torus, args.p, args.trials, args.seed)
    except ValueError as e:
        raise UsageError(str(e)) from e
    est = mc.estimate_two_point(cfg, workers)
    v = est.field.values
    sym = mc.symmetry_check(est)
    checks = [check("perc_mc", "tau_origin_one", v[(0,) * k.d] == 1.0, float(v[(0,) * k.d]), "== 1"),
              check("perc_mc", "values_in_unit_interval", bool((v >= 0).all() and (v <= 1).all())),
              check("perc_mc", "symmetry_4sigma", sym <= 4.0, sym, 4.0)]
    arts = []
    if args.out:
        write_field_csv(args.out, est)
        arts.append(args.out)
    return checks, arts, {"chi": est.chi, "chi_err": est.chi_err, "trials": est.trials, "p": args.p}


def cmd_diagrams(args):
    from . import diagrams as dg
    from .lattice import Torus

    model = args.model.upper()
    if args.kind == "open-S":
        try:
            rep = dg.open_diagram_S(args.q1, args.q2, args.d or 3, args.side)
        except dg.RegimeError as e:
            raise UsageError(str(e)) from e
        ok = math.isfinite(rep["Sbar"]) and rep["relative_change"] <= args.tolerance
        checks = [check("diagrams", "S_constant_stable", ok, rep["relative_change"], args.tolerance)]
    elif args.kind == "conditions":
        line = read_field_csv(args.lines, args.side) if args.lines else \
            dg.power_law_line(Torus(args.d, args.side), args.q).field
        rep = dg.condition_sums(line)
        checks = [check("diagrams", f"{k}_increment_ratio", True, rep["diagnostics"][k]["increment_ratio"], "< 1 converging")
                  for k in ("bubble", "triangle", "square")]
    else:
        if args.lines:
            base = dg.LineField(read_field_csv(args.lines, args.side), "mc", {})
            tl = dg.tilde_line(base, _kernel(args), args.p) if (args.kernel or args.L) else \
                dg.LineField(base.field, "tilde", {})
            names = {"SAW": ("sigma",), "LT": ("rho", "rho_tilde"), "LA": ("rho", "rho_tilde"),
                     "PERC": ("tau", "tau_tilde")}[model]
            lines = {names[0]: base}
            if len(names) > 1:
                lines[names[1]] = tl
            spec = dg.KernelSpec(model, lines)
            if args.q is None:
                raise UsageError("--q (line decay exponent) is needed to weight the growth ratios")
        else:
            if args.q is None or args.d is None or args.side is None:
                raise UsageError("power-law lines need --q, --d and --side")
            k = _kernel(args) if (args.kernel or args.L) else None
            spec = dg.power_law_spec(model, Torus(args.d, args.side), args.q, k, args.p)
        rep = dg.m_recursion(spec, args.N, args.q)
        rep = {kk: v for kk, v in rep.items() if kk != "diagonals"}
        ratios = rep["growth_ratio"]
        ns = sorted(ratios)
        change = abs(ratios[ns[-1]] / ratios[ns[-2]] - 1) if len(ns) >= 2 else 0.0
        checks = [check("diagrams", "nonnegative", rep["nonnegative"]),
                  check("diagrams", "growth_bounded", all(math.isfinite(r) for r in ratios.values()),
                        max(ratios.values()) if ratios else None),
                  check("diagrams", "growth_stable", change <= args.tolerance, change, args.tolerance)]
    arts = []
    if args.report:
        _dump(rep, args.report)
        arts.append(args.report)
    return checks, arts, rep


def cmd_report(args):
    rows = []
    for path in args.manifests:
        doc = _read_json(path)
        if not isinstance(doc, dict) or "checks" not in doc or "command" not in doc:
            raise UsageError(f"{path}: manifest lacks 'command' or 'checks'")
        for c in doc["checks"]:
            missing = {"module", "check", "status"} - set(c)
            if missing:
                raise UsageError(f"{path}: check entry lacks {sorted(missing)}")
            rows.append([str(path), c["module"], c["check"], c["status"],
                         _format_value(c.get("value")), _format_value(c.get("tolerance"))])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    w.writerows(rows)
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    failed = sum(r[3] != "pass" for r in rows)
    width = max([len(r[2]) for r in rows] + [5])
    for r in rows:
        print(f"{r[3].upper():4}  {r[1]:10} {r[2]:{width}}  {r[4]}", file=sys.stderr)
    print(f"{len(rows) - failed}/{len(rows)} checks passed", file=sys.stderr)
    summary = [check("report", "all_pass", failed == 0, failed, 0)]
    return summary, [args.out] if args.out else [], {"rows": len(rows), "failed": failed}


# ---------------------------------------------------------------- parser

def _add_kernel_opts(p):
    p.add_argument("--kernel", help="kernel JSON {profile, L, d, exclude_origin}")
    p.add_argument("--L", type=int, help="spread parameter of the uniform kernel")
    p.add_argument("--d", type=int, help="dimension")
    p.add_argument("--exclude-origin", action="store_true", help="drop the origin from the kernel support")


def build_parser() -> argparse.ArgumentParser:
    from .perc_mc import WORKERS_ENV, default_workers

    ap = argparse.ArgumentParser(prog="lacekit", description="Lace expansion computations at desk scale.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file with option values (keys as option names)")
        p.add_argument("--manifest", help="write a run manifest here")
        return p

    p = add("kernel", cmd_kernel, "Build a step kernel and report its constants.")
    _add_kernel_opts(p)
    p.add_argument("--resolution", type=int, default=64, help="k-grid points per axis for the infrared check")
    p.add_argument("--out", help="kernel JSON output")

    p = add("greens", cmd_greens, "Random-walk Green's function on a torus.")
    _add_kernel_opts(p)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--image-correct", action="store_true", help="remove periodic images (mu = 1)")
    p.add_argument("--rmin", type=float, default=8.0)
    p.add_argument("--rmax", type=float, default=20.0)
    p.add_argument("--lo", type=float, default=0.9, help="lower limit of the asymptote ratio")
    p.add_argument("--hi", type=float, default=1.1, help="upper limit of the asymptote ratio")
    p.add_argument("--out", help="float64 field output (header in <out>.json)")
    p.add_argument("--report", help="JSON report with a_d, sigma2 and the ratio table")

    p = add("laces", cmd_laces, "Lace algebra self-check.")
    p.add_argument("action", choices=["selfcheck"])
    p.add_argument("--max-b", type=int, default=8)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("enumerate", cmd_enumerate, "Exact two-point series by enumeration.")
    _add_kernel_opts(p)
    p.add_argument("--model", choices=["saw", "lt", "la", "rw", "SAW", "LT", "LA", "RW"], default="saw")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--radius", type=int)
    p.add_argument("--critical", action="store_true", help="also solve the truncated critical equation")
    p.add_argument("--out", help="series JSON output")

    p = add("expand-verify", cmd_expand_verify, "Exact check of the expansion identity.")
    _add_kernel_opts(p)
    p.add_argument("--series", help="series JSON from 'enumerate'")
    p.add_argument("--model", choices=["saw", "lt", "la", "rw", "SAW", "LT", "LA", "RW"])
    p.add_argument("--order", type=int)
    p.add_argument("--radius", type=int)
    p.add_argument("--out")

    p = add("perc-exact", cmd_perc_exact, "Exact percolation polynomials on a finite graph.")
    p.add_argument("action", choices=["verify", "two-point"])
    p.add_argument("--graph", help="graph JSON {sites, bonds: [{a, b, prob}], origin, probe}")
    p.add_argument("--builtin", choices=["single-bond", "line", "parallel", "box"])
    p.add_argument("--N", type=int, default=0)
    p.add_argument("--x", type=int, help="target site index (default: all sites)")
    p.add_argument("--budget", type=float, help="work budget in configuration visits")
    p.add_argument("--out")

    p = add("perc-mc", cmd_perc_mc, "Monte Carlo bond percolation.")
    _add_kernel_opts(p)
    p.add_argument("--side", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--p-grid", type=float, nargs="+", help="scan chi and triangle over these p")
    p.add_argument("--fraction", type=float, default=0.1, help="chi / volume threshold of the pc proxy")
    p.add_argument("--oracle", help="graph JSON or builtin name; compare with exact polynomials")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=default_workers(),
                   help=f"worker processes (default from ${WORKERS_ENV}, else 1)")
    p.add_argument("--out", help="CSV (x1..xd, tau, stderr) or JSON for scans and oracle runs")

    p = add("diagrams", cmd_diagrams, "Diagram recursion, open diagrams and condition sums.")
    _add_kernel_opts(p)
    p.add_argument("--kind", choices=["recursion", "open-S", "conditions"], default="recursion")
    p.add_argument("--model", choices=["saw", "lt", "la", "perc", "SAW", "LT", "LA", "PERC"], default="perc")
    p.add_argument("--lines", help="line field CSV (x1..xd, tau)")
    p.add_argument("--q", type=float, help="line decay exponent")
    p.add_argument("--q1", type=float, default=2.8)
    p.add_argument("--q2", type=float, default=1.4)
    p.add_argument("--p", type=float, default=1.0, help="activity for smeared lines")
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--side", type=int)
    p.add_argument("--tolerance", type=float, default=0.25)
    p.add_argument("--report")

    p = add("report", cmd_report, "Aggregate manifests into one CSV table.")
    p.add_argument("manifests", nargs="*")
    p.add_argument("--out")
    return ap


_TYPE_SCHEMA = {int: {"type": "integer"}, float: {"type": "number"}, str: {"type": "string"}}


def config_schema(sub: argparse.ArgumentParser) -> dict:
    """JSON schema for a subcommand's ``--config`` file."""
    props = {"command": {"type": "string"}}
    for a in sub._actions:
        if a.dest in ("help", "config", "func"):
            continue
        if isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            s = {"type": "boolean"}
        else:
            s = dict(_TYPE_SCHEMA.get(a.type or str, {}))
            if a.choices:
                s["enum"] = list(a.choices)
            if a.nargs in ("+", "*"):
                s = {"type": "array", "items": s}
            if a.dest == "seed":
                s = {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}
        props[a.dest] = s
    return {"type": "object", "properties": props, "additionalProperties": False}


def _subparser(ap, name):
    for a in ap._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[name]
    raise KeyError(name)


def parse(argv):
    """Parse ``argv`` applying any ``--config`` file. Returns (namespace, config echo)."""
    ap = build_parser()
    args = ap.parse_args(argv)
    sub = _subparser(ap, args.command)
    if args.config:
        doc = _read_json(args.config)
        try:
            jsonschema.validate(doc, config_schema(sub))
        except jsonschema.ValidationError as e:
            raise UsageError(f"config {args.config}: {e.message}") from e
        if doc.get("command", args.command) != args.command:
            raise UsageError(f"config is for command {doc['command']!r}, not {args.command!r}")
        sub.set_defaults(**{k: v for k, v in doc.items() if k != "command"})
        args = ap.parse_args(argv)
    if args.command in STOCHASTIC and getattr(args, "seed", None) is None:
        raise UsageError(f"{args.command} is stochastic and needs --seed")
    echo = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "manifest")}
    return args, echo


def _error(kind: str, msg: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": msg, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, echo = parse(argv)
    except UsageError as e:
        return _error("usage", str(e), EXIT_USAGE)
    except SystemExit as e:  # argparse usage errors and --help
        return int(e.code or 0)
    start = time.time()
    try:
        checks, arts, result = args.func(args)
    except GuardError as e:
        return _error("guard", str(e), EXIT_GUARD)
    except UsageError as e:
        return _error("usage", str(e), EXIT_USAGE)
    status = "pass" if all(c["status"] == "pass" for c in checks) else "fail"
    manifest = {"command": args.command, "config": echo, "versions": _versions(),
                "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(start)),
                "wall_time": round(time.time() - start, 3), "checks": checks,
                "artifacts": arts, "status": status}
    if args.manifest:
        _dump(manifest, args.manifest)
    if args.command != "report":
        print(json.dumps({"status": status, "checks": checks, "result": result}, indent=1,
                         sort_keys=True, default=_json_default))
    return EXIT_OK if status == "pass" else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
