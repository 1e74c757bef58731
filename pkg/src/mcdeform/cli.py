"""Command line: ``mcdeform {check,cohomology,solve,transfer,regularize} INSTANCE...``.

Exit codes: 0 success, 2 invalid input, 3 a numerical tolerance was missed.
Reports are JSON with sorted keys and numbers rounded to 12 significant
digits, so identical inputs give identical bytes.  Wall-clock timings go to
a ``.timing.json`` sidecar and to stderr, never into the report.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .base import validate
from .cohesive import FLAT_TOL, HOMOTOPY_TOL, RANK_RTOL, FlatnessViolation, NotClosedError
from .deform import (NotHarmonicError, mc_residual, solve_kuranishi)
from .graded import DROP_TOL, GradingError
from .hodge import HARMONIC_RTOL, MetricError, build_hodge
from .io import SchemaError, load_instance
from .transfer import (deformed_connection, intertwining_defect, mc_eval, regularize, strongify,
                       transfer_mc)

EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE = 0, 2, 3

BASE_TOLERANCES = {
    "flatness": FLAT_TOL,
    "obstruction": 1e-9,
    "residual": 1e-9,
    "agreement": 1e-10,
    "homotopy": HOMOTOPY_TOL,
    "family": 1e-9,
    "drop": DROP_TOL,
    "rank_rtol": RANK_RTOL,
    "harmonic_rtol": HARMONIC_RTOL,
}
PROFILES = {"default": 1.0, "strict": 0.1, "loose": 100.0}
SCALED = ("flatness", "obstruction", "residual", "agreement", "homotopy", "family")

COMMANDS = ("check", "cohomology", "solve", "transfer", "regularize")


def tolerances(profile: str) -> dict:
    f = PROFILES[profile]
    return {k: (v * f if k in SCALED else v) for k, v in BASE_TOLERANCES.items()}


def _num(x):
    x = float(x)
    if abs(x) < 1e-13:
        return 0.0
    return float(f"{x:.12e}")


def _clean(obj):
    """Round floats and turn numpy values into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_num(obj.real), _num(obj.imag)]
    return obj


def _entries(arr) -> list:
    """Nonzero entries of a coefficient array as ``[form, row, col, [re, im]]``."""
    arr = np.asarray(arr)
    out = []
    for idx in zip(*np.nonzero(np.abs(arr) > 1e-13)):
        out.append([int(i) for i in idx] + [complex(arr[idx])])
    return out


def _series_report(series) -> list:
    out = []
    for a, x in series.items():
        n = x.norm()
        if n > 0:
            out.append({"index": list(a), "norm": n, "entries": _entries(x.coeffs)})
    return out


def _order_maxima(series) -> dict:
    out = {}
    for a, n in series.norms().items():
        w = str(sum(a))
        out[w] = max(out.get(w, 0.0), n)
    return out


def cmd_check(inst, args, tol):
    base_rep = validate(inst.model.base)
    report = {
        "base_axioms": {k: {"passed": p, "detail": None if d is None else list(d)} for k, (p, d) in base_rep.results.items()},
        "flatness_residual": inst.model.residual,
        "metric_positive": True,
    }
    ok = base_rep.ok and inst.model.residual <= tol["flatness"]
    if inst.homotopy is not None:
        defect = inst.homotopy.defect()
        report["homotopy_defect"] = defect
        ok = ok and all(v <= tol["homotopy"] for v in defect.values())
    if inst.family is not None:
        report["family_flatness_residual"] = inst.family.residual
        report["family_regular"] = inst.family.regular
    report["status"] = "ok" if ok else "failed"
    return report, EXIT_OK if ok else EXIT_INVALID


def cmd_cohomology(inst, args, tol):
    hp = build_hodge(inst.model, inst.metric)
    dims = inst.model.dgla.cohomology_dims()
    harmonic = {str(k): [_entries(b[:, i].reshape(hp.dgla.shape)) for i in range(b.shape[1])]
                for k, b in hp.harmonic_bases.items() if b.shape[1]}
    agree = dims == hp.harmonic_dims
    report = {"cohomology_dims": {str(k): v for k, v in dims.items()},
              "harmonic_dims": {str(k): v for k, v in hp.harmonic_dims.items()},
              "harmonic_bases": harmonic, "harmonic_threshold": hp.tau, "dims_agree": agree}
    return report, EXIT_OK if agree else EXIT_TOLERANCE


def cmd_solve(inst, args, tol):
    name = args.seed or (sorted(inst.seeds)[0] if inst.seeds else None)
    if name is None:
        raise SchemaError("seeds", "instance has no seeds")
    order = args.order or inst.N
    hp = build_hodge(inst.model, inst.metric)
    beta = inst.seed_series(name, order)
    alpha, ob = solve_kuranishi(beta, hp, tol["obstruction"])
    res = mc_residual(alpha)
    first = ob.first_obstructed_order()
    worst_idx, worst = res.worst()
    report = {
        "seed": name,
        "order": order,
        "coefficients": _series_report(alpha),
        "residual_by_order": _order_maxima(res),
        "max_residual": worst,
        "worst_index": None if worst_idx is None else list(worst_idx),
        "obstructions": [{"index": list(a), "norm": n} for a, n in ob.norms.items()],
        "max_obstruction": ob.max_norm(),
        "verdict": ob.verdict(),
    }
    code = EXIT_OK
    if first is None and worst > tol["residual"]:
        code = EXIT_TOLERANCE
    elif first is not None:
        # below the first obstructed order the series must still solve the equation
        below = [n for a, n in res.norms().items() if sum(a) < first]
        if max(below, default=0.0) > tol["residual"]:
            code = EXIT_TOLERANCE
    return report, code


def cmd_transfer(inst, args, tol):
    if inst.homotopy is None:
        raise SchemaError("homotopy", "transfer needs homotopy data")
    data = inst.homotopy.verify(tol["homotopy"])
    name = args.seed or (sorted(inst.series)[0] if inst.series else None)
    if name is None:
        raise SchemaError("series", "instance has no series")
    eta = inst.named_series(name, args.order)
    eps, phi_t = transfer_mc(eta, data)
    via_linfty = mc_eval(data, eta)
    report = {
        "series": name,
        "order": eta.order,
        "eta_residual": mc_residual(eta).max_norm(),
        "eps": _series_report(eps),
        "eps_residual": mc_residual(eps).max_norm(),
        "intertwining_defect": intertwining_defect(phi_t, deformed_connection(eta), deformed_connection(eps)),
        "linfty_agreement": (via_linfty - eps).max_norm(),
    }
    ok = (report["eps_residual"] <= tol["residual"] and report["intertwining_defect"] <= tol["residual"]
          and report["linfty_agreement"] <= tol["agreement"])
    if report["eta_residual"] > tol["residual"]:
        ok = False
    return report, EXIT_OK if ok else EXIT_TOLERANCE


def cmd_regularize(inst, args, tol):
    if inst.family is None:
        raise SchemaError("family", "instance has no family block")
    fam = inst.family
    J, reg = regularize(fam)
    defect = intertwining_defect(J, reg.connection, fam.connection)
    eta = strongify(reg)
    report = {
        "input_irregularity": fam.irregularity(),
        "output_irregularity": reg.irregularity(),
        "conjugation_defect": defect,
        "gauge_terms": [{"form": reg.tbase.labels[r], "end_degree": k, "norm": float(np.linalg.norm(g.to_matrix()))}
                        for r, k, g in J.terms()],
        "strong_series": _series_report(eta),
        "strong_residual": mc_residual(eta).max_norm(),
    }
    ok = max(reg.irregularity(), defect, report["strong_residual"]) <= tol["family"]
    return report, EXIT_OK if ok else EXIT_TOLERANCE


HANDLERS = {"check": cmd_check, "cohomology": cmd_cohomology, "solve": cmd_solve,
            "transfer": cmd_transfer, "regularize": cmd_regularize}


def run_one(command: str, path: str, args) -> tuple[int, str, str]:
    """Process one instance; returns ``(exit code, summary line, timing line)``."""
    path = Path(path)
    tol = tolerances(args.tolerance_profile)
    start = time.perf_counter()
    report = {"command": command, "instance": path.name, "tool_version": __version__, "tolerances": tol,
              "tolerance_profile": args.tolerance_profile}
    try:
        inst = load_instance(path)
        report["digest"] = inst.digest
        body, code = HANDLERS[command](inst, args, tol)
        report.update(body)
    except (SchemaError, GradingError, FlatnessViolation, NotClosedError, MetricError, NotHarmonicError,
            FileNotFoundError) as exc:
        code = EXIT_INVALID
        report["error"] = f"{type(exc).__name__}: {exc}"
    except ValueError as exc:
        code = EXIT_TOLERANCE
        report["error"] = f"{type(exc).__name__}: {exc}"
    report["exit_code"] = code
    elapsed = time.perf_counter() - start

    out_dir = Path(args.out_dir) if args.out_dir else path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{path.stem}.{command}"
    text = json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
    (out_dir / f"{stem}.report.json").write_text(text)
    (out_dir / f"{stem}.timing.json").write_text(json.dumps({"seconds": round(elapsed, 6)}) + "\n")
    summary = report.get("verdict") or report.get("status") or report.get("error") or "done"
    return code, f"{path.name} {command}: {summary} (exit {code})", f"{path.name} {command}: {elapsed:.3f}s"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcdeform", description="Deformations of flat superconnections in finite models.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("instances", nargs="+", help="instance JSON files")
    p.add_argument("--order", type=int, default=None, help="truncation order (defaults to the instance's N)")
    p.add_argument("--seed", default=None, help="seed name for solve, series name for transfer")
    p.add_argument("--out-dir", default=None, help="directory for reports (default: next to each instance)")
    p.add_argument("--batch", action="store_true", help="process instances in parallel worker processes")
    p.add_argument("--tolerance-profile", choices=sorted(PROFILES), default="default")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.order is not None and args.order < 1:
        print("--order must be positive", file=sys.stderr)
        return EXIT_INVALID
    if args.batch and len(args.instances) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(run_one, [args.command] * len(args.instances), args.instances,
                                    [args] * len(args.instances)))
    else:
        results = [run_one(args.command, path, args) for path in args.instances]
    for code, line, timing in results:
        print(line)
        print(timing, file=sys.stderr)
    return max(r[0] for r in results)


if __name__ == "__main__":
    sys.exit(main())
