"""Command-line driver for the analysis pipeline.

Subcommands: ``validate | gkc | reduce | simulate | converge``, each reading a
system file (JSON) and emitting a machine report (JSON), CSV data files, and a
human-readable summary on stdout.

Exit codes: 0 pass, 1 check failed, 2 config/parse error, 3 numerical failure.
The environment variable ``RELAXBC_LOG`` selects the logging verbosity.
Machine reports exclude wall-clock timings so that rerunning with an identical
configuration and seed reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys as _sys

import numpy as np

from . import __version__
from .errors import ConfigError, ParseError, RelaxbcError
from .model import (
    RawSystem,
    check_sk_condition,
    compute_indices,
    load_system,
    validate_structural_stability,
)
from .reduction import derive_all, render_reduced_bc
from .spectral import SamplingSpec, build_kernel_frame, check_gkc
from .sim import Scenario, run_convergence_study, solve_relaxation

log = logging.getLogger("relaxbc")

EXIT_PASS = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


# ---------------------------------------------------------------------------
# artifacts


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2))
        fh.write("\n")


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _provenance(args, config_doc: dict, **extra) -> dict:
    p = {
        "tool": "relaxbc",
        "version": __version__,
        "seed": int(args.seed),
        "config_hash": _config_hash(config_doc),
    }
    p.update(extra)
    return p


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}")


# ---------------------------------------------------------------------------
# scenario files


_WAVEFORMS = {
    "zero": lambda a, f, ph: (lambda t: 0.0 * t),
    "const": lambda a, f, ph: (lambda t: a + 0.0 * t),
    "sin": lambda a, f, ph: (lambda t: a * np.sin(f * t + ph)),
    "cos": lambda a, f, ph: (lambda t: a * np.cos(f * t + ph)),
}


def _make_waveform(spec: dict):
    kind = spec.get("kind")
    if kind not in _WAVEFORMS:
        raise ConfigError(f"unknown waveform kind {kind!r}")
    return _WAVEFORMS[kind](
        float(spec.get("amplitude", 1.0)),
        float(spec.get("frequency", 1.0)),
        float(spec.get("phase", 0.0)),
    )


def _make_profile(spec: dict):
    """Named initial-data profile x -> scalar field."""
    kind = spec.get("kind")
    a = float(spec.get("amplitude", 1.0))
    if kind == "zero":
        return lambda x: 0.0 * np.asarray(x)
    if kind == "bump":
        c = float(spec.get("center", 0.5))
        w = float(spec.get("width", 0.05))
        return lambda x: a * np.exp(-((np.asarray(x) - c) ** 2) / w)
    if kind == "gauss_ramp":
        w = float(spec.get("width", 0.5))
        return lambda x: a * (1.0 - np.asarray(x)) * np.exp(
            -np.asarray(x) ** 2 / w
        )
    raise ConfigError(f"unknown profile kind {kind!r}")


def _load_scenario(path: str, sys_obj) -> tuple[Scenario, dict]:
    doc = _read_json(path)
    for key in ("boundary", "u0", "T"):
        if key not in doc:
            raise ConfigError(f"scenario file is missing field {key!r}")
    idx = compute_indices(sys_obj)
    b_specs = doc["boundary"]
    if not isinstance(b_specs, list) or len(b_specs) != idx.n_plus:
        raise ConfigError(
            f"'boundary' must list {idx.n_plus} waveform specs, one per row of B"
        )
    waves = [_make_waveform(s) for s in b_specs]

    n1 = sys_obj.n - sys_obj.r
    u_specs = doc["u0"]
    if not isinstance(u_specs, list) or len(u_specs) != n1:
        raise ConfigError(f"'u0' must list {n1} profile specs")
    profiles = [_make_profile(s) for s in u_specs]

    v_profiles = None
    if "v0" in doc:
        v_specs = doc["v0"]
        if not isinstance(v_specs, list) or len(v_specs) != sys_obj.r:
            raise ConfigError(f"'v0' must list {sys_obj.r} profile specs")
        v_profiles = [_make_profile(s) for s in v_specs]

    def b(t):
        return np.array([w(t) for w in waves])

    def u0(x):
        x = np.asarray(x)
        return np.column_stack([p(x) for p in profiles])

    v0 = None
    if v_profiles is not None:
        def v0(x):
            x = np.asarray(x)
            return np.column_stack([p(x) for p in v_profiles])

    scenario = Scenario(
        b=b, u0=u0, v0=v0,
        T=float(doc["T"]), x_max=float(doc.get("x_max", 2.0)),
    )
    return scenario, doc


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    doc = _read_json(args.system)
    try:
        sys_obj = load_system(args.system)
    except ParseError:
        raise
    except RelaxbcError as exc:
        report = {
            "passed": False,
            "error": str(exc),
            "provenance": _provenance(args, doc),
        }
        _write_json(os.path.join(args.out, "validate.json"), report)
        print(f"validation FAILED: {exc}")
        return EXIT_CHECK_FAILED

    raw = RawSystem(
        A0=np.eye(sys_obj.n), A=sys_obj.A, Q=sys_obj.Q, B=sys_obj.B,
        d=sys_obj.d, n=sys_obj.n, r=sys_obj.r,
    )
    structural = validate_structural_stability(raw)
    sk = check_sk_condition(sys_obj)

    w, V = np.linalg.eigh(sys_obj.A1)
    scale = max(np.abs(w).max(), 1.0)
    R0 = V[:, np.abs(w) <= 1e-10 * scale]
    br0 = float(np.linalg.norm(sys_obj.B @ R0)) if R0.shape[1] else 0.0
    idx = compute_indices(sys_obj)
    rank_b = int(np.linalg.matrix_rank(sys_obj.B))

    checks = {
        "structural_stability": structural.passed,
        "onsager": structural.onsager,
        "sk_like": sk,
        "br0_zero": br0 <= 1e-10 * max(float(np.linalg.norm(sys_obj.B)), 1.0),
        "rank_b": rank_b == idx.n_plus,
    }
    report = {
        "checks": checks,
        "structural": structural.to_dict(),
        "br0_residual": br0,
        "rank_b": rank_b,
        "indices": {
            "n0": idx.n0, "n_plus": idx.n_plus,
            "n10": idx.n10, "n1_plus": idx.n1_plus,
        },
        "passed": all(checks.values()),
        "provenance": _provenance(args, doc),
    }
    _write_json(os.path.join(args.out, "validate.json"), report)

    for name, ok in checks.items():
        print(f"{name:24s} {'pass' if ok else 'FAIL'}")
    if not checks["rank_b"]:
        print(f"rank(B) = {rank_b} < n_+ = {idx.n_plus}")
    print(f"indices: n0={idx.n0} n+={idx.n_plus} n10={idx.n10} n1+={idx.n1_plus}")
    return EXIT_PASS if report["passed"] else EXIT_CHECK_FAILED


def _sampling_spec(args) -> SamplingSpec:
    if args.resolution <= 0:
        raise ConfigError("sampling resolution must be positive")
    if args.rim_points < 0:
        raise ConfigError("rim point count must be nonnegative")
    return SamplingSpec(
        resolution=args.resolution,
        rim_points=args.rim_points,
        seed=args.seed,
    )


def _run_gkc(args, sys_obj):
    frame = build_kernel_frame(sys_obj)
    return frame, check_gkc(sys_obj, frame, spec=_sampling_spec(args))


def _emit_gkc_csv(args, report, d: int) -> None:
    header = ["re_xi", "im_xi"] + [f"omega{j}" for j in range(1, d)] + [
        "eta", "ratio",
    ]
    rows = [list(pt) + [val] for pt, val in report.ratios]
    _write_csv(os.path.join(args.out, "gkc_samples.csv"), header, rows)


def cmd_gkc(args) -> int:
    doc = _read_json(args.system)
    sys_obj = load_system(args.system)
    _, report = _run_gkc(args, sys_obj)

    out = report.to_dict()
    out["provenance"] = _provenance(args, doc)
    _write_json(os.path.join(args.out, "gkc.json"), out)
    _emit_gkc_csv(args, report, sys_obj.d)

    print(f"GKC sampled minimum ratio: {report.min_ratio:.6g} "
          f"over {report.samples} points "
          f"(eta=inf minimum {report.eta_inf_min_ratio})")
    if report.argmin_point is not None:
        print(f"argmin point: {report.argmin_point.as_tuple()}")
    print(report.note)
    print("result:", "pass" if report.passed else "FAIL")
    return EXIT_PASS if report.passed else EXIT_CHECK_FAILED


def cmd_reduce(args) -> int:
    doc = _read_json(args.system)
    sys_obj = load_system(args.system)
    frame, gkc_report = _run_gkc(args, sys_obj)

    if not gkc_report.passed and not args.force:
        print("GKC sample check failed; refusing to reduce (use --force)")
        out = {
            "gkc": gkc_report.to_dict(),
            "provenance": _provenance(args, doc, forced=False),
        }
        _write_json(os.path.join(args.out, "reduce.json"), out)
        return EXIT_CHECK_FAILED

    pipeline = derive_all(sys_obj, spec=_sampling_spec(args))
    rbc, closure = pipeline.rbc, pipeline.closure

    out = {
        "reduced_bc": rbc.to_dict(),
        "closure": {
            "coefficient": _complex_to_lists(closure.coefficient),
            "condition_number": float(closure.condition_number),
        },
        "gkc": gkc_report.to_dict(),
        "provenance": _provenance(args, doc, forced=bool(args.force)),
    }
    _write_json(os.path.join(args.out, "reduce.json"), out)

    print(render_reduced_bc(sys_obj, rbc))
    print(f"UKC certificate: min ratio {rbc.ukc_min_ratio:.6g} "
          f"over {rbc.ukc_samples} samples")
    print(f"annihilation residual {rbc.annihilation_residual:.3g}, "
          f"zero-speed residual {rbc.p0_residual:.3g}")
    if not gkc_report.passed:
        print("warning: GKC check failed, reduction was forced")
    return EXIT_PASS


def _complex_to_lists(a: np.ndarray):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        if a.size and np.max(np.abs(a.imag)) > 1e-14 * max(np.max(np.abs(a)), 1.0):
            return {"real": a.real.tolist(), "imag": a.imag.tolist()}
        a = a.real
    return a.tolist()


def cmd_simulate(args) -> int:
    doc = _read_json(args.system)
    sys_obj = load_system(args.system)
    scenario, scen_doc = _load_scenario(args.scenario, sys_obj)
    if args.eps <= 0:
        raise ConfigError("epsilon must be positive")

    result = solve_relaxation(sys_obj, scenario, args.eps, dx_max=args.dx_max)
    if not np.all(np.isfinite(result.U)):
        print("simulation produced non-finite values")
        return EXIT_NUMERICAL

    from .sim import l2_error

    norm = l2_error(result.x, result.U, np.zeros_like(result.U))
    report = {
        "eps": float(args.eps),
        "T": result.t_final,
        "steps": result.steps,
        "dt": result.dt,
        "nodes": int(result.x.size),
        "l2_norm": norm,
        "boundary_cond": result.boundary_cond,
        "provenance": _provenance(
            args, {"system": doc, "scenario": scen_doc, "eps": args.eps}
        ),
    }
    _write_json(os.path.join(args.out, "simulate.json"), report)

    _write_csv(
        os.path.join(args.out, "simulate_snapshot.csv"),
        ["x"] + [f"U{k+1}" for k in range(sys_obj.n)],
        np.column_stack([result.x, result.U]).tolist(),
    )
    _write_csv(
        os.path.join(args.out, "simulate_boundary.csv"),
        ["t"] + [f"U{k+1}" for k in range(sys_obj.n)],
        np.column_stack(
            [result.boundary_times, result.boundary_values]
        ).tolist(),
    )
    print(f"eps={args.eps:g}: {result.steps} steps on {result.x.size} nodes, "
          f"final L2 norm {norm:.6g}")
    return EXIT_PASS


def cmd_converge(args) -> int:
    doc = _read_json(args.system)
    sys_obj = load_system(args.system)
    scenario, scen_doc = _load_scenario(args.scenario, sys_obj)
    eps_list = scen_doc.get("epsilons")
    if not eps_list:
        raise ConfigError("scenario file must list nonempty 'epsilons'")
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ConfigError("all epsilons must be positive")
    grid = scen_doc.get("grid", {})

    frame, gkc_report = _run_gkc(args, sys_obj)
    if not gkc_report.passed and not args.force:
        print("GKC sample check failed; refusing to run (use --force)")
        return EXIT_CHECK_FAILED
    pipeline = derive_all(sys_obj, spec=_sampling_spec(args))

    study = run_convergence_study(
        pipeline.sys, pipeline.frame, pipeline.eq, pipeline.data,
        pipeline.rbc, pipeline.closure, scenario,
        eps_list=eps_list,
        dx_max=float(grid.get("dx_max", 5e-4)),
        equilibrium_dx=float(grid.get("equilibrium_dx", 1e-4)),
    )

    threshold = args.threshold
    if args.negative_control:
        slope = study.control_slope
        passed = slope is not None and slope >= threshold
    else:
        slope = study.slope
        passed = not study.degenerate and slope >= threshold

    out = study.to_dict()
    # timings vary run to run; the machine report must not
    for entry in out["details"].get("per_eps", []):
        entry.pop("seconds", None)
    out["passed"] = bool(passed)
    out["threshold"] = threshold
    out["negative_control"] = bool(args.negative_control)
    out["provenance"] = _provenance(
        args, {"system": doc, "scenario": scen_doc}
    )
    _write_json(os.path.join(args.out, "converge.json"), out)

    header = ["eps", "error", "outer_error"]
    cols = [study.eps, study.errors, study.outer_errors]
    if study.control_errors is not None:
        header.append("control_error")
        cols.append(study.control_errors)
    _write_csv(
        os.path.join(args.out, "converge.csv"),
        header, np.column_stack(cols).tolist(),
    )

    if study.degenerate:
        print("all errors at round-off level; slope degenerate")
    else:
        print(f"fitted slope {study.slope:.4f} "
              f"(95% fit residual {study.fit_residual:.4f}), "
              f"outer-solution slope {study.outer_slope:.4f}")
        if study.control_slope is not None:
            print(f"negative-control slope {study.control_slope:.4f}")
    print("result:", "pass" if passed else "FAIL",
          f"(threshold {threshold})")
    return EXIT_PASS if passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaxbc",
        description="Boundary-condition analysis pipeline for linear "
        "hyperbolic relaxation systems on a half-space.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("system", help="system file (JSON)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=20240817,
                       help="seed for randomized sampling")
        p.add_argument("--jobs", type=int, default=1,
                       help="maximum worker count for sampling/studies")

    def sampling(p):
        p.add_argument("--resolution", type=int, default=24,
                       help="hemisphere grid resolution")
        p.add_argument("--rim-points", type=int, default=64,
                       help="low-discrepancy points near degenerate rims")

    p = sub.add_parser("validate", help="structural admissibility checks")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gkc", help="sample the boundary stability condition")
    common(p)
    sampling(p)
    p.set_defaults(func=cmd_gkc)

    p = sub.add_parser("reduce", help="derive the reduced boundary condition")
    common(p)
    sampling(p)
    p.add_argument("--force", action="store_true",
                   help="reduce even if the GKC sample check fails")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("simulate", help="single stiff half-line run")
    common(p)
    p.add_argument("--scenario", required=True, help="scenario file (JSON)")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--dx-max", type=float, default=1e-3)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("converge", help="error-vs-epsilon study")
    common(p)
    sampling(p)
    p.add_argument("--scenario", required=True, help="scenario file (JSON)")
    p.add_argument("--threshold", type=float, default=0.45,
                   help="pass/fail slope threshold")
    p.add_argument("--force", action="store_true",
                   help="run even if the GKC sample check fails")
    p.add_argument("--negative-control", action="store_true",
                   help="judge the naive-closure control instead "
                   "(expected to fail)")
    p.set_defaults(func=cmd_converge)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("RELAXBC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))

    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=_sys.stderr)
        return EXIT_CONFIG
    if args.jobs > 1:
        log.info("jobs capped at %d; runs at this size are sequential",
                 args.jobs)
    try:
        os.makedirs(args.out, exist_ok=True)
        return args.func(args)
    except (ParseError, ConfigError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except (RelaxbcError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=_sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
