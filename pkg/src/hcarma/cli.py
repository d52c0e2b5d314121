"""
Command line entry point: ``hcarma simulate|analyze|validate``.

Exit codes: 0 success, 1 invalid scenario or arguments, 2 numerical
failure or a failed validation check.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .carma import (EXACT_GAUSSIAN, LEFT_POINT, UnstableSystemError, UnsupportedError,
                    char_functional, semimartingale_check, simulate_path, simulate_paths,
                    stationary_covariance, stationary_horizon)
from .discretize import (far_coefficients, far_innovations, far_residual, far_simulate,
                         innovation_covariance)
from .noise import sample_increments
from .operators import DerivationError, NumericalError, derive_B, stability_check
from .scenario import Scenario, ScenarioError, load_scenario
from .semigroup import (MATRIX_EXPONENTIAL, RECURSIVE_SERIES, WAVE_CLOSED_FORM,
                        SeriesTruncationWarning, is_wave_system)

log = logging.getLogger("hcarma")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2

# tolerances of the cross-oracle checks
SEMIGROUP_SERIES_TOL = 1e-6
SEMIGROUP_CLOSED_TOL = 1e-10
SERIES_CHECK_TIMES = (0.1, 0.5)
CLOSED_CHECK_TIMES = (0.1, 0.7, 2.0)
SEMIMARTINGALE_FACTOR = 10.0
FAR_TOL = 1e-10
FAR_STEPS = 50


def atomic_write(path: Path, text: str):
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return "%.17g" % x


def _steps(length: float, dt: float) -> int:
    return int(round(length / dt))


def path_seeds(base_seed: int, n: int) -> list:
    return [base_seed + i for i in range(n)]


def render_csv(paths, burn: int, dt: float) -> str:
    """Long format: one row per time point per path, after ``burn`` steps."""
    buf = io.StringIO()
    n = paths[0].observations.shape[1]
    buf.write(",".join(["path_id", "t"] + [f"x_{k}" for k in range(1, n + 1)]) + "\n")
    for pid, path in enumerate(paths):
        X = path.observations[burn:]
        for i, row in enumerate(X):
            buf.write(f"{pid},{_fmt(i * dt)}," + ",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def manifest(sc: Scenario, n_paths: int) -> dict:
    return {
        "scenario_name": sc.name,
        "config_hash": sc.config_hash(),
        "base_seed": sc.seed,
        "path_count": n_paths,
        "path_seeds": path_seeds(sc.seed, n_paths),
        "tool_version": __version__,
        "versions": {"hcarma": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "scheme": sc.run["scheme"],
        "dt": sc.run["dt"],
        "T": sc.run["T"],
        "burn_in": sc.run["burn_in"],
    }


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- commands -------------------------------------------------------------------

def cmd_simulate(sc: Scenario, out: Path, threads: int = 1) -> int:
    sys_ = sc.build()
    r = sc.run
    dt = r["dt"]
    burn = _steps(r["burn_in"], dt)
    M = _steps(r["T"], dt) + burn
    paths = simulate_paths(sys_, dt, M, sc.seed, r["paths"], r["scheme"], threads)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "paths.csv", render_csv(paths, burn, dt))
    atomic_write(out / "manifest.json", _json(manifest(sc, r["paths"])))
    log.info("wrote %d paths to %s", r["paths"], out / "paths.csv")
    return EXIT_OK


def _complex(z: complex) -> list:
    return [z.real, z.imag]


def default_probes(dim: int) -> list:
    return [list(np.eye(dim)[k]) for k in range(min(dim, 3))]


def analyze_report(sc: Scenario) -> dict:
    sys_ = sc.build()
    r = sc.run
    rep = stability_check(sys_.companion)
    eig = sorted(rep.eigenvalues, key=lambda z: (z.real, z.imag))
    report = {
        "scenario_name": sc.name,
        "config_hash": sc.config_hash(),
        "eigenvalues": [_complex(complex(z)) for z in eig],
        "stable": bool(rep.stable),
        "spectral_abscissa": rep.spectral_abscissa,
    }

    if rep.stable:
        horizon = stationary_horizon(sys_)
        cov = stationary_covariance(sys_, horizon)
        block = {"status": "available", "horizon": horizon,
                 "covariance": cov.matrix.tolist(),
                 "coordinate_covariance": (cov.matrix / cov.domain.weights[None, :]).tolist()}
        if cov.matrix.shape == (1, 1):
            block["variance"] = float(cov.matrix[0, 0])
        report["stationary"] = block
    else:
        try:
            stationary_covariance(sys_)
            reason = "not stable"
        except UnstableSystemError as e:
            reason = str(e)
        report["stationary"] = {"status": "unavailable", "reason": reason}

    if sys_.noise.wiener is not None:
        Q = innovation_covariance(sys_, r["dt"])
        report["innovation_covariance"] = {"status": "available", "delta": r["dt"],
                                           "matrix": Q.matrix.tolist()}
    else:
        report["innovation_covariance"] = {"status": "unavailable",
                                           "reason": "no Wiener component"}

    probes = sc.data["probes"] or default_probes(sys_.U.dim)
    values = []
    for x in probes:
        phi = char_functional(sys_, 0.0, r["T"], x)
        values.append({"x": list(x), "s": 0.0, "t": r["T"], "value": _complex(phi),
                       "modulus": abs(phi)})
    report["char_functional"] = values
    return report


def cmd_analyze(sc: Scenario, out: Path) -> int:
    report = analyze_report(sc)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "report.json", _json(report))
    log.info("wrote %s", out / "report.json")
    return EXIT_OK


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_semigroup(sys_, sc: Scenario) -> dict:
    """Matrix exponential vs recursive series, plus the wave closed form when it applies."""
    ev = sys_.semigroup
    expm_ev = ev.with_method(MATRIX_EXPONENTIAL)
    series = ev.with_method(RECURSIVE_SERIES)
    T = sc.run["T"]
    details = []
    worst, bound = 0.0, 0.0
    for t in sorted({min(t, T) for t in SERIES_CHECK_TIMES}):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SeriesTruncationWarning)
            S, info = series.evaluate_recursive(t, return_info=True)
        dev = _rel(S, expm_ev(t))
        worst = max(worst, dev)
        bound = max(bound, info["remainder_bound"])
        details.append(f"series t={t:g}: {dev:.3e}")
    ok = worst <= SEMIGROUP_SERIES_TOL
    closed = None
    if is_wave_system(sys_.companion):
        closed = 0.0
        wave = ev.with_method(WAVE_CLOSED_FORM)
        for t in CLOSED_CHECK_TIMES:
            closed = max(closed, _rel(wave(t), expm_ev(t)))
        ok = ok and closed <= SEMIGROUP_CLOSED_TOL
        details.append(f"closed form: {closed:.3e} (tol {SEMIGROUP_CLOSED_TOL:g})")
    return {"name": "semigroup", "status": "pass" if ok else "fail", "deviation": worst,
            "tolerance": SEMIGROUP_SERIES_TOL, "remainder_bound": bound,
            "closed_form_deviation": closed, "series_terms": series.series_terms,
            "quadrature_nodes": series.quadrature_nodes, "details": details}


def check_semimartingale(sys_, sc: Scenario) -> dict:
    if sys_.p == 1:
        return {"name": "semimartingale", "status": "skipped (p=1)"}
    if not sys_.is_car():
        return {"name": "semimartingale", "status": "skipped (observation is not P1)"}
    dt = sc.run["dt"]
    M = _steps(sc.run["T"], dt)
    path = simulate_path(sys_, dt, M, np.random.default_rng(sc.seed), LEFT_POINT)
    rep = semimartingale_check(sys_, path)
    tol = SEMIMARTINGALE_FACTOR * dt * rep.scale
    return {"name": "semimartingale", "status": "pass" if rep.max_deviation <= tol else "fail",
            "deviation": rep.max_deviation, "tolerance": tol, "path_scale": rep.scale,
            "derivative_rel_error": rep.derivative_rel_error}


def check_far(sys_, sc: Scenario) -> dict:
    try:
        B = derive_B(sys_.companion)
    except DerivationError as e:
        return {"name": "far_substitution", "status": f"skipped ({e})"}
    delta = sc.run["dt"]
    model = far_coefficients(B, delta)
    rng = np.random.default_rng(sc.seed)
    inc = sample_increments(sys_.noise, delta, rng, size=FAR_STEPS)
    eps = far_innovations(sys_.companion, inc, delta)
    init = rng.standard_normal((B.p, B.space.dim)) * delta**B.p
    xs = far_simulate(model, init, eps, FAR_STEPS)
    res = far_residual(B, xs, delta)
    dev = float(np.max(np.abs(res - eps)) / max(np.max(np.abs(eps)), 1e-300))
    return {"name": "far_substitution", "status": "pass" if dev <= FAR_TOL else "fail",
            "deviation": dev, "tolerance": FAR_TOL, "delta": delta}


def run_validation(sc: Scenario) -> list:
    sys_ = sc.build()
    return [check_semigroup(sys_, sc), check_semimartingale(sys_, sc), check_far(sys_, sc)]


def _line(c: dict) -> str:
    s = f"{c['name']}: {c['status'].upper() if c['status'] in ('pass', 'fail') else c['status']}"
    if "deviation" in c:
        s += f"  deviation={c['deviation']:.3e} tolerance={c['tolerance']:.3e}"
    if "remainder_bound" in c:
        s += f"  remainder_bound={c['remainder_bound']:.3e}"
    if c.get("closed_form_deviation") is not None:
        s += f"  closed_form={c['closed_form_deviation']:.3e}"
    return s


def cmd_validate(sc: Scenario, out: Path | None = None, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    checks = run_validation(sc)
    for c in checks:
        print(_line(c), file=stream)
    ok = all(c["status"] != "fail" for c in checks)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / "validate.json", _json({"scenario_name": sc.name, "passed": ok,
                                                   "checks": checks}))
    return EXIT_OK if ok else EXIT_NUMERICAL


# -- argument handling ------------------------------------------------------------

def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hcarma", description="Hilbert-space CARMA simulation and analysis")
    ap.add_argument("--version", action="version", version=f"hcarma {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, needs_out in (("simulate", True), ("analyze", True), ("validate", False)):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="YAML or JSON scenario file")
        p.add_argument("--out", required=needs_out, type=Path, help="output directory")
        p.add_argument("--seed", type=_seed, help="overrides noise.seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        sc = load_scenario(args.scenario)
        if args.seed is not None:
            sc = sc.with_seed(args.seed)
    except ScenarioError as e:
        print(f"error: invalid scenario: {e}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if args.command == "simulate":
            return cmd_simulate(sc, args.out, args.threads)
        if args.command == "analyze":
            return cmd_analyze(sc, args.out)
        return cmd_validate(sc, args.out)
    except UnsupportedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"error: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
