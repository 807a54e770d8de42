"""Configuration-driven experiment runner.

Subcommands: run, covariance, counterexample, plotdata, validate-config.
Configs are single JSON documents validated against the schema published
in schema/experiment_config.schema.json; unknown keys are rejected
outright (silent typos destroy physics runs).

Exit codes: 0 pass, 2 comparison failed, 3 regularity invalid (no verdict
possible), 4 configuration error, 5 numerical failure. Structured JSON
errors go to stderr.

Every output file is a pure function of (config, seed): no timestamps or
hostnames are written, and all randomness flows from the root seed via
the spawn-key scheme in the pipeline module.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .asymptotics import (
    dirac_velocity_distribution,
    estimate_asymptotic_measure,
    free_velocity_distribution,
    rotating_trajectory_family,
    scattering_velocity_distribution,
    velocity_measure_at,
    verify_distribution_equality,
)
from .core import EnsembleRun, PoincareElement
from .errors import (
    BohmvelError,
    ConfigurationError,
    NumericalFailureError,
    RegularityError,
)
from .guidance import check_equivariance
from .pipeline import PipelineParams, child_seed, run_guided_pipeline
from .relativity import foliation_sweep, verify_boost_covariance
from .stats import ks_critical_value, ks_distance
from .wavefunction import (
    GridSpec,
    PotentialSpec,
    outgoing_asymptote,
    project_positive_energy,
    superposed_gaussians,
)

EXIT_PASS = 0
EXIT_COMPARISON_FAIL = 2
EXIT_REGULARITY_INVALID = 3
EXIT_CONFIG_ERROR = 4
EXIT_NUMERICAL_FAILURE = 5

ENV_OUT_DIR = "BOHMVEL_OUT_DIR"
ENV_WORKERS = "BOHMVEL_WORKERS"

SYSTEMS = ("free_schrodinger", "potential_schrodinger", "free_dirac")


# ---------------------------------------------------------------------------
# Config validation. The shape below mirrors the published JSON schema; a
# node is (type, validator or nested dict). Unknown keys anywhere fail.

def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigurationError(msg)


def _validate_section(cfg: dict, allowed: dict, path: str) -> None:
    _expect(isinstance(cfg, dict), f"{path} must be an object")
    for key in cfg:
        _expect(key in allowed, f"unknown key {path}.{key}")


def validate_config(cfg: dict) -> dict:
    """Validate and normalize an experiment config; returns the resolved dict."""
    top = {
        "system", "mass", "grid", "packets", "potential", "ensemble",
        "time", "moller", "boosts", "project_positive_energy",
        "thresholds", "seed", "out_dir",
    }
    _validate_section(cfg, {k: None for k in top}, "config")
    _expect("system" in cfg, "config.system is required")
    _expect(cfg["system"] in SYSTEMS, f"config.system must be one of {SYSTEMS}")
    system = cfg["system"]

    mass = float(cfg.get("mass", 1.0))
    _expect(mass > 0, "config.mass must be positive")

    _expect("grid" in cfg, "config.grid is required")
    _validate_section(cfg["grid"], {"n_points": 0, "x_min": 0, "x_max": 0}, "config.grid")
    grid = cfg["grid"]
    _expect(all(k in grid for k in ("n_points", "x_min", "x_max")), "config.grid needs n_points, x_min, x_max")

    _expect("packets" in cfg and isinstance(cfg["packets"], list) and cfg["packets"],
            "config.packets must be a non-empty list")
    for i, pk in enumerate(cfg["packets"]):
        _validate_section(pk, {"x0": 0, "p0": 0, "sigma0": 0, "amplitude": 0}, f"config.packets[{i}]")
        _expect(all(k in pk for k in ("x0", "p0", "sigma0")), f"config.packets[{i}] needs x0, p0, sigma0")
        _expect(pk["sigma0"] > 0, f"config.packets[{i}].sigma0 must be positive")

    if system == "potential_schrodinger":
        _expect("potential" in cfg, "potential_schrodinger needs config.potential")
        _validate_section(
            cfg["potential"],
            {"kind": 0, "height": 0, "width": 0, "center": 0, "strength": 0, "softening": 0},
            "config.potential",
        )
        PotentialSpec.from_dict(cfg["potential"])
    else:
        _expect("potential" not in cfg, f"{system} takes no config.potential")

    ens = cfg.get("ensemble", {})
    _validate_section(ens, {"n_trajectories": 0, "rho_floor": 0, "dt_min": 0, "node_action": 0}, "config.ensemble")
    _expect(int(ens.get("n_trajectories", 10_000)) >= 1, "need at least one trajectory")

    _expect("time" in cfg, "config.time is required")
    _validate_section(
        cfg["time"],
        {"t_max": 0, "dt": 0, "checkpoints": 0, "record_times": 0, "eta_tol": 0},
        "config.time",
    )
    _expect(cfg["time"].get("t_max", 0) > 0, "config.time.t_max must be positive")

    if "moller" in cfg:
        _expect(system == "potential_schrodinger", "config.moller requires the potential system")
        _validate_section(
            cfg["moller"],
            {"extraction_times": 0, "dt": 0, "residual_tol": 0, "interaction_radius": 0},
            "config.moller",
        )

    if "boosts" in cfg:
        _expect(system == "free_dirac", "config.boosts requires the free_dirac system")
        for u in cfg["boosts"]:
            _expect(abs(float(u)) < 1.0, f"boost speed {u} violates |u| < 1")

    thr = cfg.get("thresholds", {})
    _validate_section(thr, {"ks": 0, "w1": 0, "covariance_ks": 0, "equivariance_ks": 0}, "config.thresholds")

    _expect(isinstance(cfg.get("seed", 0), int), "config.seed must be an integer")
    return cfg


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}")
    return validate_config(cfg)


# ---------------------------------------------------------------------------
# Builders shared by the commands.

def _build_state(cfg: dict):
    grid = GridSpec.line(int(cfg["grid"]["n_points"]), float(cfg["grid"]["x_min"]), float(cfg["grid"]["x_max"]))
    mass = float(cfg.get("mass", 1.0))
    kind = "dirac" if cfg["system"] == "free_dirac" else "schrodinger"
    psi = superposed_gaussians(grid, mass, cfg["packets"], kind=kind)
    projection_info = {}
    if kind == "dirac" and cfg.get("project_positive_energy", True):
        psi, discarded = project_positive_energy(psi)
        projection_info["discarded_weight"] = discarded
    return psi, projection_info


def _pipeline_params(cfg: dict, seed: int) -> PipelineParams:
    time_cfg = cfg["time"]
    ens = cfg.get("ensemble", {})
    return PipelineParams(
        n_trajectories=int(ens.get("n_trajectories", 10_000)),
        t_max=float(time_cfg["t_max"]),
        dt=float(time_cfg.get("dt", 0.05)),
        record_times=tuple(time_cfg["record_times"]) if "record_times" in time_cfg else None,
        checkpoints=tuple(time_cfg["checkpoints"]) if "checkpoints" in time_cfg else None,
        eta_tol=float(time_cfg.get("eta_tol", 0.05)),
        rho_floor=float(ens.get("rho_floor", 1e-12)),
        dt_min=float(ens.get("dt_min", 1e-4)),
        node_action=ens.get("node_action", "shrink_dt"),
        seed=seed,
    )


def _quantum_distribution(cfg: dict, psi, mass: float):
    """The quantum-side velocity distribution plus any extraction artifacts."""
    system = cfg["system"]
    if system == "free_schrodinger":
        return free_velocity_distribution(psi, mass), {}
    if system == "free_dirac":
        return dirac_velocity_distribution(psi), {}
    pot = PotentialSpec.from_dict(cfg["potential"])
    mcfg = cfg.get("moller", {})
    t_max = float(cfg["time"]["t_max"])
    extraction = mcfg.get("extraction_times", [t_max / 2.0, 0.75 * t_max, t_max])
    out = outgoing_asymptote(
        psi,
        pot,
        extraction,
        dt=float(mcfg.get("dt", 0.01)),
        interaction_radius=mcfg.get("interaction_radius"),
        residual_tol=float(mcfg.get("residual_tol", 1e-3)),
    )
    artifacts = {
        "moller_residual_curve": out.residual_curve.tolist(),
        "moller_extraction_times": out.extraction_times.tolist(),
        "cauchy_residual": out.cauchy_residual,
        "bound_weight": out.bound_weight,
        "_out_momentum_density": (out.p, out.density),
    }
    return scattering_velocity_distribution(out, mass), artifacts


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_density_csv(path: str, xs, ys, names=("v", "density")) -> None:
    # Trapezoid normalization: integral of the density over this grid is
    # the continuous mass (see the measures docs).
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for x, y in zip(xs, ys):
            fh.write(f"{float(x)!r},{float(y)!r}\n")


def _write_curve_csv(path: str, rows: list[dict], fields: list[str]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(fields) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(row[f])) for f in fields) + "\n")


# ---------------------------------------------------------------------------
# Commands.

def cmd_run(cfg: dict, out_dir: str, seed: int | None) -> int:
    seed = int(cfg.get("seed", 0)) if seed is None else seed
    cfg = dict(cfg)
    cfg["seed"] = seed
    psi, projection_info = _build_state(cfg)
    mass = float(cfg.get("mass", 1.0))
    params = _pipeline_params(cfg, seed)
    potential = (
        PotentialSpec.from_dict(cfg["potential"])
        if cfg["system"] == "potential_schrodinger"
        else PotentialSpec.none()
    )

    result = run_guided_pipeline(psi, potential, params)
    q_dist, q_artifacts = _quantum_distribution(cfg, psi, mass)
    out_density = q_artifacts.pop("_out_momentum_density", None)

    thr = cfg.get("thresholds", {})
    comparison = verify_distribution_equality(
        result.s_plus,
        q_dist,
        seed=seed,
        ks_threshold=thr.get("ks"),
        w1_threshold=thr.get("w1"),
    )

    equivariance = {}
    eq_threshold = thr.get("equivariance_ks")
    for snap, t in zip(result.integration.snapshots, result.integration.times):
        if t > 0:
            equivariance[f"{t:g}"] = check_equivariance(result.integration, snap, float(t))
    order_violations = None
    if psi.spec.dim == 1:
        from .guidance import count_order_violations

        order_violations = count_order_violations(result.integration)

    os.makedirs(out_dir, exist_ok=True)
    run = EnsembleRun(
        config=cfg,
        seed=seed,
        trajectories=result.integration.trajectories,
        diagnostics=result.integration.diagnostics.summary(),
        measures={"s_plus": result.s_plus},
        reports={
            "regularity": result.regularity.to_dict(),
            "comparison": comparison,
            "equivariance": equivariance,
            "projection": projection_info,
            "order_violations": order_violations,
            **q_artifacts,
        },
    )
    run.save(out_dir)

    n_q = comparison["n_q"]
    q_dist.as_measure(n_q, child_seed(seed, 0, 1)).to_csv(os.path.join(out_dir, "q_plus_samples.csv"))
    _write_density_csv(os.path.join(out_dir, "q_plus_density.csv"), q_dist.v, q_dist.density)
    for t in result.integration.times:
        if t > 0:
            velocity_measure_at(result.integration, float(t)).to_csv(
                os.path.join(out_dir, f"s_t_{t:g}.csv")
            )
    if out_density is not None:
        _write_density_csv(
            os.path.join(out_dir, "out_momentum_density.csv"),
            out_density[0],
            out_density[1],
            names=("p", "density"),
        )
    if "moller_residual_curve" in q_artifacts:
        _write_curve_csv(
            os.path.join(out_dir, "moller_residuals.csv"),
            [
                {"T": t, "residual": r}
                for t, r in zip(
                    q_artifacts["moller_extraction_times"][1:],
                    q_artifacts["moller_residual_curve"],
                )
            ],
            ["T", "residual"],
        )

    ok = comparison["pass"] and result.regularity.verdict
    if eq_threshold is not None:
        ok = ok and all(v <= eq_threshold for v in equivariance.values())
    print(json.dumps({
        "out_dir": out_dir,
        "config_hash": _config_hash(cfg),
        "ks": comparison["ks"],
        "w1": comparison["w1"],
        "fraction_converged": result.regularity.fraction_converged,
        "pass": bool(ok),
    }, sort_keys=True))
    if not result.regularity.verdict:
        return EXIT_REGULARITY_INVALID
    return EXIT_PASS if ok else EXIT_COMPARISON_FAIL


def cmd_covariance(cfg: dict, out_dir: str, seed: int | None, workers: int) -> int:
    if cfg["system"] != "free_dirac":
        raise ConfigurationError("covariance runs need system = free_dirac")
    seed = int(cfg.get("seed", 0)) if seed is None else seed
    cfg = dict(cfg)
    cfg["seed"] = seed
    psi, projection_info = _build_state(cfg)
    params = _pipeline_params(cfg, seed)
    boosts = [float(u) for u in cfg.get("boosts", [0.0, 0.2, 0.4])]
    threshold = float(cfg.get("thresholds", {}).get("covariance_ks", 0.03))

    from .pipeline import run_guided_pipeline as _run

    try:
        base = _run(psi, PotentialSpec.none(), params)
        if not base.regularity.verdict:
            raise RegularityError("base run failed the regularity verdict", base.regularity)

        per_boost = []
        for k, u in enumerate(b for b in boosts if b != 0.0):
            rep = verify_boost_covariance(
                psi, u, params, base=base, run_key=k + 1, ks_threshold=threshold
            )
            rep.pop("transported_measure", None)
            rep.pop("boosted_measure", None)
            per_boost.append(rep)

        g_list = [PoincareElement.boost(u, 0, 1) for u in boosts]
        sweep = foliation_sweep(
            psi, g_list, params, workers=workers, ks_threshold=threshold, base=base
        )
    except RegularityError as exc:
        # No verdict is possible; record that explicitly before exiting.
        os.makedirs(out_dir, exist_ok=True)
        _write_json(
            os.path.join(out_dir, "covariance_report.json"),
            {
                "config_hash": _config_hash(cfg),
                "seed": seed,
                "verdict": "invalid",
                "reason": str(exc),
                "regularity": exc.report.to_dict() if exc.report is not None else None,
            },
        )
        raise

    os.makedirs(out_dir, exist_ok=True)
    report = {
        "config_hash": _config_hash(cfg),
        "seed": seed,
        "verdict": "valid",
        "projection": projection_info,
        "covariance_checks": per_boost,
        "sweep": {
            "labels": sweep["labels"],
            "ks_matrix": sweep["ks_matrix"].tolist(),
            "pass": sweep["pass"],
            "ks_threshold": sweep["ks_threshold"],
            "regularity": sweep["regularity"],
        },
    }
    _write_json(os.path.join(out_dir, "covariance_report.json"), report)
    for label, measure in zip(sweep["labels"], sweep["measures"]):
        measure.to_csv(os.path.join(out_dir, f"s_plus_foliation_{label}.csv"))

    ok = sweep["pass"] and all(r["pass"] for r in per_boost)
    print(json.dumps({
        "out_dir": out_dir,
        "pairwise_ks_max": float(np.max(sweep["ks_matrix"])),
        "pass": bool(ok),
    }, sort_keys=True))
    return EXIT_PASS if ok else EXIT_COMPARISON_FAIL


def cmd_counterexample(omega: float, n: int, dim: int, seed: int, out_dir: str) -> int:
    """Stationary instantaneous velocity measure without trajectory-level
    convergence: the rotating family dichotomy."""
    t_pair = (5.0, 10.0)
    checkpoints = np.array([10.0, 20.0, 40.0])
    tol = 0.1
    family = rotating_trajectory_family(
        omega, [0.0, 0.0, 1.0] if dim == 3 else None, n, seed, dim=dim
    )
    s_a = velocity_measure_at(family, t_pair[0])
    s_b = velocity_measure_at(family, t_pair[1])
    ks = ks_distance(s_a, s_b)
    critical = ks_critical_value(n, n, alpha=0.01)
    try:
        _, report = estimate_asymptotic_measure(family, checkpoints, tol)
    except RegularityError as exc:
        report = exc.report
    stationary = bool(np.max(ks) <= critical)
    fraction = report.fraction_converged
    payload = {
        "omega": omega,
        "n": n,
        "dim": dim,
        "seed": seed,
        "s_t_ks_per_axis": [float(x) for x in ks],
        "s_t_times": list(t_pair),
        "ks_critical_alpha_0.01": critical,
        "stationary": stationary,
        "fraction_converged": fraction,
        "convergence_tol": tol,
        "checkpoints": checkpoints.tolist(),
        "note": "n=1 runs carry no stationarity power; interpret KS with care",
    }
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "counterexample_report.json"), payload)
    print(json.dumps({
        "stationary": stationary,
        "fraction_converged": fraction,
        "pass": bool(stationary and (fraction == 0.0 if omega != 0 else fraction == 1.0)),
    }, sort_keys=True))
    return EXIT_PASS


def cmd_plotdata(run_dir: str, out_dir: str | None) -> int:
    """Histogram/CDF/residual-curve CSV bundles from a finished run."""
    if not os.path.isdir(run_dir):
        raise ConfigurationError(f"run directory not found: {run_dir}")
    out_dir = out_dir or os.path.join(run_dir, "plotdata")
    expected = ["manifest.json", "s_plus.csv"]
    missing = [f for f in expected if not os.path.exists(os.path.join(run_dir, f))]
    if missing:
        raise ConfigurationError(f"run directory incomplete, missing: {', '.join(missing)}")
    os.makedirs(out_dir, exist_ok=True)
    from .core import EmpiricalMeasure

    partial = []
    for name in sorted(os.listdir(run_dir)):
        if not name.endswith(".csv") or not (name.startswith("s_") or name.startswith("q_plus_samples")):
            continue
        if name == "q_plus_density.csv":
            continue
        measure = EmpiricalMeasure.from_csv(os.path.join(run_dir, name))
        stem = name[:-4]
        values = measure.samples[:, 0]
        order = np.argsort(values, kind="mergesort")
        cdf_rows = [
            {"v": v, "cdf": c}
            for v, c in zip(values[order], np.cumsum(measure.weights[order]))
        ]
        _write_curve_csv(os.path.join(out_dir, f"{stem}_cdf.csv"), cdf_rows, ["v", "cdf"])
        hist, edges = np.histogram(values, bins=101, weights=measure.weights)
        hist_rows = [
            {"left": edges[i], "right": edges[i + 1], "mass": hist[i]}
            for i in range(hist.size)
        ]
        _write_curve_csv(os.path.join(out_dir, f"{stem}_hist.csv"), hist_rows, ["left", "right", "mass"])
    expected_extras = ["q_plus_density.csv"]
    cfg_path = os.path.join(run_dir, "config.json")
    if os.path.exists(cfg_path):
        with open(cfg_path) as fh:
            if json.load(fh).get("system") == "potential_schrodinger":
                expected_extras.append("moller_residuals.csv")
    for extra in expected_extras:
        src = os.path.join(run_dir, extra)
        if os.path.exists(src):
            with open(src) as fh:
                data = fh.read()
            with open(os.path.join(out_dir, extra), "w") as fh:
                fh.write(data)
        else:
            partial.append(extra)
    if partial:
        print(json.dumps({"out_dir": out_dir, "skipped_missing": partial}, sort_keys=True))
    else:
        print(json.dumps({"out_dir": out_dir}, sort_keys=True))
    return EXIT_PASS


# ---------------------------------------------------------------------------

def _error_payload(exc: Exception) -> str:
    return json.dumps(
        {"error": {"type": type(exc).__name__, "message": str(exc)}}, sort_keys=True
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bohmvel",
        description="Guided-trajectory ensembles and asymptotic velocity experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full ensemble pipeline for one configured system")
    p_cov = sub.add_parser("covariance", help="boost covariance and foliation sweep (Dirac)")
    for p in (p_run, p_cov):
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--workers", type=int, default=None)

    p_ce = sub.add_parser("counterexample", help="rotating-family stationarity dichotomy")
    p_ce.add_argument("--omega", type=float, default=1.0)
    p_ce.add_argument("--n", type=int, default=10_000)
    p_ce.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p_ce.add_argument("--seed", type=int, default=0)
    p_ce.add_argument("--out", default=None)

    p_pd = sub.add_parser("plotdata", help="emit plot-ready CSV bundles from a run directory")
    p_pd.add_argument("--run", required=True)
    p_pd.add_argument("--out", default=None)

    p_vc = sub.add_parser("validate-config", help="schema-check a config and exit")
    p_vc.add_argument("--config", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "validate-config":
            load_config(args.config)
            print(json.dumps({"valid": True, "config": args.config}, sort_keys=True))
            return EXIT_PASS
        if args.command == "plotdata":
            return cmd_plotdata(args.run, args.out)
        if args.command == "counterexample":
            out = args.out or os.environ.get(ENV_OUT_DIR) or "runs/counterexample"
            return cmd_counterexample(args.omega, args.n, args.dim, args.seed, out)
        cfg = load_config(args.config)
        out = args.out or os.environ.get(ENV_OUT_DIR) or cfg.get("out_dir")
        if not out:
            raise ConfigurationError("no output directory (config.out_dir, --out, or env)")
        workers = args.workers or int(os.environ.get(ENV_WORKERS, "1"))
        if args.command == "run":
            return cmd_run(cfg, out, args.seed)
        return cmd_covariance(cfg, out, args.seed, workers)
    except ConfigurationError as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except RegularityError as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_REGULARITY_INVALID
    except NumericalFailureError as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_NUMERICAL_FAILURE
    except BohmvelError as exc:
        print(_error_payload(exc), file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
