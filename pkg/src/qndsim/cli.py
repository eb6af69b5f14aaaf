"""Batch front-end: validated JSON configs in, deterministic data files out.

Usage:

    qndsim <experiment> --config <file> [--set key=value]... [--jobs n]

with experiment one of:

    moments      closed-form field moments vs the matrix cross-check path
    sample       Monte Carlo measurement record plus the N/T estimate
    wigner       phase-space grid, Im-axis marginal, reconstructed P(n)
    validate-jj  three-level squeezing run vs the effective decay law

The config is a JSON object. Common keys: "seed" (required integer; all
randomness flows from it), "params" (ProtocolParams fields for the first
three experiments, ThreeLevelParams fields for validate-jj), "output_dir"
(falls back to $QNDSIM_OUTPUT_DIR), "nu_unit" ("rad_per_s" default, or
"hz", applied to params.nu), and optional "sweep": a list of params
overrides fanned out as independent points, each with a seed derived from
the root seed (order-stable, so --jobs parallelism cannot change any
byte). Protocol params accept "e2r" in place of "r".

Unknown keys anywhere are rejected, and every parameter set (including
each sweep point) is validated before any computation starts, so an
invalid config never leaves partial output files. Artifacts are rendered
in memory and written only after the whole run has succeeded, followed by
manifest.json (config echo in canonical form, package version, wall time,
sha256 of every artifact). The echoed config block is itself a valid
config, and --config accepts a manifest file directly, so any output can
be regenerated from its manifest alone.

Exit codes: 0 success, 2 on a validation error, 3 when a computed result
misses the configured numerical tolerance (files are still written so the
failure can be inspected).
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, fock, protocol, sampler, threelevel, wigner

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TOLERANCE = 3

EXPERIMENTS = ("moments", "sample", "wigner", "validate-jj")

_COMMON_KEYS = {"seed", "output_dir", "nu_unit", "params", "sweep"}
_EXPERIMENT_KEYS = {
    "moments": _COMMON_KEYS | {"tolerance"},
    "sample": _COMMON_KEYS | {"shots"},
    "wigner": _COMMON_KEYS | {"grid", "convention", "tolerance", "spacing"},
    "validate-jj": _COMMON_KEYS | {"t_final", "steps", "tolerance", "reference"},
}
_PROTOCOL_KEYS = {"A", "r", "e2r", "N", "nu", "d_b", "d_a"}
_THREELEVEL_KEYS = {
    "g1", "g2", "G3", "Delta", "beta",
    "omega", "omega_i", "d_a", "ratio_min", "pump_detuning",
}
_GRID_KEYS = {"re_min", "re_max", "re_count", "im_min", "im_max", "im_count"}


class ConfigError(ValueError):
    pass


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _check_keys(obj, allowed, path):
    if not isinstance(obj, dict):
        _fail(path, "expected a JSON object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        _fail(path, "unknown key(s) " + ", ".join(repr(k) for k in unknown))


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        _fail(path, "must be finite")
    return value


def _integer(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}")
    return value


def _enum(value, choices, path):
    if value not in choices:
        _fail(path, f"expected one of {sorted(choices)}, got {value!r}")
    return value


def _resolve_r(raw, path):
    """Exactly one of r / e2r; canonical form is r."""
    has_r, has_e = "r" in raw, "e2r" in raw
    if has_r == has_e:
        _fail(path, "exactly one of 'r' and 'e2r' is required")
    if has_r:
        return _number(raw["r"], f"{path}.r")
    e2r = _number(raw["e2r"], f"{path}.e2r")
    if e2r <= 0.0:
        _fail(f"{path}.e2r", "must be > 0")
    return 0.5 * math.log(e2r)


def _normalize_protocol(raw, nu_unit, path, require=True):
    """Canonical ProtocolParams kwargs: r form, nu in rad/s."""
    _check_keys(raw, _PROTOCOL_KEYS, path)
    out = {}
    if require or "r" in raw or "e2r" in raw:
        out["r"] = _resolve_r(raw, path)
    for key in ("A", "N", "nu"):
        if key in raw:
            out[key] = _number(raw[key], f"{path}.{key}")
        elif require:
            _fail(path, f"missing required key {key!r}")
    if "nu" in out and nu_unit == "hz":
        out["nu"] = 2.0 * math.pi * out["nu"]
    for key in ("d_b", "d_a"):
        if key in raw and raw[key] is not None:
            out[key] = _integer(raw[key], f"{path}.{key}")
    return out


def _normalize_threelevel(raw, path, require=True):
    _check_keys(raw, _THREELEVEL_KEYS, path)
    out = {}
    for key in ("g1", "g2", "G3", "Delta", "beta"):
        if key in raw:
            out[key] = _number(raw[key], f"{path}.{key}")
        elif require:
            _fail(path, f"missing required key {key!r}")
    for key in ("omega", "omega_i", "ratio_min", "pump_detuning"):
        if key in raw and raw[key] is not None:
            out[key] = _number(raw[key], f"{path}.{key}")
    if "d_a" in raw and raw["d_a"] is not None:
        out["d_a"] = _integer(raw["d_a"], f"{path}.d_a")
    return out


def _build_params(experiment, kwargs, path):
    cls = threelevel.ThreeLevelParams if experiment == "validate-jj" else protocol.ProtocolParams
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        _fail(path, str(exc))


def resolve_config(experiment, raw):
    """Validate and canonicalize; the result is itself a valid config."""
    _check_keys(raw, _EXPERIMENT_KEYS[experiment], "config")

    if "seed" not in raw:
        _fail("config", "missing required key 'seed' (randomness is never implicit)")
    seed = _integer(raw["seed"], "config.seed")
    if not 0 <= seed < 2**64:
        _fail("config.seed", "must fit in 64 bits")

    output_dir = raw.get("output_dir", os.environ.get("QNDSIM_OUTPUT_DIR"))
    if not output_dir or not isinstance(output_dir, str):
        _fail("config.output_dir", "missing (set it or $QNDSIM_OUTPUT_DIR)")

    nu_unit = _enum(raw.get("nu_unit", "rad_per_s"), {"rad_per_s", "hz"}, "config.nu_unit")
    if "params" not in raw:
        _fail("config", "missing required key 'params'")

    threel = experiment == "validate-jj"
    if threel:
        params = _normalize_threelevel(raw["params"], "config.params")
    else:
        params = _normalize_protocol(raw["params"], nu_unit, "config.params")

    cfg = {
        "experiment": experiment,
        "seed": seed,
        "output_dir": output_dir,
        "nu_unit": "rad_per_s",
        "params": params,
    }

    if "sweep" in raw:
        if not isinstance(raw["sweep"], list) or not raw["sweep"]:
            _fail("config.sweep", "expected a non-empty list of params overrides")
        sweep = []
        for k, entry in enumerate(raw["sweep"]):
            path = f"config.sweep[{k}]"
            if threel:
                sweep.append(_normalize_threelevel(entry, path, require=False))
            else:
                sweep.append(_normalize_protocol(entry, nu_unit, path, require=False))
        cfg["sweep"] = sweep

    if experiment == "moments":
        tol = _number(raw.get("tolerance", 1e-6), "config.tolerance")
        if tol <= 0.0:
            _fail("config.tolerance", "must be > 0")
        cfg["tolerance"] = tol
    elif experiment == "sample":
        if "shots" not in raw:
            _fail("config", "missing required key 'shots'")
        shots = _integer(raw["shots"], "config.shots")
        if shots < 2:
            _fail("config.shots", "must be >= 2")
        cfg["shots"] = shots
    elif experiment == "wigner":
        if "grid" not in raw:
            _fail("config", "missing required key 'grid'")
        _check_keys(raw["grid"], _GRID_KEYS, "config.grid")
        grid = {}
        for key in sorted(_GRID_KEYS):
            if key not in raw["grid"]:
                _fail("config.grid", f"missing required key {key!r}")
            grid[key] = (_integer if key.endswith("count") else _number)(
                raw["grid"][key], f"config.grid.{key}")
        try:
            wigner.GridSpec(**grid)
        except ValueError as exc:
            _fail("config.grid", str(exc))
        cfg["grid"] = grid
        cfg["convention"] = _enum(
            raw.get("convention", "paper"), {"paper", "standard"}, "config.convention")
        cfg["spacing"] = None
        if raw.get("spacing") is not None:
            cfg["spacing"] = _number(raw["spacing"], "config.spacing")
            if cfg["spacing"] <= 0.0:
                _fail("config.spacing", "must be > 0")
        cfg["tolerance"] = None
        if raw.get("tolerance") is not None:
            cfg["tolerance"] = _number(raw["tolerance"], "config.tolerance")
            if cfg["tolerance"] <= 0.0:
                _fail("config.tolerance", "must be > 0")
    else:
        cfg["t_final"] = None
        if raw.get("t_final") is not None:
            cfg["t_final"] = _number(raw["t_final"], "config.t_final")
            if cfg["t_final"] <= 0.0:
                _fail("config.t_final", "must be > 0")
        steps = _integer(raw.get("steps", 100), "config.steps")
        if steps < 1:
            _fail("config.steps", "must be >= 1")
        cfg["steps"] = steps
        tol = _number(raw.get("tolerance", 0.05), "config.tolerance")
        if tol <= 0.0:
            _fail("config.tolerance", "must be > 0")
        cfg["tolerance"] = tol
        cfg["reference"] = _enum(
            raw.get("reference", "fit"), {"fit", "predicted"}, "config.reference")

    # every point must construct cleanly before any computation
    for k, point in enumerate(_point_param_dicts(cfg)):
        path = f"config.sweep[{k}]" if "sweep" in cfg else "config.params"
        q = _build_params(experiment, point, path)
        if experiment == "validate-jj" and cfg["t_final"] is None:
            if q.gamma_eff_predicted <= 0.0:
                _fail(path, "t_final is required when the predicted rate is zero")
    return cfg


def _point_param_dicts(cfg):
    base = cfg["params"]
    if "sweep" not in cfg:
        return [dict(base)]
    out = []
    for override in cfg["sweep"]:
        merged = dict(base)
        merged.update(override)
        out.append(merged)
    return out


def _point_seeds(seed, n_points):
    if n_points == 1:
        return [seed]
    state = np.random.SeedSequence(seed).generate_state(n_points, np.uint64)
    return [int(s) for s in state]


# ---------------------------------------------------------------------------
# per-point execution (top level so --jobs workers can import it)

def _render_json(payload):
    return (json.dumps(payload, indent=2) + "\n").encode()


def _render_csv(write, obj):
    buf = io.StringIO()
    write(obj, buf)
    return buf.getvalue().encode()


def _rel_or_abs(measured, target):
    """Relative error, except absolute against zero targets (the natural
    scale of every gated moment is the vacuum unit)."""
    if target == 0.0:
        return abs(measured)
    return abs(measured - target) / abs(target)


def _run_moments(cfg, point, point_seed):
    p = protocol.ProtocolParams(**point)
    m = protocol.field_moments_numeric(p)
    closed_y, closed_x, closed_vy = protocol.mean_Y(p), protocol.mean_X(p), protocol.var_Y(p)
    err = float(max(
        _rel_or_abs(m.mean_x, closed_x),
        _rel_or_abs(m.mean_y, closed_y),
        _rel_or_abs(m.var_y, closed_vy),
    ))
    ok = bool(err <= cfg["tolerance"])
    payload = {
        "params": point,
        "mean_x": closed_x,
        "mean_y": closed_y,
        "var_y": closed_vy,
        "matrix_mean_x": float(m.mean_x),
        "matrix_mean_y": float(m.mean_y),
        "matrix_var_x": float(m.var_x),
        "matrix_var_y": float(m.var_y),
        "max_rel_error": err,
        "tolerance": cfg["tolerance"],
        "tolerance_ok": ok,
    }
    results = {"mean_y": closed_y, "var_y": closed_vy,
               "max_rel_error": err, "tolerance_ok": ok}
    return {"moments.json": _render_json(payload)}, results


def _run_sample(cfg, point, point_seed):
    p = protocol.ProtocolParams(**point)
    record = sampler.sample_record(p, cfg["shots"], point_seed)
    report = sampler.estimate(record)
    payload = {"params": point, **sampler.report_json_dict(report),
               "misassign_predicted": sampler.misassignment_probability(p)}
    artifacts = {
        "samples.csv": _render_csv(sampler.write_record_csv, record),
        "estimate.json": _render_json(payload),
    }
    results = {k: payload[k] for k in
               ("n_hat", "n_stderr", "misassign_rate", "misassign_predicted", "seed")}
    return artifacts, results


def _run_wigner(cfg, point, point_seed):
    p = protocol.ProtocolParams(**point)
    spec = wigner.GridSpec(**cfg["grid"])
    if cfg["convention"] == "paper":
        grid = wigner.wigner_paper(p, spec)
    else:
        grid = wigner.wigner_numeric_protocol(p, spec)
    marg = wigner.marginal_P(grid)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        hist = wigner.reconstruct_pn(marg, p, spacing=cfg["spacing"])
    overlap = any(issubclass(w.category, wigner.OverlapWarning) for w in caught)
    tv = wigner.total_variation(
        hist.probabilities, fock.thermal_pn(p.N, len(hist.probabilities)))

    meta = {"convention": grid.convention, "seed": point_seed, "params": point}
    artifacts = {
        "wigner_grid.csv": _render_csv(wigner.write_grid_csv, grid),
        "wigner_grid.meta.json": _render_json({"artifact": "wigner_grid.csv", **meta}),
        "marginal.csv": _render_csv(wigner.write_marginal_csv, marg),
        "marginal.meta.json": _render_json(
            {"artifact": "marginal.csv", "raw_integral": float(marg.raw_integral), **meta}),
        "histogram.csv": _render_csv(wigner.write_histogram_csv, hist),
        "histogram.meta.json": _render_json(
            {"artifact": "histogram.csv", "method": hist.method,
             "leakage": hist.leakage, **meta}),
    }
    ok = None if cfg["tolerance"] is None else bool(tv <= cfg["tolerance"])
    results = {"tv_to_thermal": tv, "leakage": hist.leakage,
               "overlap_warning": overlap, "tolerance_ok": ok}
    return artifacts, results


def _run_validate_jj(cfg, point, point_seed):
    q = threelevel.ThreeLevelParams(**point)
    t_final = cfg["t_final"]
    if t_final is None:
        t_final = 0.5 / q.gamma_eff_predicted
    report = threelevel.validate_effective_gamma(q, t_final, steps=cfg["steps"])
    if cfg["reference"] == "predicted":
        ref_err = report.max_rel_error
    else:
        ref = np.exp(-2.0 * report.gamma_eff_fit * report.times)
        ref_err = float(np.max(np.abs(report.varY_full - ref) / ref))
    ok = bool(ref_err <= cfg["tolerance"] and report.leakage_ok)
    payload = threelevel.report_json_dict(report)
    payload.update(reference=cfg["reference"], reference_rel_error=ref_err,
                   tolerance=cfg["tolerance"], tolerance_ok=ok)
    artifacts = {
        "validate_report.json": _render_json(payload),
        "validate_curve.csv": _render_csv(threelevel.write_report_csv, report),
    }
    results = {
        "gamma_eff_predicted": report.gamma_eff_predicted,
        "gamma_eff_fit": report.gamma_eff_fit,
        "max_rel_error": report.max_rel_error,
        "reference_rel_error": ref_err,
        "population_leakage": report.population_leakage,
        "leakage_ok": report.leakage_ok,
        "tolerance_ok": ok,
    }
    return artifacts, results


_RUNNERS = {
    "moments": _run_moments,
    "sample": _run_sample,
    "wigner": _run_wigner,
    "validate-jj": _run_validate_jj,
}


def _compute_point(experiment, cfg, point, point_seed):
    return _RUNNERS[experiment](cfg, point, point_seed)


def _suffixed(name, index, sweep):
    if not sweep:
        return name
    stem, ext = name.split(".", 1)
    return f"{stem}_{index:03d}.{ext}"


def run(experiment, cfg, jobs=1):
    """Execute a resolved config; returns (exit_code, manifest dict)."""
    t0 = time.perf_counter()
    points = _point_param_dicts(cfg)
    seeds = _point_seeds(cfg["seed"], len(points))
    sweep = "sweep" in cfg

    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(points))) as pool:
            futures = [pool.submit(_compute_point, experiment, cfg, pt, s)
                       for pt, s in zip(points, seeds)]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_compute_point(experiment, cfg, pt, s)
                    for pt, s in zip(points, seeds)]

    artifacts = {}
    results = []
    for k, (files, res) in enumerate(outcomes):
        for name, blob in files.items():
            artifacts[_suffixed(name, k, sweep)] = blob
        results.append(res)

    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, blob in artifacts.items():
        (out_dir / name).write_bytes(blob)

    failures = [k for k, res in enumerate(results)
                if res.get("tolerance_ok") is False]
    manifest = {
        "experiment": experiment,
        "package_version": __version__,
        "wall_time_s": time.perf_counter() - t0,
        "config": cfg,
        "results": results if sweep else results[0],
        "tolerance_ok": not failures,
        "artifacts": {
            name: {"sha256": hashlib.sha256(blob).hexdigest(), "bytes": len(blob)}
            for name, blob in artifacts.items()
        },
    }
    (out_dir / "manifest.json").write_bytes(_render_json(manifest))
    return (EXIT_TOLERANCE if failures else EXIT_OK), manifest


# ---------------------------------------------------------------------------
# argument handling

def _load_config(path, experiment):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    if "config" in raw and "artifacts" in raw:
        inner = raw["config"]  # a manifest was passed; rerun its config
        if not isinstance(inner, dict):
            raise ConfigError(f"manifest {path} carries no config object")
        inner = dict(inner)
        if inner.pop("experiment", experiment) != experiment:
            raise ConfigError(
                f"manifest {path} was produced by a different experiment")
        raw = inner
    return raw


def _apply_sets(raw, assignments):
    for item in assignments:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return raw


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qndsim",
        description="Deterministic batch runs of the readout-protocol experiments.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="JSON config (or a manifest)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted path, JSON value)")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for sweep points")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        raw = _apply_sets(_load_config(args.config, args.experiment), args.set)
        cfg = resolve_config(args.experiment, raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        code, manifest = run(args.experiment, cfg, jobs=args.jobs)
    except ValueError as exc:
        # inner-module precondition surfaced during computation; nothing
        # has been written at this point
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if code == EXIT_TOLERANCE:
        print("tolerance failure; see manifest results", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
