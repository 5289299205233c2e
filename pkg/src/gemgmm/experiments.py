"""Experiment configuration and the four harness commands.

The commands mirror the CLI subcommands: ``generate`` samples a dataset
from a declared true model, ``fit`` runs one algorithm on a dataset,
``replicate`` repeats a paired fit (plain vs weighted projected steps)
over freshly sampled datasets and aggregates, ``analyze`` wraps the
convergence-analysis toolkit.  Everything is driven by one JSON config
document; CLI flags override individual fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .analysis import SectorBounds, empirical_rate, rate_bound, rate_certificate, update_map_jacobian
from .core import GmmParams, sample
from .dynamics import ALGORITHMS, MeanStepWeights, RunTrace, run
from .errors import StepFailure, ValidationError
from .svgplot import line_plot

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 10_000
DEFAULT_BETA = 0.996
DEFAULT_GRID_RESOLUTION = 1e-3
DEFAULT_FD_STEP = 1e-6

_INT_FIELDS = ("n_samples", "max_iters", "seed", "instances", "seed_stride")
_FLOAT_FIELDS = ("tol", "fd_step", "grid_resolution")


@dataclass
class ExperimentConfig:
    """Typed view of the config document (all fields optional in JSON)."""

    true_model: dict | str | None = None
    n_samples: int = 1000
    init: dict | None = None
    algorithm: str = "pb_gem"
    beta: list[float] | None = None
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    seed: int = 0
    out: str = "."
    dataset: str | None = None
    header: bool = False
    plot: bool = False
    inset: tuple[float, float] | None = None
    instances: int = 30
    seed_stride: int = 1
    params_file: str | None = None
    trace: str | None = None
    sector: dict | None = None
    fd_step: float = DEFAULT_FD_STEP
    grid_resolution: float = DEFAULT_GRID_RESOLUTION

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        cfg = cls(**mapping)
        for name in _INT_FIELDS:
            try:
                setattr(cfg, name, int(getattr(cfg, name)))
            except (TypeError, ValueError):
                raise ValidationError(f"config field {name!r} must be an integer")
        for name in _FLOAT_FIELDS:
            try:
                setattr(cfg, name, float(getattr(cfg, name)))
            except (TypeError, ValueError):
                raise ValidationError(f"config field {name!r} must be a number")
        cfg.algorithm = str(cfg.algorithm).replace("-", "_")
        if cfg.algorithm not in ALGORITHMS:
            raise ValidationError(
                f"unknown algorithm {cfg.algorithm!r}, expected one of {ALGORITHMS}")
        if cfg.beta is not None:
            try:
                cfg.beta = [float(v) for v in cfg.beta]
            except (TypeError, ValueError):
                raise ValidationError("config field 'beta' must be a list of numbers")
        if cfg.inset is not None:
            if len(cfg.inset) != 2:
                raise ValidationError("config field 'inset' must be a pair [start, stop]")
            cfg.inset = (float(cfg.inset[0]), float(cfg.inset[1]))
        return cfg


def _resolve_params(spec) -> GmmParams:
    """Accept an inline parameter object or a path to a parameter JSON."""
    if isinstance(spec, dict):
        return io.params_from_dict(spec)
    if isinstance(spec, (str, Path)):
        return io.load_params(spec)
    raise ValidationError(
        f"expected a parameter object or file path, got {type(spec).__name__}")


def orthogonal_line_init(truth: GmmParams, distance: float) -> GmmParams:
    """Worst-case style initialization for a two-component model.

    Places the initial means at ``d*v`` and ``-d*v`` where ``v`` is a
    unit vector orthogonal to the line joining the true means (for 2-D,
    the counterclockwise rotation of that direction).  Covariances start
    at identity, weights uniform.
    """
    if truth.n_components != 2:
        raise ValidationError("orthogonal-line init needs exactly 2 components")
    if not distance > 0.0:
        raise ValidationError(f"init distance must be positive, got {distance}")
    u = truth.means[0] - truth.means[1]
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ValidationError("true means coincide; the orthogonal direction is undefined")
    u = u / norm
    m = truth.n_features
    if m == 1:
        raise ValidationError("orthogonal-line init needs at least 2 features")
    if m == 2:
        v = np.array([-u[1], u[0]])
    else:
        e = np.zeros(m)
        e[int(np.argmin(np.abs(u)))] = 1.0
        v = e - (e @ u) * u
        v /= np.linalg.norm(v)
    means = np.vstack([distance * v, -distance * v])
    covs = np.broadcast_to(np.eye(m), (2, m, m))
    return GmmParams(np.array([0.5, 0.5]), means, covs)


def _initial_params(config: ExperimentConfig, truth: GmmParams | None) -> GmmParams:
    if config.init is None:
        raise ValidationError("an 'init' spec is required: "
                              "{'kind': 'explicit'|'orthogonal-line', ...}")
    kind = config.init.get("kind")
    if kind == "explicit":
        if "params" not in config.init:
            raise ValidationError("explicit init needs a 'params' entry")
        return _resolve_params(config.init["params"])
    if kind == "orthogonal-line":
        if truth is None:
            raise ValidationError("orthogonal-line init needs the true model (config key 'true_model')")
        if "distance" not in config.init:
            raise ValidationError("orthogonal-line init needs a 'distance' entry")
        return orthogonal_line_init(truth, float(config.init["distance"]))
    raise ValidationError(f"unknown init kind {kind!r}")


def _design_for(config: ExperimentConfig, n_components: int) -> MeanStepWeights:
    betas = config.beta if config.beta is not None else [DEFAULT_BETA] * n_components
    if len(betas) != n_components:
        raise ValidationError(f"beta must list one factor per component "
                              f"({n_components}), got {len(betas)}")
    return MeanStepWeights(np.asarray(betas, dtype=float))


def _outdir(config: ExperimentConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(config: ExperimentConfig) -> dict:
    """Sample a dataset from the true model; write CSV + ground truth."""
    if config.true_model is None:
        raise ValidationError("generate requires a true model (config key 'true_model')")
    truth = _resolve_params(config.true_model)
    if config.n_samples < 1:
        raise ValidationError(f"n_samples must be at least 1, got {config.n_samples}")
    data = sample(truth, config.n_samples, config.seed)
    out = _outdir(config)
    dataset_path = out / "dataset.csv"
    truth_path = out / "truth.json"
    io.save_dataset(dataset_path, data)
    io.save_params(truth_path, truth)
    return {"dataset": str(dataset_path), "truth": str(truth_path),
            "n_samples": config.n_samples, "seed": config.seed}


def _fit_summary(trace: RunTrace, config: ExperimentConfig,
                 betas: list[float] | None, error: str | None = None) -> dict:
    summary = {
        "algorithm": trace.algorithm,
        "iterations": trace.iterations,
        "termination_reason": trace.reason,
        "converged": trace.reason == "tolerance",
        "final_loglik": float(trace.records[-1].loglik),
        "final_params": io.params_to_dict(trace.final_params),
        "beta": betas,
        "tol": config.tol,
        "max_iters": config.max_iters,
        "seed": config.seed,
        "wall_time_s": trace.wall_time,
    }
    if error is not None:
        summary["error"] = error
    return summary


def _write_fit_outputs(trace: RunTrace, config: ExperimentConfig,
                       betas: list[float] | None, error: str | None = None) -> dict:
    out = _outdir(config)
    paths = {"trace": str(out / "trace.csv"), "summary": str(out / "summary.json")}
    io.save_trace_csv(paths["trace"], trace)
    io.save_json(paths["summary"], _fit_summary(trace, config, betas, error))
    if config.plot:
        curve = {"label": trace.algorithm.replace("_", "-"),
                 "x": [r.iteration for r in trace.records],
                 "y": [-r.loglik for r in trace.records]}
        svg = line_plot([curve], title="negative log-likelihood",
                        xlabel="iteration", ylabel="-loglik", inset=config.inset)
        paths["plot"] = str(out / "loglik.svg")
        Path(paths["plot"]).write_text(svg)
    return paths


def cmd_fit(config: ExperimentConfig) -> RunTrace:
    """Fit one algorithm on the configured dataset; write trace + summary.

    On a numerical failure the partial trace and summary are still
    written before the error propagates.
    """
    if config.dataset is None:
        raise ValidationError("fit requires a dataset path (config key 'dataset')")
    data = io.load_dataset(config.dataset, header=config.header)
    truth = _resolve_params(config.true_model) if config.true_model is not None else None
    start = _initial_params(config, truth)
    design = None
    betas = None
    if config.algorithm == "w_pb_gem":
        design = _design_for(config, start.n_components)
        betas = [float(b) for b in design.betas]
    try:
        trace = run(start, data, config.algorithm, design=design,
                    rel_ll_tol=config.tol, max_iters=config.max_iters)
    except StepFailure as err:
        _write_fit_outputs(err.trace, config, betas, error=str(err))
        raise
    _write_fit_outputs(trace, config, betas)
    return trace


def _padded_negll(traces: list[RunTrace], n_rows: int) -> np.ndarray:
    out = np.empty((len(traces), n_rows))
    for i, tr in enumerate(traces):
        ll = tr.logliks
        out[i, :ll.size] = -ll
        out[i, ll.size:] = -ll[-1]
    return out


def _iteration_stats(traces: list[RunTrace]) -> dict:
    counts = np.array([tr.iterations for tr in traces], dtype=float)
    if counts.size == 0:
        return {"runs": 0}
    return {"runs": int(counts.size),
            "mean_iterations": float(counts.mean()),
            "std_iterations": float(counts.std()),
            "min_iterations": int(counts.min()),
            "max_iterations": int(counts.max())}


def cmd_replicate(config: ExperimentConfig) -> dict:
    """Paired replication study: plain vs weighted projected steps.

    Each instance draws a fresh dataset (seed = base seed + i *
    seed_stride) and fits both algorithms from the same initialization.
    Emits the per-iteration mean/std of the negative log-likelihood
    across instances, iteration-count statistics, and failure records.
    """
    if config.instances < 2:
        raise ValidationError(f"replicate needs at least 2 instances, got {config.instances}")
    if config.true_model is None:
        raise ValidationError("replicate requires a true model (config key 'true_model')")
    truth = _resolve_params(config.true_model)
    design = _design_for(config, truth.n_components)
    traces: dict[str, list[RunTrace]] = {"pb_gem": [], "w_pb_gem": []}
    failures = []
    for i in range(config.instances):
        data = sample(truth, config.n_samples, config.seed + i * config.seed_stride)
        start = _initial_params(config, truth)
        for algorithm in ("pb_gem", "w_pb_gem"):
            try:
                trace = run(start, data, algorithm,
                            design=design if algorithm == "w_pb_gem" else None,
                            rel_ll_tol=config.tol, max_iters=config.max_iters,
                            snapshot_stride=config.max_iters + 1)
            except StepFailure as err:
                failures.append({"instance": i, "algorithm": algorithm,
                                 "iteration": err.iteration, "error": str(err.cause)})
                continue
            traces[algorithm].append(trace)

    n_rows = max((tr.logliks.size for lst in traces.values() for tr in lst), default=0)
    if n_rows == 0:
        raise ValidationError("every replicate instance failed; nothing to aggregate")
    columns = {}
    for algorithm, lst in traces.items():
        if lst:
            negll = _padded_negll(lst, n_rows)
            columns[algorithm] = (negll.mean(axis=0), negll.std(axis=0))
        else:
            nan = np.full(n_rows, np.nan)
            columns[algorithm] = (nan, nan)

    out = _outdir(config)
    lines = [
        "# per-iteration negative log-likelihood aggregated across replicate instances",
        "# runs shorter than the longest run are padded by repeating their terminal value",
        "iter,mean_negll_pb,std_negll_pb,mean_negll_wpb,std_negll_wpb",
    ]
    mean_pb, std_pb = columns["pb_gem"]
    mean_wpb, std_wpb = columns["w_pb_gem"]
    for it in range(n_rows):
        lines.append(f"{it},{float(mean_pb[it])!r},{float(std_pb[it])!r},"
                     f"{float(mean_wpb[it])!r},{float(std_wpb[it])!r}")
    csv_path = out / "replicate.csv"
    csv_path.write_text("\n".join(lines) + "\n")

    stats_pb = _iteration_stats(traces["pb_gem"])
    stats_wpb = _iteration_stats(traces["w_pb_gem"])
    faster = None
    if stats_pb["runs"] and stats_wpb["runs"]:
        faster = bool(stats_wpb["mean_iterations"] < stats_pb["mean_iterations"])
    summary = {
        "instances": config.instances,
        "n_samples": config.n_samples,
        "base_seed": config.seed,
        "seed_stride": config.seed_stride,
        "beta": [float(b) for b in design.betas],
        "pb_gem": stats_pb,
        "w_pb_gem": stats_wpb,
        "weighted_mean_iterations_below_plain": faster,
        "failures": failures,
        "failure_count": len(failures),
    }
    paths = {"aggregate": str(csv_path), "summary": str(out / "replicate_summary.json")}
    io.save_json(paths["summary"], summary)
    if config.plot:
        iters = np.arange(n_rows)
        curves = [
            {"label": "pb-gem", "x": iters, "y": mean_pb,
             "band": (mean_pb - std_pb, mean_pb + std_pb)},
            {"label": "w-pb-gem", "x": iters, "y": mean_wpb,
             "band": (mean_wpb - std_wpb, mean_wpb + std_wpb)},
        ]
        svg = line_plot(curves, title="replicated negative log-likelihood (mean +/- std)",
                        xlabel="iteration", ylabel="-loglik", inset=config.inset)
        paths["plot"] = str(out / "replicate.svg")
        Path(paths["plot"]).write_text(svg)
    return {"summary": summary, "traces": traces, "paths": paths}


def cmd_analyze(config: ExperimentConfig) -> dict:
    """Rate certificate, update-map Jacobian spectrum, empirical rate."""
    report: dict = {}
    if config.sector is not None:
        if set(config.sector) != {"m_lo", "L_hi"}:
            raise ValidationError("sector must be an object with keys 'm_lo' and 'L_hi'")
        bounds = SectorBounds(float(config.sector["m_lo"]), float(config.sector["L_hi"]))
        cert = rate_certificate(bounds, config.grid_resolution)
        report["rate"] = {
            "m_lo": bounds.m_lo,
            "L_hi": bounds.L_hi,
            "rate_bound": rate_bound(bounds),
            "grid_resolution": config.grid_resolution,
            "certificate": {
                "mu_bound": cert.mu_bound if cert.feasible else None,
                "multiplier": cert.multiplier if cert.feasible else None,
                "feasible": cert.feasible,
            },
        }
    if config.params_file is not None:
        params = io.load_params(config.params_file)
        if config.dataset is None:
            raise ValidationError("jacobian analysis requires a dataset (config key 'dataset')")
        data = io.load_dataset(config.dataset, header=config.header)
        design = None
        if config.algorithm == "w_pb_gem":
            design = _design_for(config, params.n_components)
        jac = update_map_jacobian(params, data, config.algorithm,
                                  fd_step=config.fd_step, design=design)
        report["jacobian"] = {
            "algorithm": config.algorithm,
            "fd_step": config.fd_step,
            "classification": jac.classification,
            "max_modulus": float(jac.moduli[0]),
            "moduli": [float(v) for v in jac.moduli],
        }
    if config.trace is not None:
        arr = io.load_trace_csv(config.trace)
        report["empirical_rate"] = empirical_rate(arr[:, :2])
    if not report:
        raise ValidationError(
            "analyze needs at least one of: 'sector', 'params_file', 'trace'")
    out = _outdir(config)
    io.save_json(out / "analysis.json", report)
    return report
