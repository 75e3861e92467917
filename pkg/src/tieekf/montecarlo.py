"""Monte Carlo comparison of EKF and TIE-EKF under tag installation error.

Every iteration draws one installed tag map, one set of noisy motion
inputs, one set of noisy corner pixels and one initial estimate, then runs
both filters on exactly that data (paired design).
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_sigma
from .estimator import Mode, make_state
from .lie import sample_perturbed
from .sim import (
    RunResult,
    generate_trajectory,
    iteration_seed,
    run_filter,
    stream,
    synthesize_observations,
    write_timeseries,
)
from .tags import PerturbationSpec, TagMap, build_sigma, perturb_map

log = logging.getLogger(__name__)

METHODS = (Mode.EKF, Mode.TIE_EKF)
LEVEL_NAMES = ("low", "high", "extreme", "custom", "none")

SUMMARY_HEADER = [
    "scenario", "method", "iterations", "median_rmse", "mean_rmse",
    "min_rmse", "max_rmse", "iqr", "divergence_fraction",
]
SAMPLES_HEADER = ["scenario", "iteration", "seed", "method", "rmse", "diverged"]


class MonteCarloError(RuntimeError):
    def __init__(self, scenario: str, iteration: int, seed: int, cause: BaseException):
        super().__init__(f"scenario {scenario!r} iteration {iteration} (seed {seed}) failed: {cause!r}")
        self.scenario = scenario
        self.iteration = iteration
        self.seed = seed


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    trajectory: str
    perturbed_ids: tuple[int, ...]
    level: str
    iterations: int = 200
    seed: int = 0
    perturbation: PerturbationSpec | None = None  # only for level "custom"
    out_dir: str | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.level not in LEVEL_NAMES:
            raise ValueError(f"unknown level {self.level!r}")
        object.__setattr__(self, "perturbed_ids", tuple(int(i) for i in self.perturbed_ids))


def builtin_scenarios(cfg: ExperimentConfig | None = None) -> list[ScenarioConfig]:
    """Single/all tags x low/high uncertainty on both trajectories, plus the
    extreme case on the circle."""
    middle = 1 if cfg is None else cfg.middle_tag
    every = (0, 1, 2) if cfg is None else tuple(cfg.tag_map.ids)
    out = []
    for traj in ("SLS", "3DC"):
        for scope, ids in (("single", (middle,)), ("all", every)):
            for level in ("low", "high"):
                out.append(ScenarioConfig(f"{scope}-{level}-{traj}", traj, ids, level, 200))
    out.append(ScenarioConfig("extreme-3DC", "3DC", every, "extreme", 400))
    return out


def scenarios_from_config(cfg: ExperimentConfig) -> list[ScenarioConfig]:
    """Built-ins overridden field by field by the config's ``scenarios`` section."""
    out = {s.name: s for s in builtin_scenarios(cfg)}
    for name, entry in cfg.scenarios.items():
        entry = dict(entry or {})
        base = out.get(name)
        if base is None and not {"trajectory", "level"} <= set(entry):
            raise ConfigError(f"scenarios.{name}: new scenarios need trajectory and level")
        fields = {} if base is None else {
            "trajectory": base.trajectory, "perturbed_ids": base.perturbed_ids, "level": base.level,
            "iterations": base.iterations, "seed": base.seed, "perturbation": base.perturbation,
        }
        if "sigma" in entry:
            fields["perturbation"] = parse_sigma(entry.pop("sigma"), f"scenarios.{name}.sigma")
        fields.update(entry)
        fields.setdefault("perturbed_ids", tuple(cfg.tag_map.ids))
        try:
            out[name] = ScenarioConfig(name=str(name), **fields)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenarios.{name}: {exc}") from None
    for sc in out.values():
        if sc.trajectory not in cfg.trajectories:
            raise ConfigError(f"scenario {sc.name}: unknown trajectory {sc.trajectory!r}")
        missing = set(sc.perturbed_ids) - set(cfg.tag_map.ids)
        if missing:
            raise ConfigError(f"scenario {sc.name}: unknown tag ids {sorted(missing)}")
    return list(out.values())


def scenario_map(scenario: ScenarioConfig, cfg: ExperimentConfig) -> TagMap:
    """Nominal map whose perturbed tags carry the scenario's covariance."""
    tags = []
    for tag in cfg.tag_map:
        if tag.id not in scenario.perturbed_ids:
            sigma = np.zeros((6, 6))
        elif scenario.level == "custom":
            spec = scenario.perturbation or cfg.tag_sigmas.get(tag.id, PerturbationSpec())
            sigma = build_sigma(spec)
        else:
            sigma = cfg.level_sigma(scenario.level)
        tags.append(replace(tag, sigma_tau=sigma))
    return TagMap(tags)


@dataclass(frozen=True, eq=False)
class IterationData:
    seed: int
    trajectory: object
    nominal_map: TagMap
    true_map: TagMap
    observations: list
    initial_state: object

    def digest(self) -> str:
        h = hashlib.sha256()
        for inp in self.trajectory.inputs:
            h.update(np.ascontiguousarray(inp.xi_rel).tobytes())
        for step in self.observations:
            h.update(len(step).to_bytes(2, "little"))
            for obs in step:
                h.update(int(obs.tag_id).to_bytes(4, "little", signed=True))
                h.update(obs.corners.tobytes())
        h.update(self.initial_state.pose.matrix.tobytes())
        return h.hexdigest()


def simulate_iteration(scenario: ScenarioConfig, cfg: ExperimentConfig, seed: int,
                       nominal_map: TagMap | None = None) -> IterationData:
    spec = cfg.trajectories[scenario.trajectory]
    nominal = scenario_map(scenario, cfg) if nominal_map is None else nominal_map
    Q = cfg.process_noise(spec.dt)
    traj = generate_trajectory(spec, Q, stream(seed, "inputs") if cfg.input_noise else None)
    true_map = perturb_map(nominal, scenario.perturbed_ids, stream(seed, "tags"))
    obs = synthesize_observations(traj.poses, true_map, cfg.calib, cfg.intrinsics, cfg.pixel_sigma,
                                  stream(seed, "pixels"), margin=cfg.visibility_margin)
    P0 = cfg.initial_cov
    init_cov = P0 if cfg.sample_initial_error else np.zeros((6, 6))
    x0 = make_state(sample_perturbed(traj.poses[0], init_cov, stream(seed, "initial")), P0)
    return IterationData(seed, traj, nominal, true_map, obs, x0)


def run_methods(data: IterationData, cfg: ExperimentConfig, per_corner_independent: bool | None = None,
                methods: Sequence[Mode] = METHODS) -> dict[Mode, RunResult]:
    pci = cfg.per_corner_independent if per_corner_independent is None else per_corner_independent
    out = {}
    before = data.digest()
    for mode in methods:
        if data.digest() != before:
            raise RuntimeError("iteration data changed between paired filter runs")
        out[mode] = run_filter(
            data.trajectory.inputs, data.observations, data.nominal_map, mode, data.initial_state,
            cfg.calib, cfg.intrinsics, data.trajectory.poses, data.trajectory.times,
            divergence_threshold=cfg.divergence_threshold, per_corner_independent=pci,
            margin=cfg.visibility_margin,
        )
    log.debug("seed %d inputs digest %s", data.seed, before)
    return out


@dataclass(frozen=True)
class IterationSample:
    iteration: int
    seed: int
    rmse: dict            # Mode -> float
    diverged: dict        # Mode -> bool
    digest: str = ""


def _run_one(scenario: ScenarioConfig, cfg: ExperimentConfig, nominal: TagMap, keep_records: bool,
             per_corner_independent: bool | None, iteration: int):
    seed = iteration_seed(scenario.seed, iteration)
    try:
        data = simulate_iteration(scenario, cfg, seed, nominal)
        results = run_methods(data, cfg, per_corner_independent)
    except Exception as exc:
        raise MonteCarloError(scenario.name, iteration, seed, exc) from exc
    sample = IterationSample(
        iteration, seed,
        {m: r.rmse_position for m, r in results.items()},
        {m: r.diverged for m, r in results.items()},
        data.digest(),
    )
    return sample, (results if keep_records else None)


@dataclass(frozen=True)
class MethodStats:
    n: int
    median: float
    mean: float
    min: float
    max: float
    q25: float
    q75: float
    divergence_fraction: float

    @property
    def iqr(self) -> float:
        return self.q75 - self.q25


@dataclass
class ScenarioSummary:
    name: str
    iterations: int
    stats: dict                      # Mode -> MethodStats
    samples: list[IterationSample]
    runs: dict = field(default_factory=dict)   # iteration -> {Mode: RunResult}

    def relative_median_improvement(self) -> float:
        """``1 - median(TIE-EKF) / median(EKF)``."""
        return 1.0 - self.stats[Mode.TIE_EKF].median / self.stats[Mode.EKF].median


def _percentile(sorted_vals: np.ndarray, q: float) -> float:
    """Linear interpolation between closest ranks."""
    pos = (len(sorted_vals) - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_vals) - 1)
    a, b = float(sorted_vals[lo]), float(sorted_vals[hi])
    if a == b:
        return a
    return a + (b - a) * (pos - lo)


def method_stats(rmse: Iterable[float], threshold: float) -> MethodStats:
    """Order statistics over all samples; the mean skips diverged samples."""
    vals = np.sort(np.asarray(list(rmse), dtype=float))
    if vals.size == 0:
        raise ValueError("no samples to summarize")
    diverged = vals > threshold
    kept = vals[~diverged]
    return MethodStats(
        n=int(vals.size),
        median=_percentile(vals, 0.5),
        mean=float(kept.mean()) if kept.size else math.nan,
        min=float(vals[0]),
        max=float(vals[-1]),
        q25=_percentile(vals, 0.25),
        q75=_percentile(vals, 0.75),
        divergence_fraction=float(diverged.mean()),
    )


def summarize(samples: Sequence[IterationSample], threshold: float, name: str = "") -> ScenarioSummary:
    if not samples:
        raise ValueError("no samples to summarize")
    samples = sorted(samples, key=lambda s: s.iteration)
    stats = {m: method_stats([s.rmse[m] for s in samples], threshold) for m in METHODS}
    return ScenarioSummary(name, len(samples), stats, list(samples))


def run_scenario(scenario: ScenarioConfig, cfg: ExperimentConfig, *, workers: int = 1,
                 keep_records: bool = False, per_corner_independent: bool | None = None) -> ScenarioSummary:
    spec = cfg.trajectories[scenario.trajectory]
    nominal = scenario_map(scenario, cfg)
    # fails loudly if some step sees no tag
    generate_trajectory(spec, tag_map=nominal, calib=cfg.calib, intr=cfg.intrinsics,
                        margin=cfg.visibility_margin)
    job = partial(_run_one, scenario, cfg, nominal, keep_records, per_corner_independent)
    its = range(scenario.iterations)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, its, chunksize=max(1, scenario.iterations // (4 * workers))))
    else:
        results = [job(i) for i in its]
    results.sort(key=lambda r: r[0].iteration)
    summary = summarize([r[0] for r in results], cfg.divergence_threshold, scenario.name)
    if keep_records:
        summary.runs = {r[0].iteration: r[1] for r in results}
    return summary


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_reports(summaries: Sequence[ScenarioSummary], out_dir, timeseries: bool = False) -> dict[str, Path]:
    """Write ``summary.csv`` and ``samples.csv`` (plus per-run time series)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"summary": out / "summary.csv", "samples": out / "samples.csv"}
    with open(paths["summary"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for s in summaries:
            for m in METHODS:
                st = s.stats[m]
                w.writerow([s.name, m.value, st.n, _fmt(st.median), _fmt(st.mean), _fmt(st.min),
                            _fmt(st.max), _fmt(st.iqr), _fmt(st.divergence_fraction)])
    with open(paths["samples"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLES_HEADER)
        for s in summaries:
            for smp in s.samples:
                for m in METHODS:
                    w.writerow([s.name, smp.iteration, smp.seed, m.value, _fmt(smp.rmse[m]),
                                int(smp.diverged[m])])
    if timeseries:
        for s in summaries:
            for it, runs in sorted(s.runs.items()):
                for m, res in (runs or {}).items():
                    write_timeseries(res, out / "timeseries" / s.name / f"{m.value}_{it:04d}.csv")
        paths["timeseries"] = out / "timeseries"
    return paths


def read_samples(path) -> dict[str, list[IterationSample]]:
    rows: dict[str, dict[int, dict]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            it = int(row["iteration"])
            rec = rows.setdefault(row["scenario"], {}).setdefault(
                it, {"seed": int(row["seed"]), "rmse": {}, "diverged": {}})
            mode = Mode(row["method"])
            rec["rmse"][mode] = float(row["rmse"])
            rec["diverged"][mode] = bool(int(row["diverged"]))
    return {
        name: [IterationSample(it, r["seed"], r["rmse"], r["diverged"]) for it, r in sorted(its.items())]
        for name, its in rows.items()
    }


def summaries_from_samples(path, threshold: float) -> list[ScenarioSummary]:
    """Recompute scenario summaries from a ``samples.csv`` file alone."""
    return [summarize(smp, threshold, name) for name, smp in read_samples(path).items()]
