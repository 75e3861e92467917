"""Synthetic trajectories, tag observations and single filter runs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .camera import VISIBILITY_MARGIN, Intrinsics, in_view, project_batch
from .estimator import (
    ExtrinsicCalib,
    FilterState,
    Mode,
    MotionInput,
    TagObservation,
    correct,
    predict,
)
from .lie import Pose, cov_factor, exp_se3_matrix, log_se3
from .tags import TagMap

DIVERGENCE_THRESHOLD = 5.0

# Independent Philox streams, one per noise source. A Monte Carlo iteration
# has its own seed (see ``iteration_seed``); each stream is keyed by
# (iteration seed, stream id), so draws never depend on scheduling.
STREAMS = {"tags": 0, "inputs": 1, "pixels": 2, "initial": 3}


def iteration_seed(base_seed: int, iteration: int) -> int:
    """63-bit seed for one iteration, derived from the scenario base seed."""
    word = np.random.SeedSequence([int(base_seed), int(iteration)]).generate_state(1, np.uint64)[0]
    return int(word) >> 1


def stream(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), STREAMS[name]])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TrajectorySpec:
    """Kinematic trajectory in front of the tag wall.

    ``origin`` is the midpoint of the line sweep or the circle center.
    Straight lines sweep along inertial X facing the wall (-Y); circles lie
    in a horizontal plane with a one-per-revolution vertical sinusoid and
    yaw tracking ``look_at``.
    """

    kind: str = "straight_line"
    length_m: float = 3.0
    repetitions: int = 4
    radius_m: float = 1.0
    vertical_amplitude_m: float = 0.2
    revolutions: int = 1
    speed: float = 0.5
    dt: float = 0.1
    origin: tuple[float, float, float] = (0.0, 2.0, 1.0)
    look_at: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("straight_line", "circle"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if not (self.dt > 0 and self.speed > 0):
            raise ValueError("dt and speed must be positive")
        if self.kind == "straight_line" and not (self.length_m > 0 and self.repetitions >= 1):
            raise ValueError("straight_line needs length_m > 0 and repetitions >= 1")
        if self.kind == "circle" and not (self.radius_m > 0 and self.revolutions >= 1):
            raise ValueError("circle needs radius_m > 0 and revolutions >= 1")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "look_at", tuple(float(v) for v in self.look_at))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    poses: list[Pose]          # T_vi per step, len K + 1
    inputs: list[MotionInput]  # len K


def vehicle_pose(position, yaw: float) -> Pose:
    """``T_vi`` for a level vehicle (x forward, z up) at ``position``."""
    c, s = math.cos(yaw), math.sin(yaw)
    C_iv = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return Pose(C_iv, position).inverse()


def _line_positions(spec: TrajectorySpec):
    step = spec.speed * spec.dt
    n_leg = int(round(spec.length_m / step))
    half = 0.5 * spec.length_m
    ox, oy, oz = spec.origin
    xs = [-half]
    for leg in range(spec.repetitions):
        a, b = (-half, half) if leg % 2 == 0 else (half, -half)
        xs.extend(a + (b - a) * (i / n_leg) for i in range(1, n_leg + 1))
    pos = np.array([[ox + x, oy, oz] for x in xs])
    yaw = np.full(len(pos), -0.5 * math.pi)
    return pos, yaw


def _circle_positions(spec: TrajectorySpec):
    total = 2.0 * math.pi * spec.radius_m * spec.revolutions
    n = int(round(total / (spec.speed * spec.dt)))
    ang = 2.0 * math.pi * spec.revolutions * np.arange(n + 1) / n
    ox, oy, oz = spec.origin
    pos = np.stack(
        [
            ox + spec.radius_m * np.cos(ang),
            oy + spec.radius_m * np.sin(ang),
            oz + spec.vertical_amplitude_m * np.sin(ang),
        ],
        axis=1,
    )
    d = np.asarray(spec.look_at) - pos
    yaw = np.arctan2(d[:, 1], d[:, 0])
    return pos, yaw


def true_poses(spec: TrajectorySpec) -> list[Pose]:
    pos, yaw = _line_positions(spec) if spec.kind == "straight_line" else _circle_positions(spec)
    return [vehicle_pose(p, y) for p, y in zip(pos, yaw)]


def noisy_twist(xi: np.ndarray, L: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``log(exp(w^) exp(xi^))`` with ``w = L z``; always draws six normals."""
    w = L @ rng.standard_normal(6)
    if not w.any():
        return xi
    return log_se3(exp_se3_matrix(w) @ exp_se3_matrix(xi))


def generate_trajectory(spec: TrajectorySpec, process_noise: np.ndarray | None = None,
                        rng: np.random.Generator | None = None, *,
                        tag_map: TagMap | None = None, calib: ExtrinsicCalib | None = None,
                        intr: Intrinsics | None = None, margin: float = VISIBILITY_MARGIN) -> Trajectory:
    """Ground-truth poses plus the relative-motion inputs between them.

    Inputs carry ``process_noise`` as their Q. When ``rng`` is given they
    are also corrupted by a left perturbation drawn from Q. When a tag map
    and camera are given, every step must see at least one full tag.
    """
    poses = true_poses(spec)
    Q = np.zeros((6, 6)) if process_noise is None else np.asarray(process_noise, dtype=float)
    L = cov_factor(Q)
    inputs = []
    for prev, cur in zip(poses[:-1], poses[1:]):
        xi = log_se3(cur @ prev.inverse())
        if rng is not None:
            xi = noisy_twist(xi, L, rng)
        inputs.append(MotionInput(xi, Q))
    if tag_map is not None:
        calib = calib or ExtrinsicCalib()
        intr = intr or Intrinsics()
        for k, pose in enumerate(poses):
            if not visible_tags(pose, tag_map, calib, intr, margin).any():
                raise ValueError(f"trajectory step {k}: no tag fully in view")
    times = spec.dt * np.arange(len(poses))
    return Trajectory(times, poses, inputs)


def _corner_pixels(pose: Pose, tag_map: TagMap, calib: ExtrinsicCalib, intr: Intrinsics):
    p_i = np.concatenate([t.world_corners for t in tag_map], axis=1)
    p_c = ((calib.T_cv @ pose).matrix @ p_i)[:3]
    with np.errstate(divide="ignore", invalid="ignore"):
        pix = project_batch(p_c, intr)
    return pix, p_c[2]


def visible_tags(pose: Pose, tag_map: TagMap, calib: ExtrinsicCalib, intr: Intrinsics,
                 margin: float = VISIBILITY_MARGIN) -> np.ndarray:
    pix, depth = _corner_pixels(pose, tag_map, calib, intr)
    return in_view(pix, depth, intr, margin).reshape(len(tag_map), 4).all(axis=1)


def synthesize_observations(poses: Sequence[Pose], true_map: TagMap, calib: ExtrinsicCalib,
                            intr: Intrinsics, pixel_sigma: float, rng: np.random.Generator, *,
                            assumed_sigma: float | None = None,
                            margin: float = VISIBILITY_MARGIN) -> list[list[TagObservation]]:
    """Noisy corner pixels of every fully visible tag at every step.

    Visibility is decided on the noise-free pixels. Noise for all tags is
    drawn every step whether visible or not. Observations carry
    ``assumed_sigma`` (defaults to ``pixel_sigma``, or 1 px when that is 0)
    as the sigma the filter should use.
    """
    if assumed_sigma is None:
        assumed_sigma = pixel_sigma if pixel_sigma > 0 else 1.0
    n = len(true_map)
    out = []
    for pose in poses:
        pix, depth = _corner_pixels(pose, true_map, calib, intr)
        vis = in_view(pix, depth, intr, margin).reshape(n, 4).all(axis=1)
        noise = pixel_sigma * rng.standard_normal((n, 4, 2))
        pix = pix.reshape(n, 4, 2)
        out.append(
            [
                TagObservation(tag.id, pix[j] + noise[j], assumed_sigma)
                for j, tag in enumerate(true_map)
                if vis[j]
            ]
        )
    return out


@dataclass(frozen=True, eq=False)
class RunRecord:
    t: np.ndarray
    true_poses: list[Pose]
    est_poses: list[Pose]
    error: np.ndarray      # (K, 6) log(est @ true^-1)
    cov_diag: np.ndarray   # (K, 6)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def position_error(self) -> np.ndarray:
        """(K, 3) inertial-frame position errors."""
        return np.array([_position(e) - _position(t) for e, t in zip(self.est_poses, self.true_poses)])


@dataclass(frozen=True, eq=False)
class RunResult:
    records: RunRecord
    rmse_position: float
    diverged: bool


def _position(T_vi: Pose) -> np.ndarray:
    return -T_vi.rotation.T @ T_vi.translation


def position_rmse(est: Sequence[Pose], truth: Sequence[Pose]) -> float:
    d = np.array([_position(e) - _position(t) for e, t in zip(est, truth)])
    return float(math.sqrt(np.mean(np.sum(d * d, axis=1))))


def run_filter(inputs: Sequence[MotionInput], observations: Sequence[Sequence[TagObservation]],
               nominal_map: TagMap, mode: Mode, initial_state: FilterState, calib: ExtrinsicCalib,
               intr: Intrinsics, truth: Sequence[Pose], times: Sequence[float] | None = None, *,
               divergence_threshold: float = DIVERGENCE_THRESHOLD,
               per_corner_independent: bool = False, margin: float = VISIBILITY_MARGIN) -> RunResult:
    """Run predict/correct over a whole trajectory.

    Step 0 corrects the initial state with the first observations; each
    later step predicts with ``inputs[k-1]`` and then corrects.
    """
    if not (len(inputs) + 1 == len(observations) == len(truth)):
        raise ValueError("need K inputs and K + 1 observation lists and true poses")
    times = np.arange(len(truth), dtype=float) if times is None else np.asarray(times, dtype=float)
    state = initial_state
    est, cov_diag = [], []
    for k, obs in enumerate(observations):
        if k > 0:
            state = predict(state, inputs[k - 1])
        state = correct(state, obs, nominal_map, calib, intr, mode,
                        per_corner_independent=per_corner_independent, margin=margin)
        est.append(state.pose)
        cov_diag.append(np.diag(state.cov).copy())
    err = np.array([log_se3(e @ t.inverse()) for e, t in zip(est, truth)])
    rmse = position_rmse(est, truth)
    if not math.isfinite(rmse):
        rmse = math.inf
    rec = RunRecord(times, list(truth), est, err, np.array(cov_diag))
    return RunResult(rec, rmse, rmse > divergence_threshold)


TIMESERIES_HEADER = [
    "t", "err_x", "err_y", "err_z", "err_rx", "err_ry", "err_rz",
    "sig_x", "sig_y", "sig_z", "sig_rx", "sig_ry", "sig_rz",
]


def write_timeseries(result: RunResult, path) -> None:
    """Per-step error twist and 1-sigma bounds, one CSV row per step."""
    rec = result.records
    sig = np.sqrt(np.clip(rec.cov_diag, 0.0, None))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TIMESERIES_HEADER)
        for t, e, s in zip(rec.t, rec.error, sig):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in e] + [repr(float(v)) for v in s])
