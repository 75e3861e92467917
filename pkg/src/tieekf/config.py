"""Experiment configuration: embedded defaults, YAML overrides, validation.

A config file is YAML with any subset of the sections in ``DEFAULTS``;
mappings are merged field by field into the defaults, lists replace them.
Scenario entries under ``scenarios`` override the built-in scenario of the
same name or define a new one.

Orientation entries (tags, extrinsics) take exactly one of

* ``ypr_deg: [yaw, pitch, roll]`` meaning ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``,
* ``axis_angle: [x, y, z]`` a rotation vector in radians,
* ``matrix: [[...], [...], [...]]``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .camera import Intrinsics
from .estimator import ExtrinsicCalib, default_process_noise
from .lie import Pose, check_cov6, exp_so3
from .tags import PerturbationSpec, Tag, TagMap, build_sigma
from .sim import TrajectorySpec


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "camera": {"fx": 500.0, "fy": 500.0, "cx": 320.0, "cy": 240.0, "width": 640, "height": 480},
    # vehicle (x forward, y left, z up) to camera (x right, y down, z forward),
    # camera 10 cm ahead of the vehicle origin
    "extrinsics": {
        "matrix": [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]],
        "translation": [0.0, 0.0, -0.1],
    },
    "tags": [
        {"id": 0, "size_m": 0.165, "position": [-1.0, 0.0, 1.0], "ypr_deg": [180.0, 0.0, 90.0]},
        {"id": 1, "size_m": 0.165, "position": [0.0, 0.0, 1.0], "ypr_deg": [180.0, 0.0, 90.0]},
        {"id": 2, "size_m": 0.165, "position": [1.0, 0.0, 1.0], "ypr_deg": [180.0, 0.0, 90.0]},
    ],
    "middle_tag": 1,
    "trajectories": {
        "SLS": {
            "kind": "straight_line", "length_m": 3.0, "repetitions": 4,
            "speed": 0.5, "dt": 0.1, "origin": [0.0, 2.0, 1.0],
        },
        "3DC": {
            "kind": "circle", "radius_m": 1.0, "vertical_amplitude_m": 0.2, "revolutions": 1,
            "speed": 0.5, "dt": 0.1, "origin": [0.0, 2.5, 1.0], "look_at": [0.0, 0.0, 1.0],
        },
    },
    "levels": {
        "low": {"translation": [0.01, 0.0, 0.01], "rotation_deg": [0.0, 1.0, 0.0]},
        "high": {"translation": [0.05, 0.0, 0.05], "rotation_deg": [0.0, 5.0, 0.0]},
        "extreme": {"translation": [0.05, 0.05, 0.05], "rotation_deg": [5.0, 5.0, 5.0]},
    },
    "noise": {
        "pixel_sigma": 1.0,
        "velocity_sigma": 0.05,
        "angular_velocity_sigma": 0.05,
        "input_noise": True,
    },
    "filter": {
        "initial_sigma": [0.01, 0.01, 0.01, 0.01, 0.01, 0.01],
        "sample_initial_error": True,
        "per_corner_independent": False,
        "divergence_threshold": 5.0,
        "visibility_margin": 2.0,
    },
    "scenarios": {},
}


def deep_merge(base: Mapping, override: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for key, val in override.items():
        if isinstance(val, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def ypr_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """``Rz(yaw) @ Ry(pitch) @ Rx(roll)``, angles in radians."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return Rz @ Ry @ Rx


def parse_rotation(entry: Mapping, where: str) -> np.ndarray:
    keys = [k for k in ("ypr_deg", "axis_angle", "matrix") if k in entry]
    if len(keys) != 1:
        raise ConfigError(f"{where}: give exactly one of ypr_deg, axis_angle, matrix")
    key = keys[0]
    try:
        if key == "ypr_deg":
            C = ypr_matrix(*np.deg2rad(np.asarray(entry[key], dtype=float).reshape(3)))
        elif key == "axis_angle":
            C = exp_so3(np.asarray(entry[key], dtype=float).reshape(3))
        else:
            C = np.asarray(entry[key], dtype=float).reshape(3, 3)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: bad {key}: {exc}") from None
    if not Pose(C, np.zeros(3)).is_valid(1e-6):
        raise ConfigError(f"{where}: not a rotation matrix")
    # re-orthonormalize hand-typed matrices
    U, _, Vt = np.linalg.svd(C)
    return U @ Vt


def parse_sigma(entry: Mapping | None, where: str) -> PerturbationSpec:
    if entry is None:
        return PerturbationSpec()
    try:
        trans = tuple(float(v) for v in entry.get("translation", (0.0, 0.0, 0.0)))
        rot = tuple(math.radians(float(v)) for v in entry.get("rotation_deg", (0.0, 0.0, 0.0)))
        mask = entry.get("mask")
        if mask is None:
            mask = tuple(v > 0 for v in trans + rot)
        return PerturbationSpec(trans, rot, tuple(bool(m) for m in mask))
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _vec(value, n: int, where: str) -> tuple[float, ...]:
    try:
        out = tuple(float(v) for v in value)
    except TypeError:
        raise ConfigError(f"{where}: expected a list of {n} numbers") from None
    if len(out) != n or not all(math.isfinite(v) for v in out):
        raise ConfigError(f"{where}: expected {n} finite numbers")
    return out


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    intrinsics: Intrinsics
    calib: ExtrinsicCalib
    tag_map: TagMap
    tag_sigmas: dict[int, PerturbationSpec]
    middle_tag: int
    trajectories: dict[str, TrajectorySpec]
    levels: dict[str, PerturbationSpec]
    pixel_sigma: float
    velocity_sigma: float
    angular_velocity_sigma: float
    input_noise: bool
    initial_cov: np.ndarray
    sample_initial_error: bool
    per_corner_independent: bool
    divergence_threshold: float
    visibility_margin: float
    scenarios: dict[str, dict]
    raw: dict

    def process_noise(self, dt: float) -> np.ndarray:
        return default_process_noise(dt, self.velocity_sigma, self.angular_velocity_sigma)

    def level_sigma(self, level: str) -> np.ndarray:
        try:
            return build_sigma(self.levels[level])
        except KeyError:
            raise ConfigError(f"unknown uncertainty level {level!r}") from None


def build_config(raw: Mapping) -> ExperimentConfig:
    raw = dict(raw)
    try:
        intr = Intrinsics(**{k: raw["camera"][k] for k in ("fx", "fy", "cx", "cy", "width", "height")})
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"camera: {exc}") from None

    ext = raw["extrinsics"]
    calib = ExtrinsicCalib(Pose(parse_rotation(ext, "extrinsics"),
                                _vec(ext.get("translation", (0, 0, 0)), 3, "extrinsics.translation")))

    tags, tag_sigmas = [], {}
    for i, entry in enumerate(raw["tags"] or []):
        where = f"tags[{i}]"
        try:
            tid = int(entry["id"])
            size = float(entry.get("size_m", 0.165))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
        pose = Pose(parse_rotation(entry, where), _vec(entry.get("position"), 3, f"{where}.position"))
        try:
            tags.append(Tag(tid, size, pose))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        tag_sigmas[tid] = parse_sigma(entry.get("sigma"), f"{where}.sigma")
    try:
        tag_map = TagMap(tags)
    except ValueError as exc:
        raise ConfigError(f"tags: {exc}") from None

    middle = int(raw.get("middle_tag", tag_map.ids[len(tag_map) // 2]))
    if middle not in tag_map:
        raise ConfigError(f"middle_tag {middle} is not in the tag map")

    trajectories = {}
    for name, entry in raw["trajectories"].items():
        entry = dict(entry)
        for key in ("origin", "look_at"):
            if key in entry:
                entry[key] = _vec(entry[key], 3, f"trajectories.{name}.{key}")
        try:
            trajectories[str(name)] = TrajectorySpec(**entry)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"trajectories.{name}: {exc}") from None

    levels = {"none": PerturbationSpec()}
    for name, entry in raw["levels"].items():
        levels[str(name)] = parse_sigma(entry, f"levels.{name}")

    noise, filt = raw["noise"], raw["filter"]
    try:
        pixel_sigma = float(noise["pixel_sigma"])
        init = np.asarray(filt["initial_sigma"], dtype=float).reshape(6)
        cfg = ExperimentConfig(
            intrinsics=intr,
            calib=calib,
            tag_map=tag_map,
            tag_sigmas=tag_sigmas,
            middle_tag=middle,
            trajectories=trajectories,
            levels=levels,
            pixel_sigma=pixel_sigma,
            velocity_sigma=float(noise["velocity_sigma"]),
            angular_velocity_sigma=float(noise["angular_velocity_sigma"]),
            input_noise=bool(noise["input_noise"]),
            initial_cov=check_cov6(np.diag(init**2), name="filter.initial_sigma"),
            sample_initial_error=bool(filt["sample_initial_error"]),
            per_corner_independent=bool(filt["per_corner_independent"]),
            divergence_threshold=float(filt["divergence_threshold"]),
            visibility_margin=float(filt["visibility_margin"]),
            scenarios=dict(raw.get("scenarios") or {}),
            raw=raw,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"noise/filter: {exc}") from None
    if pixel_sigma < 0 or cfg.velocity_sigma < 0 or cfg.angular_velocity_sigma < 0:
        raise ConfigError("noise sigmas must be non-negative")
    if cfg.divergence_threshold <= 0:
        raise ConfigError("filter.divergence_threshold must be positive")
    return cfg


def load_config(path: str | Path | None = None, overrides: Mapping | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                user = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(user, Mapping):
            raise ConfigError(f"{path}: top level must be a mapping")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
        raw = deep_merge(raw, user)
    if overrides:
        raw = deep_merge(raw, overrides)
    return build_config(raw)


def dump_effective(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.raw, sort_keys=False, default_flow_style=None)
