"""Tag maps: nominal tag poses, corner geometry and installation error."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable

import numpy as np

from .lie import Pose, check_cov6, sample_perturbed

TAG_SIZE = 0.165

# Axis masks over the twist slots [x, y, z, theta_x, theta_y, theta_z].
IN_PLANE = (True, False, True, False, True, False)
ALL_AXES = (True,) * 6

# Wall tag orientation: tag X points along -X (right for a viewer facing the
# wall), tag Y up, tag Z out of the wall along +Y.
WALL_ROTATION = np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class PerturbationSpec:
    sigma_translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sigma_rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mask: tuple[bool, ...] = ALL_AXES

    def __post_init__(self):
        object.__setattr__(self, "sigma_translation", tuple(float(s) for s in self.sigma_translation))
        object.__setattr__(self, "sigma_rotation", tuple(float(s) for s in self.sigma_rotation))
        object.__setattr__(self, "mask", tuple(bool(m) for m in self.mask))
        if len(self.sigma_translation) != 3 or len(self.sigma_rotation) != 3 or len(self.mask) != 6:
            raise ValueError("perturbation spec needs 3 translation sigmas, 3 rotation sigmas and a 6-slot mask")
        if min(self.sigma_translation + self.sigma_rotation) < 0:
            raise ValueError("perturbation sigmas must be non-negative")

    @classmethod
    def in_plane(cls, sigma_xz: float, sigma_theta_y_deg: float) -> "PerturbationSpec":
        return cls((sigma_xz, 0.0, sigma_xz), (0.0, np.deg2rad(sigma_theta_y_deg), 0.0), IN_PLANE)


def build_sigma(spec: PerturbationSpec) -> np.ndarray:
    """Diagonal tag-pose covariance in ``[rho; phi]`` ordering."""
    sig = np.array(spec.sigma_translation + spec.sigma_rotation)
    sig = np.where(spec.mask, sig, 0.0)
    return np.diag(sig**2)


LEVELS = {
    "none": PerturbationSpec(),
    "low": PerturbationSpec.in_plane(0.01, 1.0),
    "high": PerturbationSpec.in_plane(0.05, 5.0),
    "extreme": PerturbationSpec((0.05, 0.05, 0.05), (np.deg2rad(5.0),) * 3, ALL_AXES),
}


def corner_points_tag_frame(size: float) -> np.ndarray:
    """Homogeneous corners as columns of a 4x4 array.

    Counterclockwise from bottom-left: (-h,-h), (h,-h), (h,h), (-h,h).
    """
    if not size > 0:
        raise ValueError("tag size must be positive")
    h = 0.5 * size
    return np.array(
        [
            [-h, h, h, -h],
            [-h, -h, h, h],
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0],
        ]
    )


@dataclass(frozen=True, eq=False)
class Tag:
    id: int
    size: float
    nominal_pose: Pose
    sigma_tau: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError(f"tag {self.id}: size must be positive")
        sig = np.array(check_cov6(self.sigma_tau, name=f"tag {self.id} sigma_tau"))
        sig.flags.writeable = False
        object.__setattr__(self, "sigma_tau", sig)

    @property
    def corners(self) -> np.ndarray:
        return corner_points_tag_frame(self.size)

    @cached_property
    def world_corners(self) -> np.ndarray:
        """Corners of the nominal pose in the inertial frame, (4, 4) columns."""
        out = self.nominal_pose @ self.corners
        out.flags.writeable = False
        return out


def corner_points_world(tag: Tag, true_pose: Pose | None = None) -> np.ndarray:
    """World-frame homogeneous corners (4x4, one per column)."""
    if true_pose is None:
        return tag.world_corners
    return true_pose @ tag.corners


class TagMap:
    """Ordered, id-unique collection of tags."""

    def __init__(self, tags: Iterable[Tag]):
        self.tags: tuple[Tag, ...] = tuple(tags)
        if not self.tags:
            raise ValueError("tag map must not be empty")
        self._by_id = {t.id: t for t in self.tags}
        if len(self._by_id) != len(self.tags):
            raise ValueError("tag ids must be unique")

    def __getitem__(self, tag_id: int) -> Tag:
        try:
            return self._by_id[tag_id]
        except KeyError:
            raise KeyError(f"unknown tag id {tag_id}") from None

    def __contains__(self, tag_id) -> bool:
        return tag_id in self._by_id

    def __iter__(self):
        return iter(self.tags)

    def __len__(self) -> int:
        return len(self.tags)

    @property
    def ids(self) -> list[int]:
        return [t.id for t in self.tags]

    def with_sigma(self, sigma: np.ndarray, ids: Iterable[int] | None = None) -> "TagMap":
        """Copy with ``sigma_tau`` set on the listed tags (all when ``ids`` is None)
        and zeroed on the rest."""
        ids = set(self.ids if ids is None else ids)
        zero = np.zeros((6, 6))
        return TagMap(replace(t, sigma_tau=sigma if t.id in ids else zero) for t in self.tags)


def perturb_map(tag_map: TagMap, perturbed_ids: Iterable[int], rng: np.random.Generator) -> TagMap:
    """Sample installed tag poses ``exp(eps^) @ nominal`` for the listed tags.

    Six normal draws are consumed per tag in map order, listed or not, so
    the stream position does not depend on which tags are perturbed.
    """
    ids = set(perturbed_ids)
    unknown = ids - set(tag_map.ids)
    if unknown:
        raise KeyError(f"unknown tag ids {sorted(unknown)}")
    zero = np.zeros((6, 6))
    out = []
    for tag in tag_map:
        pose = sample_perturbed(tag.nominal_pose, tag.sigma_tau if tag.id in ids else zero, rng)
        out.append(replace(tag, nominal_pose=pose))
    return TagMap(out)


def default_tag_map(size: float = TAG_SIZE, spacing: float = 1.0, height: float = 1.0) -> TagMap:
    """Three coplanar wall tags at x = -spacing, 0, +spacing on the y = 0 plane."""
    return TagMap(
        Tag(i, size, Pose(WALL_ROTATION, (x, 0.0, height)))
        for i, x in enumerate((-spacing, 0.0, spacing))
    )
