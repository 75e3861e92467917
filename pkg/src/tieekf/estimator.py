"""On-manifold EKF over SE(3) with pixel-level tag corner measurements.

The state pose ``T_vi`` maps inertial coordinates into the vehicle frame and
its covariance describes a left perturbation ``T = exp(dxi^) @ T_mean``.
A measured corner is ``project(D^T T_cv T_vi T_itau P)``.

Two correction modes share one code path:

* ``Mode.EKF`` treats tag poses as exact and uses ``pixel_sigma**2 * I``.
* ``Mode.TIE_EKF`` adds the projected tag pose uncertainty
  ``(S E) Sigma_tau (S E)^T`` to each tag's block of the noise covariance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .camera import (
    VISIBILITY_MARGIN,
    Z_MIN,
    Intrinsics,
    PixelPoint,
    in_view,
    project_batch,
    projection_jacobian_batch,
)
from .lie import Pose, adjoint, dot_op, dot_op_batch, exp_se3, check_cov6
from .tags import TagMap


class Mode(str, enum.Enum):
    EKF = "EKF"
    TIE_EKF = "TIE-EKF"


class SingularInnovationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class FilterState:
    pose: Pose
    cov: np.ndarray

    @property
    def position(self) -> np.ndarray:
        """Vehicle position in the inertial frame."""
        return -self.pose.rotation.T @ self.pose.translation


@dataclass(frozen=True, eq=False)
class MotionInput:
    xi_rel: np.ndarray
    process_noise: np.ndarray


@dataclass(frozen=True, eq=False)
class TagObservation:
    tag_id: int
    corners: np.ndarray  # (4, 2) pixels, corner order of corner_points_tag_frame
    pixel_sigma: float = 1.0

    def __post_init__(self):
        c = np.array([tuple(p) if isinstance(p, PixelPoint) else p for p in self.corners], dtype=float)
        if c.shape != (4, 2):
            raise ValueError("a tag observation needs exactly four (u, v) corners")
        if not self.pixel_sigma > 0:
            raise ValueError("pixel_sigma must be positive")
        object.__setattr__(self, "corners", c)


@dataclass(frozen=True, eq=False)
class ExtrinsicCalib:
    T_cv: Pose = field(default_factory=Pose.identity)


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict(state: FilterState, inp: MotionInput) -> FilterState:
    Xi = exp_se3(inp.xi_rel)
    F = adjoint(Xi)
    P = F @ state.cov @ F.T + inp.process_noise
    return FilterState(Xi @ state.pose, symmetrize(P))


def predict_corner_camframe(state_pose: Pose, calib: ExtrinsicCalib, tag_nominal: Pose, corner) -> np.ndarray:
    return (calib.T_cv @ state_pose @ tag_nominal @ np.asarray(corner, dtype=float))[:3]


def state_jacobian_Z(state_pose: Pose, calib: ExtrinsicCalib, tag_nominal: Pose, corner) -> np.ndarray:
    """3x6 derivative of the camera-frame corner w.r.t. a left state perturbation."""
    p_v = state_pose @ (tag_nominal @ np.asarray(corner, dtype=float))
    return (calib.T_cv.matrix @ dot_op(p_v))[:3]


def tag_jacobian_E(state_pose: Pose, calib: ExtrinsicCalib, tag_nominal: Pose, corner) -> np.ndarray:
    """3x6 derivative of the camera-frame corner w.r.t. a left tag-pose perturbation."""
    p_i = tag_nominal @ np.asarray(corner, dtype=float)
    return ((calib.T_cv @ state_pose).matrix @ dot_op(p_i))[:3]


def augmented_noise_block(S_list: Sequence[np.ndarray], E_list: Sequence[np.ndarray],
                          sigma_tau: np.ndarray, pixel_sigma: float) -> np.ndarray:
    """Noise covariance of one tag's stacked corners with a shared tag-pose error.

    Returns ``H Sigma_tau H^T + pixel_sigma**2 I`` where ``H`` stacks the
    per-corner 2x6 products ``S_n @ E_n``. Works for any number of corners
    (four for a fully visible tag).
    """
    H = np.concatenate([np.asarray(S) @ np.asarray(E) for S, E in zip(S_list, E_list)], axis=0)
    R = H @ sigma_tau @ H.T
    R[np.diag_indices_from(R)] += pixel_sigma**2
    return symmetrize(R)


@dataclass
class _Stack:
    innovation: np.ndarray
    G: np.ndarray
    R: np.ndarray


def _stack_measurements(pose: Pose, observations, tag_map: TagMap, calib: ExtrinsicCalib,
                        intr: Intrinsics, mode: Mode, per_corner_independent: bool,
                        margin: float, z_min: float) -> _Stack | None:
    Tcv = calib.T_cv.matrix
    Tvi = pose.matrix
    C_cv = Tcv[:3, :3]

    # resolve ids before any arithmetic so unknown ids always raise
    tags = [tag_map[obs.tag_id] for obs in observations]
    m = len(tags)

    p_i = np.concatenate([t.world_corners for t in tags], axis=1)  # (4, 4m)
    p_v = Tvi @ p_i
    p_c = (Tcv @ p_v)[:3]
    y_pred = project_batch(p_c, intr)
    keep = in_view(y_pred, p_c[2], intr, margin, z_min)
    if not keep.any():
        return None

    S = projection_jacobian_batch(p_c, intr)          # (4m, 2, 3)
    G = S @ (C_cv @ dot_op_batch(p_v))                # (4m, 2, 6)
    y = np.concatenate([obs.corners for obs in observations], axis=0)
    sig2 = np.repeat([obs.pixel_sigma**2 for obs in observations], 8)

    n = 8 * m
    R = np.zeros((m, 8, m, 8))
    if mode is Mode.TIE_EKF:
        C_cvi = C_cv @ Tvi[:3, :3]
        H = (S @ (C_cvi @ dot_op_batch(p_i))).reshape(m, 8, 6)
        Sig = np.stack([t.sigma_tau for t in tags])
        blocks = H @ Sig @ H.transpose(0, 2, 1)       # (m, 8, 8)
        if per_corner_independent:
            blocks = blocks * _CORNER_MASK
        R[np.arange(m), :, np.arange(m), :] = blocks
    R = R.reshape(n, n)
    R[np.diag_indices(n)] += sig2
    rows = np.repeat(keep, 2)
    if not rows.all():
        R = R[np.ix_(rows, rows)]
    return _Stack(
        innovation=(y[keep] - y_pred[keep]).reshape(-1),
        G=G[keep].reshape(-1, 6),
        R=R,
    )


# Keeps only the 2x2 (u, v) block of each corner within a tag's 8x8 block.
_CORNER_MASK = np.kron(np.eye(4), np.ones((2, 2)))


def correct(state: FilterState, observations: Sequence[TagObservation], tag_map: TagMap,
            calib: ExtrinsicCalib, intr: Intrinsics, mode: Mode = Mode.EKF, *,
            per_corner_independent: bool = False, r_scale: float = 1.0,
            margin: float = VISIBILITY_MARGIN, z_min: float = Z_MIN) -> FilterState:
    """Fuse all corners of all observed tags in one Kalman update.

    Predicted corners that fall behind the camera or outside the image are
    dropped together with their rows. ``r_scale`` multiplies the whole
    measurement covariance (a probe for trust degradation; normally 1).
    """
    mode = Mode(mode)
    if not observations:
        return state
    st = _stack_measurements(state.pose, observations, tag_map, calib, intr, mode,
                             per_corner_independent, margin, z_min)
    if st is None:
        return state
    P = state.cov
    G = st.G
    PGt = P @ G.T
    S_inn = symmetrize(G @ PGt + r_scale * st.R)
    try:
        cf = cho_factor(S_inn, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(S_inn) if np.all(np.isfinite(S_inn)) else np.inf
        raise SingularInnovationError(
            f"innovation covariance ({S_inn.shape[0]} rows) is not positive definite; cond={cond:.3e}"
        ) from exc
    K = cho_solve(cf, PGt.T).T
    dxi = K @ st.innovation
    P_new = (np.eye(6) - K @ G) @ P
    return FilterState(exp_se3(dxi) @ state.pose, symmetrize(P_new))


def default_process_noise(dt: float, sigma_trans: float = 0.05, sigma_rot: float = 0.05) -> np.ndarray:
    """Diagonal Q for one step from velocity noise densities (m/s, rad/s)."""
    return np.diag([(sigma_trans * dt) ** 2] * 3 + [(sigma_rot * dt) ** 2] * 3)


def default_initial_cov() -> np.ndarray:
    return np.diag([1e-4] * 6)


def make_state(pose: Pose, cov=None) -> FilterState:
    cov = default_initial_cov() if cov is None else check_cov6(cov)
    return FilterState(pose, np.array(cov, dtype=float))
