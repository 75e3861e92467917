"""SO(3)/SE(3) matrix Lie group utilities.

Twists are ordered ``[rho; phi]`` (translation first, rotation second) and all
6x6 covariances use the same ordering. Uncertain poses follow the left
perturbation convention ``T = exp(eps^) @ T_mean``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SMALL_ANGLE = 1e-8
# Below this distance from pi the axis is recovered from the symmetric part.
NEAR_PI = 1e-2
PSD_TOL = 1e-10


def _frozen(a, shape) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.shape != shape:
        a = a.reshape(shape)
    a.flags.writeable = False
    return a


def hat3(phi) -> np.ndarray:
    """Skew-symmetric matrix such that ``hat3(a) @ b == cross(a, b)``."""
    x, y, z = np.asarray(phi, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee3(m, tol: float = 1e-9) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"vee3 expects a 3x3 matrix, got shape {m.shape}")
    if not np.allclose(m, -m.T, atol=tol, rtol=0.0):
        raise ValueError("vee3 expects an antisymmetric matrix")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def hat6(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(6)
    out = np.zeros((4, 4))
    out[:3, :3] = hat3(xi[3:])
    out[:3, 3] = xi[:3]
    return out


def vee6(m, tol: float = 1e-9) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (4, 4):
        raise ValueError(f"vee6 expects a 4x4 matrix, got shape {m.shape}")
    if np.any(np.abs(m[3]) > tol):
        raise ValueError("vee6 expects a zero bottom row")
    return np.concatenate([m[:3, 3], vee3(m[:3, :3], tol)])


def exp_so3(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float).reshape(3)
    theta = math.sqrt(phi @ phi)
    A = hat3(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + A + 0.5 * (A @ A)
    return (
        np.eye(3)
        + (math.sin(theta) / theta) * A
        + ((1.0 - math.cos(theta)) / theta**2) * (A @ A)
    )


def left_jacobian_so3(phi) -> np.ndarray:
    """Left Jacobian of SO(3); maps ``rho`` to the translation of ``exp_se3``."""
    phi = np.asarray(phi, dtype=float).reshape(3)
    theta = math.sqrt(phi @ phi)
    A = hat3(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * A + (A @ A) / 6.0
    return (
        np.eye(3)
        + ((1.0 - math.cos(theta)) / theta**2) * A
        + ((theta - math.sin(theta)) / theta**3) * (A @ A)
    )


def _canonical_sign(axis: np.ndarray) -> np.ndarray:
    return axis if axis[np.argmax(np.abs(axis))] >= 0.0 else -axis


def log_so3(C) -> np.ndarray:
    """Rotation vector of ``C`` with norm in ``[0, pi]``.

    At exactly pi the axis sign is fixed so that its largest-magnitude
    component is positive.
    """
    C = np.asarray(C, dtype=float)
    cos_t = min(1.0, max(-1.0, 0.5 * (np.trace(C) - 1.0)))
    w = 0.5 * np.array([C[2, 1] - C[1, 2], C[0, 2] - C[2, 0], C[1, 0] - C[0, 1]])
    # atan2 stays well conditioned near 0 and pi, where acos loses half the digits
    theta = math.atan2(math.sqrt(w @ w), cos_t)
    if theta < SMALL_ANGLE:
        return w
    if math.pi - theta > NEAR_PI:
        return (theta / math.sin(theta)) * w
    # near pi: (C + C^T)/2 = cos I + (1 - cos) a a^T
    B = (0.5 * (C + C.T) - cos_t * np.eye(3)) / (1.0 - cos_t)
    i = int(np.argmax(np.diag(B)))
    axis = B[:, i] / math.sqrt(max(B[i, i], 0.0))
    axis /= np.linalg.norm(axis)
    s = axis @ w
    if abs(s) > 1e-12:
        axis = axis if s > 0 else -axis
    else:
        axis = _canonical_sign(axis)
    return theta * axis


def _so3_terms(phi: np.ndarray):
    """Rotation matrix and left Jacobian sharing one hat/square evaluation."""
    theta = math.sqrt(phi @ phi)
    A = hat3(phi)
    A2 = A @ A
    if theta < SMALL_ANGLE:
        return np.eye(3) + A + 0.5 * A2, np.eye(3) + 0.5 * A + A2 / 6.0
    s, c = math.sin(theta), math.cos(theta)
    t2 = theta * theta
    b = (1.0 - c) / t2
    C = np.eye(3) + (s / theta) * A + b * A2
    J = np.eye(3) + b * A + ((theta - s) / (t2 * theta)) * A2
    return C, J


def exp_se3(xi) -> "Pose":
    xi = np.asarray(xi, dtype=float).reshape(6)
    C, J = _so3_terms(xi[3:])
    return Pose(C, J @ xi[:3])


def exp_se3_matrix(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(6)
    C, J = _so3_terms(xi[3:])
    out = np.eye(4)
    out[:3, :3] = C
    out[:3, 3] = J @ xi[:3]
    return out


def log_se3(T) -> np.ndarray:
    if isinstance(T, Pose):
        C, r = T.rotation, T.translation
    else:
        T = np.asarray(T, dtype=float)
        C, r = T[:3, :3], T[:3, 3]
    phi = log_so3(C)
    rho = np.linalg.solve(left_jacobian_so3(phi), r)
    return np.concatenate([rho, phi])


def adjoint(T) -> np.ndarray:
    """6x6 adjoint ``[[C, hat(r) C], [0, C]]``."""
    if isinstance(T, Pose):
        C, r = T.rotation, T.translation
    else:
        T = np.asarray(T, dtype=float)
        C, r = T[:3, :3], T[:3, 3]
    out = np.zeros((6, 6))
    out[:3, :3] = C
    out[:3, 3:] = hat3(r) @ C
    out[3:, 3:] = C
    return out


def dot_op(p) -> np.ndarray:
    """4x6 matrix with ``hat6(xi) @ p == dot_op(p) @ xi``."""
    p = np.asarray(p, dtype=float).reshape(4)
    out = np.zeros((4, 6))
    out[:3, :3] = p[3] * np.eye(3)
    out[:3, 3:] = -hat3(p[:3])
    return out


def dot_op_batch(points: np.ndarray) -> np.ndarray:
    """Top 3x6 block of ``dot_op`` for each column of a (4, N) point array.

    Returns shape (N, 3, 6); the dropped bottom row is always zero.
    """
    x, y, z, s = points
    n = points.shape[1]
    out = np.zeros((n, 3, 6))
    out[:, 0, 0] = s
    out[:, 1, 1] = s
    out[:, 2, 2] = s
    # -hat3(eps)
    out[:, 0, 4] = z
    out[:, 0, 5] = -y
    out[:, 1, 3] = -z
    out[:, 1, 5] = x
    out[:, 2, 3] = y
    out[:, 2, 4] = -x
    return out


def check_cov6(cov, tol: float = PSD_TOL, name: str = "covariance") -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (6, 6):
        raise ValueError(f"{name} must be 6x6, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-9, rtol=0.0):
        raise ValueError(f"{name} is not symmetric")
    lo = np.linalg.eigvalsh(0.5 * (cov + cov.T)).min()
    if lo < -tol:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {lo:.3e})")
    return cov


def cov_factor(cov, tol: float = PSD_TOL) -> np.ndarray:
    """Square-root factor ``L`` with ``L @ L.T == cov``.

    Works for rank-deficient covariances: eigenvalues in ``[-tol, 0)`` are
    clamped to zero, anything more negative is rejected.
    """
    cov = check_cov6(cov, tol)
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def sample_perturbed(mean: "Pose", cov, rng: np.random.Generator) -> "Pose":
    """Draw ``exp(eps^) @ mean`` with ``eps ~ N(0, cov)``.

    Always consumes exactly six standard normal draws from ``rng``, including
    when ``cov`` is zero, so paired random streams stay aligned.
    """
    L = cov_factor(cov)
    eps = L @ rng.standard_normal(6)
    if not eps.any():
        return mean
    return exp_se3(eps) @ mean


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``[C r; 0 1]``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @cached_property
    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        out.flags.writeable = False
        return out

    def inverse(self) -> "Pose":
        Ct = self.rotation.T
        return Pose(Ct, -Ct @ self.translation)

    def __matmul__(self, other):
        if isinstance(other, Pose):
            return Pose(
                self.rotation @ other.rotation,
                self.rotation @ other.translation + self.translation,
            )
        # homogeneous point(s): shape (4,) or (4, N)
        return self.matrix @ np.asarray(other, dtype=float)

    def is_valid(self, tol: float = 1e-9) -> bool:
        C = self.rotation
        return bool(
            np.allclose(C @ C.T, np.eye(3), atol=tol, rtol=0.0)
            and abs(np.linalg.det(C) - 1.0) < tol
            and np.all(np.isfinite(self.translation))
        )

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, atol=atol, rtol=0.0))


@dataclass(frozen=True, eq=False)
class UncertainPose:
    mean: Pose
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cov", _frozen(check_cov6(self.cov), (6, 6)))

    def sample(self, rng: np.random.Generator) -> Pose:
        return sample_perturbed(self.mean, self.cov, rng)
