"""Poses, Euler/DCM conversion, rotation composition, error metrics and rotation averaging.

Euler triples are ``(roll, pitch, yaw)`` in radians using the intrinsic Z-Y-X
convention, i.e. ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.  Quaternions are
``(w, x, y, z)`` with a non-negative scalar part.

Most functions accept a single triple/matrix or a batch with a leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_GIMBAL_EPS = 1e-12
ORTHO_TOL = 1e-6


def wrap_angle(a):
    """Wrap angles to the half-open interval (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = np.pi - np.mod(np.pi - a, 2.0 * np.pi)
    return out if out.ndim else float(out)


@dataclass
class Pose6D:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3).copy()
        self.orientation = wrap_angle(np.asarray(self.orientation, dtype=float).reshape(3))
        if not np.all(np.isfinite(self.position)):
            raise ValueError("pose position must be finite")
        if not np.all(np.isfinite(self.orientation)):
            raise ValueError("pose orientation must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])

    @classmethod
    def from_vector(cls, v) -> "Pose6D":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    def dcm(self) -> np.ndarray:
        return euler_to_dcm(self.orientation)


def euler_to_dcm(e) -> np.ndarray:
    """Rotation matrix for Euler triple(s) ``(roll, pitch, yaw)``; shape (..., 3, 3)."""
    e = np.asarray(e, dtype=float)
    if not np.all(np.isfinite(e)):
        raise ValueError("Euler angles must be finite")
    r, p, y = e[..., 0], e[..., 1], e[..., 2]
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    R = np.empty(e.shape[:-1] + (3, 3))
    R[..., 0, 0] = cy * cp
    R[..., 0, 1] = cy * sp * sr - sy * cr
    R[..., 0, 2] = cy * sp * cr + sy * sr
    R[..., 1, 0] = sy * cp
    R[..., 1, 1] = sy * sp * sr + cy * cr
    R[..., 1, 2] = sy * sp * cr - cy * sr
    R[..., 2, 0] = -sp
    R[..., 2, 1] = cp * sr
    R[..., 2, 2] = cp * cr
    return R


def check_rotation(R, tol: float = ORTHO_TOL) -> None:
    """Raise ValueError unless every matrix in ``R`` is a proper rotation."""
    R = np.asarray(R, dtype=float)
    if R.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) rotation, got shape {R.shape}")
    gram = np.swapaxes(R, -1, -2) @ R
    if not np.all(np.abs(gram - np.eye(3)) <= tol):
        raise ValueError("matrix is not orthonormal")
    if not np.all(np.linalg.det(R) > 0):
        raise ValueError("matrix is a reflection, not a rotation")


def _dcm_to_euler_unchecked(R: np.ndarray) -> np.ndarray:
    cp = np.hypot(R[..., 0, 0], R[..., 1, 0])
    pitch = np.arctan2(-R[..., 2, 0], cp)
    roll = np.arctan2(R[..., 2, 1], R[..., 2, 2])
    yaw = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    # at gimbal lock only roll - yaw (or roll + yaw) is observable: pin roll to 0
    locked = cp < _GIMBAL_EPS
    if np.any(locked):
        roll = np.where(locked, 0.0, roll)
        yaw = np.where(locked, np.arctan2(-R[..., 0, 1], R[..., 1, 1]), yaw)
    out = np.stack([roll, pitch, yaw], axis=-1)
    return wrap_angle(out)


def dcm_to_euler(R) -> np.ndarray:
    """Inverse of :func:`euler_to_dcm`. Rejects matrices that are not rotations."""
    R = np.asarray(R, dtype=float)
    check_rotation(R)
    return _dcm_to_euler_unchecked(R)


def compose_rotation(a, b) -> np.ndarray:
    """Euler triple of ``dcm(a) @ dcm(b)``."""
    return _dcm_to_euler_unchecked(euler_to_dcm(a) @ euler_to_dcm(b))


def rotation_error(R_est, R_gt) -> float:
    """Geodesic angle (radians) between two rotation matrices.

    Evaluated as ``atan2(|skew|, trace - 1)`` of ``R_gt^T R_est``, which equals
    ``arccos((trace - 1) / 2)`` but keeps full precision near 0 and pi.
    """
    R_est = np.asarray(R_est, dtype=float)
    R_gt = np.asarray(R_gt, dtype=float)
    D = np.swapaxes(R_gt, -1, -2) @ R_est
    c = D[..., 0, 0] + D[..., 1, 1] + D[..., 2, 2] - 1.0
    s = np.sqrt(
        (D[..., 2, 1] - D[..., 1, 2]) ** 2
        + (D[..., 0, 2] - D[..., 2, 0]) ** 2
        + (D[..., 1, 0] - D[..., 0, 1]) ** 2
    )
    ang = np.arctan2(s, c)
    return ang if np.ndim(ang) else float(ang)


def translation_error(c_est, c_gt) -> float:
    d = np.linalg.norm(np.asarray(c_est, dtype=float) - np.asarray(c_gt, dtype=float), axis=-1)
    return d if np.ndim(d) else float(d)


def euler_to_quat(e) -> np.ndarray:
    """Unit quaternion(s) ``(w, x, y, z)`` with ``w >= 0``."""
    e = np.asarray(e, dtype=float)
    hr, hp, hy = e[..., 0] / 2, e[..., 1] / 2, e[..., 2] / 2
    cr, sr = np.cos(hr), np.sin(hr)
    cp, sp = np.cos(hp), np.sin(hp)
    cy, sy = np.cos(hy), np.sin(hy)
    q = np.stack(
        [
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ],
        axis=-1,
    )
    return canonical_quat(q)


def canonical_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., :1] < 0, -q, q)


def quat_to_dcm(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_to_euler(q) -> np.ndarray:
    return _dcm_to_euler_unchecked(quat_to_dcm(q))


def average_quaternions(qs, weights=None) -> np.ndarray:
    """Weighted quaternion mean: principal eigenvector of ``sum w q q^T``.

    When the top eigenvalue is degenerate (e.g. two rotations pi apart) the
    first input quaternion projected onto the top eigenspace is returned.
    """
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    if qs.shape[0] == 0:
        raise ValueError("cannot average an empty set of rotations")
    qs = canonical_quat(qs)
    # align hemispheres with the first input; M is sign invariant but this keeps
    # the tie-break projection well defined
    flip = qs @ qs[0] < 0
    qs = np.where(flip[:, None], -qs, qs)
    w = np.ones(len(qs)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(qs),) or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be non-negative with positive sum")
    M = (qs * w[:, None]).T @ qs / w.sum()
    vals, vecs = np.linalg.eigh(M)
    top = vecs[:, -1]
    if vals[-1] - vals[-2] <= 1e-12 * max(vals[-1], 1.0):
        eig_space = vecs[:, vals >= vals[-1] - 1e-12 * max(vals[-1], 1.0)]
        proj = eig_space @ (eig_space.T @ qs[0])
        if np.linalg.norm(proj) > 1e-12:
            top = proj
    if top @ qs[0] < 0:
        top = -top
    return canonical_quat(top)


def mean_rotation(rs, weights=None) -> np.ndarray:
    """Mean of Euler triples via quaternion eigen-averaging, returned as Euler."""
    rs = np.asarray(rs, dtype=float)
    if rs.size == 0:
        raise ValueError("cannot average an empty set of rotations")
    rs = rs.reshape(-1, 3)
    q = average_quaternions(euler_to_quat(rs), weights)
    return quat_to_euler(q)


def axis_angle_to_dcm(axis, angle) -> np.ndarray:
    """Rodrigues formula; used to build test rotations and noise."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=float)[..., None, None]
    K = np.zeros(axis.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -axis[..., 2], axis[..., 1]
    K[..., 1, 0], K[..., 1, 2] = axis[..., 2], -axis[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -axis[..., 1], axis[..., 0]
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)
