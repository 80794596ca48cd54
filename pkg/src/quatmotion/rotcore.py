"""Quaternion and rotation-representation algebra.

Quaternions are float arrays of shape ``(..., 4)`` stored scalar-first,
``(w, x, y, z)``. Every function broadcasts over leading dimensions unless
noted otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
# below this angle the axis of a rotation is numerically meaningless
SMALL_ANGLE = 1e-8
# tolerance used when validating that inputs lie on the unit sphere
UNIT_TOL = 1e-6
EULER_SEQUENCES = ("XYZ", "ZXY")
# cos(middle angle) under which an Euler triple is reported as gimbal locked
GIMBAL_TOL = 1e-9


@dataclass(frozen=True)
class AxisAngle:
    axis: np.ndarray
    angle: float

    def as_rotvec(self) -> np.ndarray:
        return np.asarray(self.axis, dtype=float) * self.angle


@dataclass(frozen=True)
class EulerAngles:
    """Three intrinsic angles applied in ``sequence`` order, each in [0, 2pi)."""

    sequence: str
    angles: np.ndarray
    gimbal_locked: bool = field(default=False)


def identity(shape=()) -> np.ndarray:
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    q = np.zeros(shape + (4,))
    q[..., 0] = 1.0
    return q


def hamilton(p, q) -> np.ndarray:
    """Hamilton product ``p (x) q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, px, py, pz = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            # grouped so that p (x) p* cancels exactly
            (pw * qx + px * qw) + (py * qz - pz * qy),
            (pw * qy + py * qw) + (pz * qx - px * qz),
            (pw * qz + pz * qw) + (px * qy - py * qx),
        ],
        axis=-1,
    )


def conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def vec(q) -> np.ndarray:
    """Vector (imaginary) part of ``q``."""
    return np.asarray(q, dtype=float)[..., 1:].copy()


def norm(q) -> np.ndarray:
    return np.linalg.norm(np.asarray(q, dtype=float), axis=-1)


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def check_unit(q, name="q", tol=UNIT_TOL) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ValueError(f"{name} must have a trailing dimension of 4, got shape {q.shape}")
    dev = np.abs(norm(q) - 1.0)
    if not np.all(dev <= tol):
        raise ValueError(f"{name} is off the unit sphere (max |norm - 1| = {np.max(dev):.3g})")
    return q


def canonicalize(q, reference=None) -> np.ndarray:
    """Flip the sign of ``q`` so that it lies in the same hemisphere as ``reference``.

    Without a reference, the scalar part is made non-negative.
    """
    q = np.asarray(q, dtype=float)
    if reference is None:
        s = q[..., 0]
    else:
        s = np.sum(q * np.asarray(reference, dtype=float), axis=-1)
    sign = np.where(s < 0.0, -1.0, 1.0)
    return q * sign[..., None]


def from_axis_angle(axis, angle=None) -> np.ndarray:
    """Quaternion ``(cos(a/2), e sin(a/2))`` with ``e`` the normalised axis.

    Accepts an :class:`AxisAngle` too.
    """
    if isinstance(axis, AxisAngle):
        axis, angle = axis.axis, axis.angle
    axis = np.asarray(axis, dtype=float)
    length = np.linalg.norm(axis, axis=-1, keepdims=True)
    if np.any(length == 0):
        raise ValueError("rotation axis must be non-zero")
    axis = axis / length
    half = 0.5 * np.asarray(angle, dtype=float)
    return np.concatenate([np.cos(half)[..., None], axis * np.sin(half)[..., None]], axis=-1)


def to_axis_angle(q) -> AxisAngle:
    """Canonical axis-angle of a single quaternion, angle in [0, pi]."""
    q = canonicalize(np.asarray(q, dtype=float))
    s = np.linalg.norm(q[1:])
    angle = 2.0 * np.arctan2(s, q[0])
    if angle < SMALL_ANGLE:
        return AxisAngle(np.array([1.0, 0.0, 0.0]), 0.0)
    return AxisAngle(q[1:] / s, float(angle))


def log_map(q) -> np.ndarray:
    """Rotation vector of ``q`` (shortest rotation, norm in [0, pi])."""
    q = canonicalize(np.asarray(q, dtype=float))
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1)
    angle = 2.0 * np.arctan2(s, q[..., 0])
    small = angle < SMALL_ANGLE
    # 2 atan2(s, w) / s -> 2 / w as s -> 0
    scale = np.where(small, 2.0 / np.where(small, q[..., 0], 1.0), angle / np.where(small, 1.0, s))
    return v * scale[..., None]


def exp_map(rotvec) -> np.ndarray:
    """Inverse of :func:`log_map`."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec, axis=-1)
    small = angle < SMALL_ANGLE
    half = 0.5 * angle
    # sin(a/2)/a with a two-term series near zero
    k = np.where(small, 0.5 - angle**2 / 48.0, np.sin(half) / np.where(small, 1.0, angle))
    return np.concatenate([np.cos(half)[..., None], rotvec * k[..., None]], axis=-1)


def to_rotation_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def rotate(q, v) -> np.ndarray:
    """Rotate 3-vectors ``v`` by unit quaternions ``q``."""
    return np.einsum("...ij,...j->...i", to_rotation_matrix(q), np.asarray(v, dtype=float))


_AXES = {"X": 0, "Y": 1, "Z": 2}


def _elementary(axis_char, angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    e = np.zeros(angle.shape + (3,))
    e[..., _AXES[axis_char]] = 1.0
    return from_axis_angle(e, angle)


def wrap_angle(a) -> np.ndarray:
    """Wrap angles to [0, 2pi)."""
    a = np.mod(np.asarray(a, dtype=float), TWO_PI)
    return np.where(a >= TWO_PI, 0.0, a)


def from_euler(angles, sequence="XYZ") -> np.ndarray:
    """Compose intrinsic elementary rotations in ``sequence`` order.

    ``angles[..., i]`` rotates about the i-th axis named in ``sequence``.
    An :class:`EulerAngles` instance may be passed instead.
    """
    if isinstance(angles, EulerAngles):
        angles, sequence = angles.angles, angles.sequence
    if sequence not in EULER_SEQUENCES:
        raise ValueError(f"unsupported Euler sequence {sequence!r}")
    angles = np.asarray(angles, dtype=float)
    q = _elementary(sequence[0], angles[..., 0])
    q = hamilton(q, _elementary(sequence[1], angles[..., 1]))
    return hamilton(q, _elementary(sequence[2], angles[..., 2]))


def euler_array(q, sequence="XYZ"):
    """Batched inverse of :func:`from_euler`.

    Returns ``(angles, locked)``: angles wrapped to [0, 2pi) with shape
    ``(..., 3)`` and a boolean mask of gimbal-locked entries, whose third
    (free) angle is set to 0.
    """
    if sequence not in EULER_SEQUENCES:
        raise ValueError(f"unsupported Euler sequence {sequence!r}")
    R = to_rotation_matrix(q)
    if sequence == "XYZ":
        sin_mid = R[..., 0, 2]
        cos_mid = np.hypot(R[..., 0, 0], R[..., 0, 1])
        first = np.arctan2(-R[..., 1, 2], R[..., 2, 2])
        third = np.arctan2(-R[..., 0, 1], R[..., 0, 0])
        first_locked = np.arctan2(R[..., 2, 1], R[..., 1, 1])
    else:
        sin_mid = R[..., 2, 1]
        cos_mid = np.hypot(R[..., 2, 0], R[..., 2, 2])
        first = np.arctan2(-R[..., 0, 1], R[..., 1, 1])
        third = np.arctan2(-R[..., 2, 0], R[..., 2, 2])
        first_locked = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    middle = np.arctan2(sin_mid, cos_mid)
    locked = cos_mid < GIMBAL_TOL
    first = np.where(locked, first_locked, first)
    third = np.where(locked, 0.0, third)
    return wrap_angle(np.stack([first, middle, third], axis=-1)), locked


def to_euler(q, sequence="XYZ") -> EulerAngles:
    angles, locked = euler_array(np.asarray(q, dtype=float), sequence)
    return EulerAngles(sequence, angles, bool(locked))


def omega_matrix(omega) -> np.ndarray:
    """The 4x4 QDE generator ``[[-[w]x, w], [-w^T, 0]]``.

    The block layout acts on vector-first quaternions ``(x, y, z, w)``; see
    :func:`quatmotion.integrators.qde_rate` for the scalar-first product.
    """
    w = np.asarray(omega, dtype=float)
    w1, w2, w3 = w[..., 0], w[..., 1], w[..., 2]
    z = np.zeros_like(w1)
    return np.stack(
        [
            np.stack([z, w3, -w2, w1], -1),
            np.stack([-w3, z, w1, w2], -1),
            np.stack([w2, -w1, z, w3], -1),
            np.stack([-w1, -w2, -w3, z], -1),
        ],
        axis=-2,
    )


def skew(v) -> np.ndarray:
    """Cross-product matrix ``[v]x``."""
    v = np.asarray(v, dtype=float)
    v1, v2, v3 = v[..., 0], v[..., 1], v[..., 2]
    z = np.zeros_like(v1)
    return np.stack(
        [np.stack([z, -v3, v2], -1), np.stack([v3, z, -v1], -1), np.stack([-v2, v1, z], -1)],
        axis=-2,
    )


def geodesic_angle(p, q, check=True) -> np.ndarray:
    """Rotation angle between ``p`` and ``q`` in [0, pi], insensitive to sign."""
    if check:
        p = check_unit(p, "p")
        q = check_unit(q, "q")
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    # 2 arccos|<p, q>| loses precision near 1; atan2 of the chord lengths does not
    sign = np.where(np.sum(p * q, axis=-1) < 0, -1.0, 1.0)[..., None]
    diff = np.linalg.norm(p - sign * q, axis=-1)
    summ = np.linalg.norm(p + sign * q, axis=-1)
    return 4.0 * np.arctan2(diff, summ)
