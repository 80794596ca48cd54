"""Fixed-step time integration of joint rotations, angular velocity and root translation.

All step functions are pure and vectorised over leading (joint) dimensions.
The quaternion steppers accept a ``frame`` convention:

``"world"``
    left-multiplication, ``q' = q_w (x) q``. Angular velocity is expressed in
    the fixed frame.
``"body"``
    right-multiplication, ``q' = q (x) q_w``. Angular velocity is expressed in
    the rotating frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rotcore

INTEGRATOR_KINDS = ("exact_s3", "approx_renorm", "euler_angles_xyz", "euler_angles_zxy", "axis_angle")
FRAMES = ("world", "body")
# below this rotation angle per step exp_qde switches to its Taylor series
TAYLOR_CUTOFF = 1e-8


@dataclass(frozen=True)
class StepConfig:
    dt: float = 0.04
    frame: str | None = None  # None: each integrator's own default convention
    kind: str = "exact_s3"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.frame is not None and self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        if self.kind not in INTEGRATOR_KINDS:
            raise ValueError(f"integrator kind must be one of {INTEGRATOR_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class RootState:
    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
            raise ValueError("root state must be finite")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "v", v)


def qde_rate(q, omega, frame="body") -> np.ndarray:
    """Quaternion velocity ``1/2 Omega(w) q`` for scalar-first ``q``.

    The generator matrix acts on vector-first quaternions, so ``q`` is
    permuted to ``(x, y, z, w)`` and back. As printed it equals the body-frame
    product ``q (x) (0, w/2)``; ``frame="world"`` gives ``(0, w/2) (x) q``.
    """
    q = np.asarray(q, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if frame == "body":
        q_vf = q[..., [1, 2, 3, 0]]
        rate_vf = 0.5 * np.einsum("...ij,...j->...i", rotcore.omega_matrix(omega), q_vf)
        return rate_vf[..., [3, 0, 1, 2]]
    pure = np.concatenate([np.zeros(omega.shape[:-1] + (1,)), 0.5 * omega], axis=-1)
    return rotcore.hamilton(pure, q)


def exp_qde(omega, dt) -> np.ndarray:
    """Unit quaternion rotating by ``|w| dt`` about ``w / |w|``."""
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ValueError("angular velocity must be finite")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    speed = np.linalg.norm(omega, axis=-1)
    half = 0.5 * speed * dt
    small = speed * dt < TAYLOR_CUTOFF
    w = np.where(small, 1.0 - 0.5 * half**2, np.cos(half))
    # sin(|w| dt / 2) / |w|, series form when the step is tiny
    k = np.where(small, 0.5 * dt * (1.0 - half**2 / 6.0), np.sin(half) / np.where(small, 1.0, speed))
    return np.concatenate([w[..., None], omega * k[..., None]], axis=-1)


def _step_exact_one(q_t, omega, dt, world) -> np.ndarray:
    # scalar path for a single joint: numpy call overhead dominates at this size
    pw, px, py, pz = q_t.tolist()
    if not abs(math.sqrt(pw * pw + px * px + py * py + pz * pz) - 1.0) <= rotcore.UNIT_TOL:
        rotcore.check_unit(np.asarray(q_t, dtype=float), "q_t")  # raises with the usual message
    wx, wy, wz = omega.tolist()
    if not (math.isfinite(wx) and math.isfinite(wy) and math.isfinite(wz)):
        raise ValueError("angular velocity must be finite")
    speed = math.sqrt(wx * wx + wy * wy + wz * wz)
    half = 0.5 * speed * dt
    if speed * dt < TAYLOR_CUTOFF:
        w, k = 1.0 - 0.5 * half**2, 0.5 * dt * (1.0 - half**2 / 6.0)
    else:
        w, k = math.cos(half), math.sin(half) / speed
    a = (w, wx * k, wy * k, wz * k)
    b = (pw, px, py, pz)
    if not world:
        a, b = b, a
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        (aw * bx + ax * bw) + (ay * bz - az * by),
        (aw * by + ay * bw) + (az * bx - ax * bz),
        (aw * bz + az * bw) + (ax * by - ay * bx),
    ])


def step_exact(q_t, omega_next, cfg: StepConfig) -> np.ndarray:
    """Closed-form step on the unit sphere; never renormalises."""
    world = (cfg.frame or "world") == "world"
    q_t = np.asarray(q_t, dtype=float)
    omega_next = np.asarray(omega_next, dtype=float)
    if q_t.shape == (4,) and omega_next.shape == (3,):
        return _step_exact_one(q_t, omega_next, cfg.dt, world)
    q_t = rotcore.check_unit(q_t, "q_t")
    q_w = exp_qde(omega_next, cfg.dt)
    if world:
        return rotcore.hamilton(q_w, q_t)
    return rotcore.hamilton(q_t, q_w)


def approx_prenorm(q_t, omega_t, cfg: StepConfig) -> np.ndarray:
    """The explicit Euler update ``q + q_dot dt`` before renormalisation."""
    q_t = rotcore.check_unit(q_t, "q_t")
    return q_t + qde_rate(q_t, omega_t, cfg.frame or "body") * cfg.dt


def step_approx_renorm(q_t, omega_t, cfg: StepConfig) -> np.ndarray:
    """Explicit Euler step followed by projection back onto the sphere."""
    return rotcore.normalize(approx_prenorm(q_t, omega_t, cfg))


def step_euler_repr(theta_t, omega_t, cfg: StepConfig) -> np.ndarray:
    """Component-wise Euler step of an Euler-angle triple, wrapped to [0, 2pi)."""
    theta_t = np.asarray(theta_t, dtype=float)
    return rotcore.wrap_angle(theta_t + np.asarray(omega_t, dtype=float) * cfg.dt)


def step_axis_angle(a_t, omega_t, cfg: StepConfig) -> np.ndarray:
    """Component-wise Euler step of a rotation vector (no wrapping)."""
    return np.asarray(a_t, dtype=float) + np.asarray(omega_t, dtype=float) * cfg.dt


def step_omega(omega_t, omega_dot_t, cfg: StepConfig) -> np.ndarray:
    return np.asarray(omega_t, dtype=float) + np.asarray(omega_dot_t, dtype=float) * cfg.dt


def step_root(s: RootState, r_ref, kp, kd, cfg: StepConfig) -> RootState:
    """One PD + Euler step of the root translation toward ``r_ref``."""
    if kp < 0 or kd < 0:
        raise ValueError("root gains must be non-negative")
    accel = kp * (np.asarray(r_ref, dtype=float) - s.r) - kd * s.v
    v_next = s.v + accel * cfg.dt
    return RootState(s.r + v_next * cfg.dt, v_next)
