"""Synthetic reference motions with closed-form ground truth.

Each moving joint rotates about a fixed axis by a scalar angle signal
``theta(t)``; every other joint stays at identity. The signal kinds are

- ``constant_omega``: ``start + rate t``
- ``wrap_crossing``: constant rate, started so that the angle passes 2pi just
  before ``wrap_frame``
- ``step_target``: ``start``, jumping by ``step_size`` at ``step_frame``
- ``sinusoid``: ``start + amplitude sin(2 pi frequency t + phase)``
- ``random_walk``: piecewise-constant random angular acceleration

Randomness comes from numpy's PCG64 generator seeded through ``SeedSequence``,
which is stable across platforms.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import rotcore
from .motionfile import MotionSequence
from .skeleton import ROOT_HEIGHT

KINDS = ("constant_omega", "step_target", "sinusoid", "random_walk", "wrap_crossing")
ROOT_KINDS = ("static", "linear", "quadratic")


class SpecError(ValueError):
    pass


@dataclass
class RootPath:
    kind: str = "static"
    start: tuple = (0.0, 0.0, ROOT_HEIGHT)
    velocity: tuple = (0.0, 0.0, 0.0)
    accel: tuple = (0.0, 0.0, 0.0)

    def positions(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)[:, None]
        r = np.broadcast_to(np.asarray(self.start, float), (len(t), 3)).copy()
        if self.kind in ("linear", "quadratic"):
            r = r + np.asarray(self.velocity, float) * t
        if self.kind == "quadratic":
            r = r + 0.5 * np.asarray(self.accel, float) * t**2
        return r


@dataclass
class MotionSpec:
    kind: str = "constant_omega"
    joints: tuple = (0,)
    # per-joint parameters accept a scalar (shared) or one value per moving joint
    axis: tuple = (0.0, 0.0, 1.0)
    rate: float = 1.0
    start_angle: float = 0.0
    amplitude: float = 0.5
    frequency: float = 0.5
    phase: float = 0.0
    step_frame: int = 10
    step_size: float = 0.8
    accel_sigma: float = 2.0
    wrap_frame: int = 50
    root: RootPath = field(default_factory=RootPath)
    frames: int = 100
    dt: float = 0.04
    angular_sigma: float = 0.0
    positional_sigma: float = 0.0
    seed: int = 0
    n_joints: int = 24

    @classmethod
    def from_dict(cls, d: dict) -> "MotionSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown motion spec field(s): {sorted(unknown)}")
        d = dict(d)
        if isinstance(d.get("root"), dict):
            root = d["root"]
            bad = set(root) - {f.name for f in fields(RootPath)}
            if bad:
                raise SpecError(f"unknown root path field(s): {sorted(bad)}")
            d["root"] = RootPath(**root)
        if "joints" in d:
            d["joints"] = tuple(d["joints"])
        spec = cls(**d)
        validate_spec(spec)
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        return _jsonable(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


@dataclass
class GroundTruth:
    motion: MotionSequence
    angles: np.ndarray  # (T, J) signal of each moving joint
    angle_accel: np.ndarray  # (T - 2, J) closed-form second differences of angles
    root_accel: np.ndarray  # (T - 2, 3) closed-form second differences of the root
    joints: tuple
    axes: np.ndarray  # (J, 3)
    wrap_frame: int | None = None


def _per_joint(value, n, name, width=None):
    a = np.asarray(value, dtype=float)
    shape = (n,) if width is None else (n, width)
    try:
        return np.broadcast_to(a, shape).copy()
    except ValueError:
        raise SpecError(f"{name} must be a scalar or have one entry per moving joint") from None


def validate_spec(spec: MotionSpec) -> None:
    if spec.kind not in KINDS:
        raise SpecError(f"kind must be one of {KINDS}, got {spec.kind!r}")
    if spec.frames < 3:
        raise SpecError(f"frames must be >= 3, got {spec.frames}")
    if not spec.dt > 0:
        raise SpecError(f"dt must be positive, got {spec.dt}")
    if spec.angular_sigma < 0 or spec.positional_sigma < 0:
        raise SpecError("noise sigmas must be >= 0")
    if spec.n_joints < 1:
        raise SpecError("n_joints must be >= 1")
    for j in spec.joints:
        if not 0 <= int(j) < spec.n_joints:
            raise SpecError(f"moving joint {j} out of range for {spec.n_joints} joints")
    if len(set(spec.joints)) != len(spec.joints):
        raise SpecError("moving joints must be distinct")
    for name in ("rate", "start_angle", "amplitude", "frequency", "step_size"):
        _per_joint(getattr(spec, name), len(spec.joints), name)
    axes = _per_joint(spec.axis, len(spec.joints), "axis", 3)
    if np.any(np.linalg.norm(axes, axis=-1) == 0):
        raise SpecError("rotation axes must be non-zero")
    if spec.kind == "wrap_crossing":
        if not 0 < spec.wrap_frame < spec.frames:
            raise SpecError(f"wrap_frame must lie in (0, {spec.frames}), got {spec.wrap_frame}")
        if np.any(_per_joint(spec.rate, len(spec.joints), "rate") <= 0):
            raise SpecError("wrap_crossing needs a positive rate")
    if spec.kind == "step_target" and not 0 <= spec.step_frame < spec.frames:
        raise SpecError(f"step_frame must lie in [0, {spec.frames}), got {spec.step_frame}")
    if spec.root.kind not in ROOT_KINDS:
        raise SpecError(f"root kind must be one of {ROOT_KINDS}, got {spec.root.kind!r}")


def _angle_signal(spec: MotionSpec, walk_rng):
    J = len(spec.joints)
    T = spec.frames
    k = np.arange(T)
    t = k * spec.dt
    rate = _per_joint(spec.rate, J, "rate")
    start = _per_joint(spec.start_angle, J, "start_angle")
    accel = np.zeros((T - 2, J))
    if spec.kind == "constant_omega":
        theta = start + rate * t[:, None]
    elif spec.kind == "wrap_crossing":
        start = rotcore.TWO_PI - rate * spec.dt * (spec.wrap_frame - 0.5)
        theta = start + rate * t[:, None]
    elif spec.kind == "step_target":
        size = _per_joint(spec.step_size, J, "step_size")
        theta = start + size * (k >= spec.step_frame)[:, None]
        s = spec.step_frame
        if s >= 2:
            accel[s - 2] = size
        if 1 <= s <= T - 2:
            accel[s - 1] = -size
    elif spec.kind == "sinusoid":
        amp = _per_joint(spec.amplitude, J, "amplitude")
        w = 2.0 * np.pi * _per_joint(spec.frequency, J, "frequency")
        theta = start + amp * np.sin(w * t[:, None] + spec.phase)
        accel = -4.0 * np.sin(0.5 * w * spec.dt) ** 2 * amp * np.sin(w * t[1:-1, None] + spec.phase)
    else:  # random_walk
        a = walk_rng.normal(0.0, spec.accel_sigma, size=(T, J))
        omega = rate + np.concatenate([np.zeros((1, J)), np.cumsum(a[:-1] * spec.dt, axis=0)])
        theta = start + np.concatenate([np.zeros((1, J)), np.cumsum(omega[:-1] * spec.dt, axis=0)])
        accel = a[: T - 2] * spec.dt**2
    return theta, accel


def generate(spec: MotionSpec):
    """Build ``(references, truth)``: noisy reference poses and clean ground truth."""
    validate_spec(spec)
    noise_ss, walk_ss = np.random.SeedSequence(spec.seed).spawn(2)
    theta, accel = _angle_signal(spec, np.random.default_rng(walk_ss))
    joints = tuple(int(j) for j in spec.joints)
    axes = _per_joint(spec.axis, len(joints), "axis", 3)
    axes = axes / np.linalg.norm(axes, axis=-1, keepdims=True)
    T = spec.frames
    quats = rotcore.identity((T, spec.n_joints))
    quats[:, list(joints)] = rotcore.from_axis_angle(axes[None, :, :], theta)
    times = np.arange(T) * spec.dt
    root = spec.root.positions(times)
    root_accel = np.zeros((T - 2, 3))
    if spec.root.kind == "quadratic":
        root_accel[:] = np.asarray(spec.root.accel, float) * spec.dt**2
    clean = MotionSequence(quats, root, spec.dt)
    truth = GroundTruth(
        motion=clean,
        angles=theta,
        angle_accel=accel,
        root_accel=root_accel,
        joints=joints,
        axes=axes,
        wrap_frame=spec.wrap_frame if spec.kind == "wrap_crossing" else None,
    )
    refs = corrupt(clean, spec.angular_sigma, spec.positional_sigma, noise_ss)
    return refs, truth


def corrupt(seq: MotionSequence, angular_sigma, positional_sigma, seed) -> MotionSequence:
    """Compose a small random rotation onto every joint and jitter the root.

    Rotation angles are half-normal with scale ``angular_sigma`` about
    uniformly distributed axes; root jitter is isotropic Gaussian.
    """
    if angular_sigma < 0 or positional_sigma < 0:
        raise ValueError("noise sigmas must be >= 0")
    if angular_sigma == 0 and positional_sigma == 0:
        return seq.copy()
    rng = np.random.default_rng(seed)
    T, N = seq.quats.shape[:2]
    angle = np.abs(rng.normal(0.0, 1.0, size=(T, N))) * angular_sigma
    axis = rng.normal(size=(T, N, 3))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    jitter = rng.normal(0.0, 1.0, size=(T, 3)) * positional_sigma
    quats = seq.quats
    if angular_sigma > 0:
        quats = rotcore.normalize(rotcore.hamilton(rotcore.from_axis_angle(axis, angle), quats))
    return MotionSequence(quats, seq.root + jitter, seq.dt, seq.t0)
