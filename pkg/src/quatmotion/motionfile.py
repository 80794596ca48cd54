"""Pose sequences and their JSON-lines file format.

One frame per line::

    {"t": 0.04, "joints": [[w, x, y, z], ...], "root": [x, y, z]}

Quaternions are scalar-first local joint rotations, the root translation is in
metres and ``t`` in seconds. Frames must be uniformly spaced.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


TIME_DECIMALS = 9  # timestamps are stored to the nanosecond


class MotionFileError(ValueError):
    pass


@dataclass
class MotionSequence:
    quats: np.ndarray  # (T, N, 4)
    root: np.ndarray  # (T, 3)
    dt: float = 0.04
    t0: float = 0.0

    def __post_init__(self):
        self.quats = np.asarray(self.quats, dtype=float)
        self.root = np.asarray(self.root, dtype=float)
        if self.quats.ndim != 3 or self.quats.shape[-1] != 4:
            raise MotionFileError(f"joint quaternions must be (T, N, 4), got {self.quats.shape}")
        if self.root.shape != (self.quats.shape[0], 3):
            raise MotionFileError(f"root must be ({self.quats.shape[0]}, 3), got {self.root.shape}")

    def __len__(self):
        return self.quats.shape[0]

    @property
    def n_joints(self) -> int:
        return self.quats.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def copy(self) -> "MotionSequence":
        return MotionSequence(self.quats.copy(), self.root.copy(), self.dt, self.t0)


def dumps(seq: MotionSequence) -> str:
    lines = []
    for t, q, r in zip(seq.times, seq.quats, seq.root):
        frame = {"t": round(float(t), TIME_DECIMALS), "joints": q.tolist(), "root": r.tolist()}
        lines.append(json.dumps(frame, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def write_motion(seq: MotionSequence, path) -> None:
    Path(path).write_text(dumps(seq))


def loads(text: str, source="<string>") -> MotionSequence:
    times, quats, roots = [], [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            frame = json.loads(line)
            times.append(float(frame["t"]))
            quats.append(frame["joints"])
            roots.append(frame["root"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MotionFileError(f"{source}:{lineno}: bad frame ({exc})") from None
    if not times:
        raise MotionFileError(f"{source}: no frames")
    try:
        q = np.asarray(quats, dtype=float)
        r = np.asarray(roots, dtype=float)
    except ValueError:
        raise MotionFileError(f"{source}: frames have inconsistent joint counts") from None
    times = np.asarray(times)
    dt = round(float(times[1] - times[0]), TIME_DECIMALS) if len(times) > 1 else 0.04
    if len(times) > 1:
        if dt <= 0 or not np.allclose(np.diff(times), dt, rtol=1e-6, atol=1e-9):
            raise MotionFileError(f"{source}: frame times are not uniformly spaced")
    return MotionSequence(q, r, dt, float(times[0]))


def read_motion(path) -> MotionSequence:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MotionFileError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text, str(path))
