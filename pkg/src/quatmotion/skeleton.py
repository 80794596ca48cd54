"""Rigid articulated chain and forward kinematics.

The skeleton file is a JSON array of joints in topological order::

    [{"name": "pelvis", "parent": -1, "offset": [0, 0, 0], "end_effector": false}, ...]

Offsets are rest-pose bone vectors in metres, expressed in the parent's frame.
The shipped default is a 24-joint humanoid, z up, feet on z = 0 when the root
sits at ``ROOT_HEIGHT``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import rotcore

ROOT_HEIGHT = 0.95


class SkeletonError(ValueError):
    pass


@dataclass(frozen=True)
class Skeleton:
    names: tuple
    parents: np.ndarray
    offsets: np.ndarray
    end_effectors: tuple

    def __post_init__(self):
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=int))
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=float))
        validate(self)

    @property
    def n_joints(self) -> int:
        return len(self.names)

    @property
    def feet(self) -> list:
        return [i for i in self.end_effectors if "foot" in self.names[i]]

    def bone_lengths(self) -> np.ndarray:
        lengths = np.linalg.norm(self.offsets, axis=-1)
        lengths[0] = 0.0
        return lengths

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_records(self) -> list:
        ee = set(self.end_effectors)
        return [
            {"name": n, "parent": int(p), "offset": [float(c) for c in o], "end_effector": i in ee}
            for i, (n, p, o) in enumerate(zip(self.names, self.parents, self.offsets))
        ]

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (
            self.names == other.names
            and self.end_effectors == other.end_effectors
            and np.array_equal(self.parents, other.parents)
            and np.array_equal(self.offsets, other.offsets)
        )

    __hash__ = None


def validate(skel: Skeleton) -> None:
    n = len(skel.names)
    if n == 0:
        raise SkeletonError("skeleton has no joints")
    if skel.parents.shape != (n,) or skel.offsets.shape != (n, 3):
        raise SkeletonError("parents/offsets do not match the number of joints")
    if len(set(skel.names)) != n:
        raise SkeletonError("joint names must be unique")
    if skel.parents[0] != -1:
        raise SkeletonError(f"joint {skel.names[0]!r} must be the root (parent -1)")
    for j in range(1, n):
        p = skel.parents[j]
        name = skel.names[j]
        if p == -1:
            raise SkeletonError(f"joint {name!r} is a second root; only index 0 may have parent -1")
        if p == j:
            raise SkeletonError(f"joint {name!r} is its own parent (cycle)")
        if not 0 <= p < n:
            raise SkeletonError(f"joint {name!r} has out-of-range parent {p}")
        if p > j:
            # walk up to tell a cycle from a mere ordering problem
            seen, k = {j}, p
            while k > 0 and k not in seen:
                seen.add(k)
                k = skel.parents[k]
            if k in seen:
                raise SkeletonError(f"joint {skel.names[k]!r} is part of a parent cycle")
            raise SkeletonError(f"joint {name!r} appears before its parent {skel.names[p]!r}")
        if not np.all(np.isfinite(skel.offsets[j])) or np.linalg.norm(skel.offsets[j]) <= 0:
            raise SkeletonError(f"joint {name!r} has a non-positive bone length")
    for i in skel.end_effectors:
        if not 0 <= i < n:
            raise SkeletonError(f"end effector index {i} out of range")


def from_records(records) -> Skeleton:
    try:
        names = tuple(str(r["name"]) for r in records)
        index = {name: i for i, name in enumerate(names)}
        parents = []
        for r in records:
            p = r["parent"]
            if isinstance(p, str):
                if p not in index:
                    raise SkeletonError(f"joint {r['name']!r} has unknown parent {p!r}")
                p = index[p]
            parents.append(int(p))
        offsets = [list(map(float, r["offset"])) for r in records]
        ee = tuple(i for i, r in enumerate(records) if r.get("end_effector", False))
    except (KeyError, TypeError) as exc:
        raise SkeletonError(f"malformed skeleton record: {exc}") from None
    if any(len(o) != 3 for o in offsets):
        bad = next(names[i] for i, o in enumerate(offsets) if len(o) != 3)
        raise SkeletonError(f"joint {bad!r} offset must have 3 components")
    return Skeleton(names, np.array(parents), np.array(offsets), ee)


def load_skeleton(path=None) -> Skeleton:
    """Load and validate a skeleton file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("quatmotion").joinpath("data/default_skeleton.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SkeletonError(f"skeleton file is not valid JSON: {exc}") from None
    if not isinstance(records, list):
        raise SkeletonError("skeleton file must contain a JSON array of joints")
    return from_records(records)


def save_skeleton(skel: Skeleton, path) -> None:
    lines = ",\n".join("  " + json.dumps(r) for r in skel.to_records())
    Path(path).write_text("[\n" + lines + "\n]\n")


def apply_shape(skel: Skeleton, beta) -> Skeleton:
    """Scale each bone by ``1 + beta[j]`` (entry 0, the root, is ignored)."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (skel.n_joints,):
        raise SkeletonError(f"beta must have shape ({skel.n_joints},), got {beta.shape}")
    if np.any(beta <= -1.0):
        j = int(np.argmax(beta <= -1.0))
        raise SkeletonError(f"scale for joint {skel.names[j]!r} must be > -1, got {beta[j]}")
    return replace(skel, offsets=skel.offsets * (1.0 + beta)[:, None])


def forward_kinematics(quats, root, skel: Skeleton) -> np.ndarray:
    """World joint positions from local joint rotations and root translation.

    ``quats`` has shape ``(..., N, 4)`` and ``root`` shape ``(..., 3)``;
    returns ``(..., N, 3)``.
    """
    quats = np.asarray(quats, dtype=float)
    root = np.asarray(root, dtype=float)
    n = skel.n_joints
    if quats.shape[-2:] != (n, 4):
        raise SkeletonError(f"pose has shape {quats.shape[-2:]}, skeleton expects ({n}, 4)")
    if root.shape[-1:] != (3,) or root.shape[:-1] != quats.shape[:-2]:
        raise SkeletonError(f"root shape {root.shape} does not match pose batch {quats.shape[:-2]}")
    local = rotcore.to_rotation_matrix(quats)
    world_rot = np.empty_like(local)
    pos = np.empty(quats.shape[:-1][:-1] + (n, 3))
    world_rot[..., 0, :, :] = local[..., 0, :, :]
    pos[..., 0, :] = root
    parents = skel.parents
    offsets = skel.offsets
    for j in range(1, n):
        p = parents[j]
        Rp = world_rot[..., p, :, :]
        pos[..., j, :] = pos[..., p, :] + Rp @ offsets[j]
        world_rot[..., j, :, :] = Rp @ local[..., j, :, :]
    return pos
