"""Motion-quality metrics and the training objective.

Keypoint inputs are ``(T, N, 3)`` arrays in metres with the root at joint 0.
Position metrics are reported in millimetres and acceleration metrics in
millimetres per frame squared.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

logger = logging.getLogger(__name__)

MM = 1000.0
SKATE_THRESHOLD = 0.02  # m of horizontal foot travel per frame
CONTACT_HEIGHT = 0.05  # m above the z = 0 ground plane
DEFAULT_LAMBDA = 0.01


class DegenerateFrameWarning(UserWarning):
    pass


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if pred.ndim != 3 or pred.shape[-1] != 3:
        raise ValueError(f"expected (T, N, 3) keypoints, got {pred.shape}")
    return pred, gt


def root_align(x) -> np.ndarray:
    return x - x[:, :1, :]


def mpjpe(pred, gt) -> float:
    pred, gt = _check_pair(pred, gt)
    return float(np.mean(np.linalg.norm(root_align(pred) - root_align(gt), axis=-1)) * MM)


def g_mpjpe(pred, gt) -> float:
    pred, gt = _check_pair(pred, gt)
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)) * MM)


def gre(pred, gt) -> float:
    pred, gt = _check_pair(pred, gt)
    return float(np.mean(np.linalg.norm(pred[:, 0] - gt[:, 0], axis=-1)) * MM)


def rigid_align(pred, gt):
    """Best rotation + translation (no scale) taking each frame of ``pred`` onto ``gt``.

    Returns ``(aligned, degenerate)`` where ``degenerate`` marks frames whose
    target points are (near) collinear and the rotation is not unique.
    """
    mu_p = pred.mean(axis=1, keepdims=True)
    mu_g = gt.mean(axis=1, keepdims=True)
    P = pred - mu_p
    G = gt - mu_g
    H = np.einsum("tni,tnj->tij", P, G)
    U, s, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(np.einsum("tij,tjk->tik", U, Vt)))
    d = np.where(d == 0, 1.0, d)
    D = np.ones(s.shape)
    D[:, -1] = d
    R = np.einsum("tji,tj,tkj->tik", Vt, D, U)  # V diag(D) U^T
    aligned = np.einsum("tij,tnj->tni", R, P) + mu_g
    same = np.all(pred == gt, axis=(1, 2))
    aligned[same] = gt[same]  # identical frames need no alignment; keeps them exactly zero
    scale = np.maximum(s[:, 0], 1e-300)
    degenerate = s[:, 1] / scale < 1e-9
    return aligned, degenerate


def p_mpjpe(pred, gt, return_degenerate=False):
    pred, gt = _check_pair(pred, gt)
    if pred.shape[1] < 3:
        raise ValueError("P-MPJPE needs at least 3 joints")
    aligned, degenerate = rigid_align(pred, gt)
    if np.any(degenerate):
        logger.warning("%d frame(s) have collinear joints; rigid alignment is not unique",
                       int(degenerate.sum()))
    value = float(np.mean(np.linalg.norm(aligned - gt, axis=-1)) * MM)
    if return_degenerate:
        return value, degenerate
    return value


def second_difference(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:-2] - 2.0 * x[1:-1] + x[2:]


def accel_err(pred, gt, root_align_frames=True) -> float:
    """Mean norm of the difference of second finite differences.

    With ``root_align_frames`` this is Accel, otherwise G-Accel.
    """
    pred, gt = _check_pair(pred, gt)
    if pred.shape[0] < 3:
        raise ValueError(f"acceleration needs at least 3 frames, got {pred.shape[0]}")
    if root_align_frames:
        pred, gt = root_align(pred), root_align(gt)
    diff = second_difference(pred) - second_difference(gt)
    return float(np.mean(np.linalg.norm(diff, axis=-1)) * MM)


def foot_skate(pred, feet, contact_height=CONTACT_HEIGHT, threshold=SKATE_THRESHOLD) -> float:
    """Percentage of frames in which a grounded foot slides more than ``threshold``.

    A foot is grounded at frame t when its height is below ``contact_height``
    at both t - 1 and t; the slide is its horizontal (xy) displacement between
    those frames. Frame 0 never counts as skating.
    """
    pred = np.asarray(pred, dtype=float)
    feet = list(feet)
    if not feet:
        raise ValueError("no foot end effectors declared")
    f = pred[:, feet, :]
    if f.shape[0] < 2:
        return 0.0
    grounded = f[..., 2] < contact_height
    contact = grounded[1:] & grounded[:-1]
    slide = np.linalg.norm(f[1:, :, :2] - f[:-1, :, :2], axis=-1)
    skating = np.any(contact & (slide > threshold), axis=1)
    return float(100.0 * skating.sum() / pred.shape[0])


def l_local(pred, gt, pred_root, gt_root) -> float:
    T, N = pred.shape[:2]
    kp = np.abs(root_align(gt) - root_align(pred)).sum() / (T * N)
    return float(kp + np.abs(gt_root - pred_root).sum() / T)


def l_global(pred, gt, pred_root, gt_root) -> float:
    T, N = pred.shape[:2]
    kp = np.abs(second_difference(root_align(gt)) - second_difference(root_align(pred))).sum()
    root = np.abs(second_difference(gt_root) - second_difference(pred_root)).sum()
    return float(kp / (T * N) + root / T)


def loss_total(pred, gt, pred_root=None, gt_root=None, beta=None, lam=DEFAULT_LAMBDA) -> dict:
    """Local + global L1 reconstruction loss plus the shape regulariser.

    Positions in metres. Root trajectories default to joint 0 of the keypoints.
    Sums run over all available frames and are divided by T as written in the
    objective, so the second-difference sums (T - 2 terms) are also over T.
    """
    pred, gt = _check_pair(pred, gt)
    pred_root = pred[:, 0] if pred_root is None else np.asarray(pred_root, dtype=float)
    gt_root = gt[:, 0] if gt_root is None else np.asarray(gt_root, dtype=float)
    if pred_root.shape != gt_root.shape or pred_root.shape != (pred.shape[0], 3):
        raise ValueError(f"root shape mismatch: {pred_root.shape} vs {gt_root.shape}")
    local = l_local(pred, gt, pred_root, gt_root)
    glob = l_global(pred, gt, pred_root, gt_root) if pred.shape[0] >= 3 else 0.0
    l_beta = 0.0 if beta is None else float(np.linalg.norm(beta))
    return {
        "l_local": local,
        "l_global": glob,
        "l_beta": l_beta,
        "total": local + glob + lam * l_beta,
    }


@dataclass
class MetricReport:
    mpjpe: float
    p_mpjpe: float
    accel: float
    g_mpjpe: float
    gre: float
    g_accel: float
    fs: float

    UNITS = {
        "mpjpe": "mm", "p_mpjpe": "mm", "accel": "mm/f^2", "g_mpjpe": "mm",
        "gre": "mm", "g_accel": "mm/f^2", "fs": "%",
    }

    @classmethod
    def names(cls) -> list:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        return format_table([self.to_dict()], self.names())


def evaluate(pred, gt, feet, contact_height=CONTACT_HEIGHT) -> MetricReport:
    pred, gt = _check_pair(pred, gt)
    return MetricReport(
        mpjpe=mpjpe(pred, gt),
        p_mpjpe=p_mpjpe(pred, gt),
        accel=accel_err(pred, gt, True),
        g_mpjpe=g_mpjpe(pred, gt),
        gre=gre(pred, gt),
        g_accel=accel_err(pred, gt, False),
        fs=foot_skate(pred, feet, contact_height),
    )


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def format_table(rows, columns) -> str:
    """Render dict rows as an aligned, space-delimited text table."""
    cells = [[str(c) for c in columns]] + [[_fmt(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(c.rjust(w) if k and i else c.ljust(w)
                               for i, (c, w) in enumerate(zip(row, widths))).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
