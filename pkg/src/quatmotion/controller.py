"""Angular acceleration from a meta-PD law with bias and acceleration enhancement.

    omega_dot = kp vec(q_ref (x) q*) - kd omega + b
                + ka (vec(q_ref_t (x) q_ref*_{t-1}) - vec(q_ref_{t-1} (x) q_ref*_{t-2}))

Gains are scalars per joint. They come from a gain policy: constant values,
or a small feed-forward network whose sigmoid heads keep every gain inside
``[0, scale]``.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rotcore
from .integrators import RootState

logger = logging.getLogger(__name__)

LAYER_NORM_EPS = 1e-5
LEAKY_SLOPE = 0.01
HIDDEN_DIM = 512
WEIGHTS_FORMAT = "quatmotion-controlnet-v1"


@dataclass(frozen=True)
class GainScales:
    p: float = 40.0
    d: float = 30.0
    a: float = 40.0
    root_p: float = 200.0
    root_d: float = 200.0


@dataclass(frozen=True)
class Gains:
    kp: np.ndarray  # (N,)
    kd: np.ndarray  # (N,)
    ka: np.ndarray  # (N,)
    bias: np.ndarray  # (N, 3) rad/s^2
    root_kp: float
    root_kd: float

    def within(self, scales: GainScales) -> bool:
        ok = True
        for value, s in ((self.kp, scales.p), (self.kd, scales.d), (self.ka, scales.a),
                         (self.root_kp, scales.root_p), (self.root_kd, scales.root_d)):
            ok &= bool(np.all((np.asarray(value) >= 0) & (np.asarray(value) <= s)))
        return ok


@dataclass
class ReferenceWindow:
    """The three most recent reference poses ``(t-2, t-1, t)`` and the current root target."""

    quats: np.ndarray  # (3, N, 4)
    root: np.ndarray  # (3,)
    depth: int = 3  # poses actually observed; padded windows carry no second difference

    @classmethod
    def from_history(cls, history, root) -> "ReferenceWindow":
        """Build from up to three poses, oldest first; short histories repeat the earliest."""
        history = list(history)[-3:]
        if not history:
            raise ValueError("reference window needs at least one pose")
        depth = len(history)
        while len(history) < 3:
            history.insert(0, history[0])
        return cls(np.stack([np.asarray(h, dtype=float) for h in history]), np.asarray(root, float), depth)

    @property
    def current(self) -> np.ndarray:
        return self.quats[2]


@dataclass
class FullState:
    q: np.ndarray  # (N, 4)
    omega: np.ndarray  # (N, 3)
    root: RootState
    beta: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.beta is None:
            self.beta = np.zeros(self.q.shape[0])


def relative(a, b, frame="world") -> np.ndarray:
    """Rotation taking ``b`` to ``a``, sign-canonicalised: ``a (x) b*`` or ``b* (x) a``."""
    if frame == "world":
        rel = rotcore.hamilton(a, rotcore.conjugate(b))
    else:
        rel = rotcore.hamilton(rotcore.conjugate(b), a)
    return rotcore.canonicalize(rel)


def pd_error(q_ref, q, frame="world") -> np.ndarray:
    """Vector part of the quaternion error between the reference and the current pose."""
    q_ref = rotcore.check_unit(q_ref, "q_ref")
    q = rotcore.check_unit(q, "q")
    return rotcore.vec(relative(q_ref, q, frame))


def accel_enhancement(window: ReferenceWindow, frame="world") -> np.ndarray:
    q0, q1, q2 = window.quats
    if window.depth < 3:
        return np.zeros(q2.shape[:-1] + (3,))
    return rotcore.vec(relative(q2, q1, frame)) - rotcore.vec(relative(q1, q0, frame))


def angular_accel(q, omega, window: ReferenceWindow, gains: Gains, frame="world",
                  use_bias=True, use_alpha=True) -> np.ndarray:
    acc = gains.kp[:, None] * pd_error(window.current, q, frame) - gains.kd[:, None] * omega
    if use_bias:
        acc = acc + gains.bias
    if use_alpha:
        acc = acc + gains.ka[:, None] * accel_enhancement(window, frame)
    return acc


def vector_accel(target, state, omega, target_history, gains: Gains, use_bias=True,
                 use_alpha=True) -> np.ndarray:
    """The same control law for 3-parameter representations (Euler angles, rotation vectors).

    Errors and the enhancement term are plain component-wise differences.
    """
    acc = gains.kp[:, None] * (target - state) - gains.kd[:, None] * omega
    if use_bias:
        acc = acc + gains.bias
    if use_alpha:
        h0, h1, h2 = target_history
        acc = acc + gains.ka[:, None] * ((h2 - h1) - (h1 - h0))
    return acc


def reference_rate(window: ReferenceWindow, dt, frame="world") -> np.ndarray:
    """Finite-difference angular velocity of the reference over the last frame."""
    return rotcore.log_map(relative(window.quats[2], window.quats[1], frame)) / dt


class ConstantGainPolicy:
    """Fixed gains; the bias is zero, a constant, or ``"feedforward"``.

    The feed-forward bias ``kd * reference_rate`` cancels the steady-state lag
    that a pure PD law shows on constant-velocity references.
    """

    def __init__(self, n_joints, kp=40.0, kd=30.0, ka=0.0, bias="zero", root_kp=40.0,
                 root_kd=20.0, scales: GainScales = GainScales(), dt=0.04, frame="world"):
        self.n_joints = n_joints
        self.dt = dt
        self.frame = frame
        self.bias_mode = bias if isinstance(bias, str) else "constant"
        if self.bias_mode not in ("zero", "feedforward", "constant"):
            raise ValueError(f"unknown bias mode {bias!r}")
        if self.bias_mode == "constant":
            const = np.broadcast_to(np.asarray(bias, float), (n_joints, 3)).copy()
        else:
            const = np.zeros((n_joints, 3))
        self.gains = Gains(
            kp=np.full(n_joints, float(kp)),
            kd=np.full(n_joints, float(kd)),
            ka=np.full(n_joints, float(ka)),
            bias=const,
            root_kp=float(root_kp),
            root_kd=float(root_kd),
        )
        if not self.gains.within(scales):
            raise ValueError(f"constant gains exceed their scales {scales}")

    def __call__(self, q, omega, window: ReferenceWindow, r, v) -> Gains:
        if self.bias_mode != "feedforward":
            return self.gains
        g = self.gains
        bias = g.kd[:, None] * reference_rate(window, self.dt, self.frame)
        return Gains(g.kp, g.kd, g.ka, bias, g.root_kp, g.root_kd)


def gain_policy_constant(cfg: dict, n_joints=24, dt=0.04, frame="world") -> ConstantGainPolicy:
    keys = ("kp", "kd", "ka", "bias", "root_kp", "root_kd")
    return ConstantGainPolicy(n_joints, dt=dt, frame=frame, **{k: cfg[k] for k in keys if k in cfg})


# -- network policy ---------------------------------------------------------------------------

def input_dim(n_joints) -> int:
    return 11 * n_joints + 9


def layer_shapes(n_joints=24, hidden=HIDDEN_DIM) -> dict:
    d_in = input_dim(n_joints)
    return {
        "block1.linear.weight": (hidden, d_in),
        "block1.linear.bias": (hidden,),
        "block1.norm.weight": (hidden,),
        "block1.norm.bias": (hidden,),
        "block2.linear.weight": (hidden, hidden),
        "block2.linear.bias": (hidden,),
        "block2.norm.weight": (hidden,),
        "block2.norm.bias": (hidden,),
        "head.kappa_p.weight": (n_joints, hidden),
        "head.kappa_p.bias": (n_joints,),
        "head.kappa_d.weight": (n_joints, hidden),
        "head.kappa_d.bias": (n_joints,),
        "head.kappa_a.weight": (n_joints, hidden),
        "head.kappa_a.bias": (n_joints,),
        "head.bias.weight": (3 * n_joints, hidden),
        "head.bias.bias": (3 * n_joints,),
        "head.root_kappa_p.weight": (1, hidden),
        "head.root_kappa_p.bias": (1,),
        "head.root_kappa_d.weight": (1, hidden),
        "head.root_kappa_d.bias": (1,),
    }


def init_weights(seed=0, n_joints=24, hidden=HIDDEN_DIM) -> dict:
    """Deterministic weights: uniform(+-1/sqrt(fan_in)) linears, unit layer norms."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in layer_shapes(n_joints, hidden).items():
        if name.endswith("norm.weight"):
            weights[name] = np.ones(shape)
        elif name.endswith("norm.bias"):
            weights[name] = np.zeros(shape)
        else:
            fan_in = layer_shapes(n_joints, hidden)[name.rsplit(".", 1)[0] + ".weight"][1]
            bound = 1.0 / np.sqrt(fan_in)
            weights[name] = rng.uniform(-bound, bound, size=shape)
    return weights


def check_weights(weights: dict, n_joints=24, hidden=HIDDEN_DIM) -> dict:
    expected = layer_shapes(n_joints, hidden)
    missing = set(expected) - set(weights)
    if missing:
        raise ValueError(f"weight file is missing layers: {sorted(missing)}")
    out = {}
    for name, shape in expected.items():
        w = np.asarray(weights[name], dtype=float)
        if w.shape != shape:
            raise ValueError(f"layer {name} has shape {w.shape}, expected {shape}")
        out[name] = w
    return out


def save_weights(weights: dict, path, n_joints=24, hidden=HIDDEN_DIM) -> None:
    doc = {
        "format": WEIGHTS_FORMAT,
        "input_dim": input_dim(n_joints),
        "hidden_dim": hidden,
        "n_joints": n_joints,
        "layers": {name: np.asarray(weights[name]).tolist() for name in layer_shapes(n_joints, hidden)},
    }
    Path(path).write_text(json.dumps(doc))


def load_weights(path) -> tuple:
    """Returns ``(weights, n_joints, hidden)`` after validating every layer shape."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != WEIGHTS_FORMAT:
        raise ValueError(f"unrecognised weight file format {doc.get('format')!r}")
    n, hidden = int(doc["n_joints"]), int(doc["hidden_dim"])
    if int(doc["input_dim"]) != input_dim(n):
        raise ValueError(f"declared input_dim {doc['input_dim']} does not match {n} joints")
    return check_weights(doc["layers"], n, hidden), n, hidden


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _layer_norm(h, gamma, beta):
    mu = h.mean(axis=-1, keepdims=True)
    var = h.var(axis=-1, keepdims=True)
    return (h - mu) / np.sqrt(var + LAYER_NORM_EPS) * gamma + beta


def _leaky_relu(h):
    return np.where(h >= 0, h, LEAKY_SLOPE * h)


def embed(x, weights) -> np.ndarray:
    h = x
    for block in ("block1", "block2"):
        h = h @ weights[f"{block}.linear.weight"].T + weights[f"{block}.linear.bias"]
        h = _leaky_relu(_layer_norm(h, weights[f"{block}.norm.weight"], weights[f"{block}.norm.bias"]))
    return h


def raw_heads(x, weights) -> dict:
    h = embed(x, weights)
    names = ("kappa_p", "kappa_d", "kappa_a", "bias", "root_kappa_p", "root_kappa_d")
    return {n: h @ weights[f"head.{n}.weight"].T + weights[f"head.{n}.bias"] for n in names}


def assemble_input(q, omega, q_ref, r, v, r_ref) -> np.ndarray:
    parts = [q, omega, q_ref, r, v, r_ref]
    return np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in parts])


def gains_from_raw(raw: dict, scales: GainScales = GainScales()) -> Gains:
    return Gains(
        kp=sigmoid(raw["kappa_p"]) * scales.p,
        kd=sigmoid(raw["kappa_d"]) * scales.d,
        ka=sigmoid(raw["kappa_a"]) * scales.a,
        bias=np.asarray(raw["bias"]).reshape(-1, 3),
        root_kp=float(sigmoid(raw["root_kappa_p"])[0] * scales.root_p),
        root_kd=float(sigmoid(raw["root_kappa_d"])[0] * scales.root_d),
    )


def gain_policy_net(q, omega, q_ref, r, v, r_ref, weights, scales: GainScales = GainScales()) -> Gains:
    x = assemble_input(q, omega, q_ref, r, v, r_ref)
    if x.shape[0] != weights["block1.linear.weight"].shape[1]:
        raise ValueError(f"input width {x.shape[0]} does not match the weights "
                         f"({weights['block1.linear.weight'].shape[1]})")
    return gains_from_raw(raw_heads(x, weights), scales)


class NetGainPolicy:
    def __init__(self, weights, n_joints=24, hidden=HIDDEN_DIM, scales: GainScales = GainScales()):
        self.weights = check_weights(weights, n_joints, hidden)
        self.scales = scales

    @classmethod
    def from_seed(cls, seed=0, n_joints=24, hidden=HIDDEN_DIM):
        return cls(init_weights(seed, n_joints, hidden), n_joints, hidden)

    @classmethod
    def from_file(cls, path):
        weights, n, hidden = load_weights(path)
        return cls(weights, n, hidden)

    def __call__(self, q, omega, window: ReferenceWindow, r, v) -> Gains:
        return gain_policy_net(q, omega, window.current, r, v, window.root, self.weights, self.scales)


def init_state(q_ref0, q_ref1, r_ref0, r_ref1, dt, frame="world") -> FullState:
    """Initial state from the first two references (closed-form stand-in for a learned initialiser)."""
    q_ref0 = rotcore.check_unit(q_ref0, "q_ref0")
    q_ref1 = rotcore.check_unit(q_ref1, "q_ref1")
    omega = rotcore.log_map(relative(q_ref1, q_ref0, frame)) / dt
    r0 = np.asarray(r_ref0, dtype=float)
    v0 = (np.asarray(r_ref1, dtype=float) - r0) / dt
    return FullState(q_ref0.copy(), omega, RootState(r0.copy(), v0))


# -- desk-scale gain search -------------------------------------------------------------------

@dataclass
class SearchConfig:
    method: str = "grid"
    kp: tuple = (10.0, 20.0, 30.0, 40.0)
    kd: tuple = (5.0, 10.0, 20.0, 30.0)
    ka: tuple = (0.0,)
    samples: int = 32  # random search only
    seed: int = 0
    tie_tol: float = 1e-12  # relative


def candidate_gains(search: SearchConfig, scales: GainScales = GainScales()) -> list:
    if search.method == "grid":
        cands = list(itertools.product(search.kp, search.kd, search.ka))
    elif search.method == "random":
        rng = np.random.default_rng(search.seed)
        lo = lambda axis: min(axis)  # noqa: E731
        hi = lambda axis: max(axis)  # noqa: E731
        u = rng.uniform(size=(search.samples, 3))
        bounds = np.array([[lo(search.kp), hi(search.kp)], [lo(search.kd), hi(search.kd)],
                           [lo(search.ka), hi(search.ka)]])
        cands = [tuple(map(float, bounds[:, 0] + row * (bounds[:, 1] - bounds[:, 0]))) for row in u]
    else:
        raise ValueError(f"unknown search method {search.method!r}")
    for kp, kd, ka in cands:
        if not (0 <= kp <= scales.p and 0 <= kd <= scales.d and 0 <= ka <= scales.a):
            raise ValueError(f"candidate gains ({kp}, {kd}, {ka}) leave the scale box {scales}")
    return [tuple(float(x) for x in c) for c in cands]


def pick_best(results, tie_tol=1e-12) -> tuple:
    """Lowest loss; candidates within ``tie_tol`` (relative) of it tie-break to the lowest gains."""
    best = min(loss for _, loss in results)
    tol = tie_tol * max(1.0, abs(best))
    tied = [g for g, loss in results if loss <= best + tol]
    return min(tied)


def tune_gains(suite, search: SearchConfig | None = None, base=None):
    """Search constant (kp, kd, ka) minimising the mean total loss over ``suite``.

    ``suite`` is a list of ``(references, truth)`` pairs from
    :func:`quatmotion.synth.generate`; ``base`` is a :class:`RunConfig` that
    supplies everything except the searched gains. Returns
    ``(best, results)`` where ``results`` lists ``((kp, kd, ka), loss)``.
    """
    from .runner import RunConfig, suite_loss

    if not suite:
        raise ValueError("cannot tune gains on an empty suite")
    search = search or SearchConfig()
    base = base or RunConfig()
    results = []
    for kp, kd, ka in candidate_gains(search):
        loss = suite_loss(suite, base.with_gains(kp=kp, kd=kd, ka=ka))
        logger.debug("kp=%g kd=%g ka=%g loss=%.6g", kp, kd, ka, loss)
        results.append(((kp, kd, ka), loss))
    return pick_best(results, search.tie_tol), results
