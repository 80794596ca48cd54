"""Closed-loop simulation: references -> gains -> acceleration -> velocity -> pose -> keypoints."""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import controller, integrators, metrics, rotcore
from .motionfile import MotionSequence, write_motion
from .skeleton import Skeleton, forward_kinematics, load_skeleton
from .synth import MotionSpec, SpecError, generate

logger = logging.getLogger(__name__)

REPRESENTATIONS = ("quaternion", "euler_xyz", "euler_zxy", "axis_angle")
DIVERGENCE_LIMIT = 1e3  # rad/s
DEFAULT_GAINS = {
    "kind": "constant", "kp": 40.0, "kd": 30.0, "ka": 10.0, "bias": "feedforward",
    "root_kp": 40.0, "root_kd": 20.0,
}
# (label, representation, f_omega, s3, alpha)
ABLATION_ROWS = (
    ("pd_only", "euler_xyz", False, False, False),
    ("pd_only", "euler_zxy", False, False, False),
    ("pd_only", "axis_angle", False, False, False),
    ("pd_only", "quaternion", False, False, False),
    ("+f_omega", "quaternion", True, False, False),
    ("+f_omega+s3", "quaternion", True, True, False),
    ("+f_omega+s3+alpha", "quaternion", True, True, True),
)


class ConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


class LookaheadError(RuntimeError):
    pass


@dataclass
class RunConfig:
    motions: list = field(default_factory=lambda: [MotionSpec()])
    representation: str = "quaternion"
    f_omega: bool = True
    s3: bool = True
    alpha: bool = True
    frame: str = "world"
    gains: dict = field(default_factory=lambda: dict(DEFAULT_GAINS))
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    skeleton: str | None = None
    contact_height: float = metrics.CONTACT_HEIGHT
    divergence_limit: float = DIVERGENCE_LIMIT

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(f"representation must be one of {REPRESENTATIONS}, got {self.representation!r}")
        if self.frame not in integrators.FRAMES:
            raise ConfigError(f"frame must be one of {integrators.FRAMES}, got {self.frame!r}")
        if not self.motions:
            raise ConfigError("config lists no motions")
        if not self.seeds:
            raise ConfigError("config lists no seeds")
        kind = self.gains.get("kind", "constant")
        if kind not in ("constant", "net"):
            raise ConfigError(f"gains.kind must be 'constant' or 'net', got {kind!r}")

    @property
    def integrator_kind(self) -> str:
        if self.representation == "quaternion":
            return "exact_s3" if self.s3 else "approx_renorm"
        if self.representation == "axis_angle":
            return "axis_angle"
        return "euler_angles_" + self.representation.split("_")[1]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = copy.deepcopy(d)
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        try:
            if "motions" in d:
                d["motions"] = [MotionSpec.from_dict(m) for m in d["motions"]]
            if "gains" in d:
                gains = dict(DEFAULT_GAINS) if d["gains"].get("kind", "constant") == "constant" else {}
                gains.update(d["gains"])
                d["gains"] = gains
            return cls(**d)
        except SpecError as exc:
            raise ConfigError(str(exc)) from None
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {
            "motions": [m.to_dict() for m in self.motions],
            "representation": self.representation,
            "integrator": self.integrator_kind,
            "f_omega": self.f_omega,
            "s3": self.s3,
            "alpha": self.alpha,
            "frame": self.frame,
            "gains": dict(self.gains),
            "seeds": list(self.seeds),
            "skeleton": self.skeleton,
            "contact_height": self.contact_height,
            "divergence_limit": self.divergence_limit,
        }

    def replace(self, **kw) -> "RunConfig":
        new = copy.deepcopy(self)
        for k, v in kw.items():
            setattr(new, k, v)
        new.__post_init__()
        return new

    def with_gains(self, **kw) -> "RunConfig":
        gains = dict(DEFAULT_GAINS) if self.gains.get("kind", "constant") != "constant" else dict(self.gains)
        gains.update(kind="constant", **kw)
        return self.replace(gains=gains)


class ReferenceStream:
    """Online access to a reference sequence.

    Frames become readable only after :meth:`release`; reading a frame that
    has not been released raises :class:`LookaheadError`.
    """

    def __init__(self, seq: MotionSequence):
        self.seq = seq
        self.horizon = -1

    def __len__(self):
        return len(self.seq)

    @property
    def dt(self) -> float:
        return self.seq.dt

    @property
    def n_joints(self) -> int:
        return self.seq.n_joints

    def release(self, t: int) -> None:
        self.horizon = max(self.horizon, t)

    def _check(self, t):
        if t > self.horizon:
            raise LookaheadError(f"frame {t} requested before release (horizon {self.horizon})")

    def pose(self, t: int) -> np.ndarray:
        self._check(t)
        return self.seq.quats[t]

    def root(self, t: int) -> np.ndarray:
        self._check(t)
        return self.seq.root[t]


@dataclass
class SimResult:
    motion: MotionSequence
    keypoints: np.ndarray
    omega_max: float


def make_policy(cfg: RunConfig, n_joints: int, dt: float):
    g = cfg.gains
    if g.get("kind", "constant") == "constant":
        try:
            return controller.gain_policy_constant(g, n_joints, dt, cfg.frame)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad constant gains: {exc}") from None
    try:
        if "weights" in g:
            policy = controller.NetGainPolicy.from_file(g["weights"])
        else:
            policy = controller.NetGainPolicy.from_seed(int(g.get("seed", 0)), n_joints,
                                                        int(g.get("hidden", controller.HIDDEN_DIM)))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot build network gain policy: {exc}") from None
    if policy.weights["head.kappa_p.bias"].shape[0] != n_joints:
        raise ConfigError("network weights were built for a different number of joints")
    return policy


def _vector_repr(representation):
    if representation == "axis_angle":
        return rotcore.log_map, rotcore.exp_map
    seq = representation.split("_")[1].upper()
    return (lambda q: rotcore.euler_array(q, seq)[0]), (lambda a: rotcore.from_euler(a, seq))


def simulate_sequence(refs, cfg: RunConfig, skeleton: Skeleton, policy=None) -> SimResult:
    """Run the closed loop over one reference sequence.

    ``refs`` is a :class:`MotionSequence` or a :class:`ReferenceStream`; the
    loop releases frame t only when it integrates from t to t + dt.
    """
    if isinstance(refs, MotionSequence):
        refs = ReferenceStream(refs)
    T, N, dt = len(refs), refs.n_joints, refs.dt
    if T < 2:
        raise ConfigError("need at least two reference frames")
    policy = policy or make_policy(cfg, N, dt)
    step_cfg = integrators.StepConfig(dt=dt, frame=cfg.frame, kind=cfg.integrator_kind)
    quaternion = cfg.representation == "quaternion"

    refs.release(1)
    state = controller.init_state(refs.pose(0), refs.pose(1), refs.root(0), refs.root(1), dt, cfg.frame)
    q, omega, root = state.q, state.omega, state.root
    if not quaternion:
        to_vec, from_vec = _vector_repr(cfg.representation)
        x = to_vec(q)
        omega = (to_vec(refs.pose(1)) - x) / dt
        targets = []

    out_q = np.empty((T, N, 4))
    out_r = np.empty((T, 3))
    out_q[0], out_r[0] = q, root.r
    history = []
    omega_max = float(np.max(np.linalg.norm(omega, axis=-1)))
    for t in range(T - 1):
        refs.release(t)
        q_ref, r_ref = refs.pose(t), refs.root(t)
        history = (history + [q_ref])[-3:]
        window = controller.ReferenceWindow.from_history(history, r_ref)
        gains = policy(q, omega, window, root.r, root.v)
        if quaternion:
            acc = controller.angular_accel(q, omega, window, gains, cfg.frame,
                                           use_bias=cfg.f_omega, use_alpha=cfg.alpha)
            omega_next = integrators.step_omega(omega, acc, step_cfg)
            if cfg.s3:
                q = integrators.step_exact(q, omega_next, step_cfg)
            else:
                q = integrators.step_approx_renorm(q, omega, step_cfg)
        else:
            targets = (targets + [to_vec(q_ref)])[-3:]
            hist = [targets[0]] * (3 - len(targets)) + targets
            acc = controller.vector_accel(hist[2], x, omega, hist, gains,
                                          use_bias=cfg.f_omega, use_alpha=cfg.alpha and len(targets) == 3)
            omega_next = integrators.step_omega(omega, acc, step_cfg)
            if cfg.representation == "axis_angle":
                x = integrators.step_axis_angle(x, omega_next, step_cfg)
            else:
                x = integrators.step_euler_repr(x, omega_next, step_cfg)
            q = from_vec(x)
        omega = omega_next
        speed = np.linalg.norm(omega, axis=-1)
        omega_max = max(omega_max, float(speed.max()))
        if not np.all(speed <= cfg.divergence_limit):
            j = int(np.argmax(np.where(np.isfinite(speed), speed, np.inf)))
            raise DivergenceError(
                f"angular velocity of joint {j} reached {speed[j]:.3g} rad/s at frame {t + 1} "
                f"(limit {cfg.divergence_limit:g}); lower kp/ka or raise kd"
            )
        root = integrators.step_root(root, r_ref, gains.root_kp, gains.root_kd, step_cfg)
        if not np.all(np.abs(root.r) < 1e6):
            raise DivergenceError(
                f"root translation left +-1e6 m at frame {t + 1} "
                f"(root_kp={gains.root_kp:g}, root_kd={gains.root_kd:g}, dt={dt:g})"
            )
        out_q[t + 1], out_r[t + 1] = q, root.r

    motion = MotionSequence(out_q, out_r, dt, refs.seq.t0)
    return SimResult(motion, forward_kinematics(out_q, out_r, skeleton), omega_max)


def tracking_error(pred: MotionSequence, truth: MotionSequence) -> np.ndarray:
    """Per-frame worst-joint geodesic angle (rad) between two pose sequences."""
    return rotcore.geodesic_angle(pred.quats, truth.quats, check=False).max(axis=1)


@dataclass
class RunOutcome:
    motion_index: int
    seed: int
    result: SimResult
    references: MotionSequence
    truth: MotionSequence
    report: metrics.MetricReport
    errors: np.ndarray  # per-frame tracking error, rad
    loss: float


def run_one(cfg: RunConfig, motion_index: int, seed: int, skeleton: Skeleton) -> RunOutcome:
    spec = copy.deepcopy(cfg.motions[motion_index])
    spec.seed = seed
    if spec.n_joints != skeleton.n_joints:
        raise ConfigError(f"motion {motion_index} has {spec.n_joints} joints, skeleton has {skeleton.n_joints}")
    refs, truth = generate(spec)
    result = simulate_sequence(refs, cfg, skeleton)
    gt_kp = forward_kinematics(truth.motion.quats, truth.motion.root, skeleton)
    report = metrics.evaluate(result.keypoints, gt_kp, skeleton.feet, cfg.contact_height)
    loss = metrics.loss_total(result.keypoints, gt_kp)["total"]
    return RunOutcome(motion_index, seed, result, refs, truth.motion, report,
                      tracking_error(result.motion, truth.motion), loss)


def summarize(outcomes) -> dict:
    summary = {}
    for name in metrics.MetricReport.names():
        vals = np.array([getattr(o.report, name) for o in outcomes])
        summary[name] = {"mean": float(vals.mean()), "std": float(vals.std())}
    for name, fn in (("max_track_err", np.max), ("final_track_err", lambda e: e[-1])):
        vals = np.array([fn(o.errors) for o in outcomes])
        summary[name] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return summary


def suite_loss(suite, cfg: RunConfig, skeleton: Skeleton | None = None) -> float:
    """Mean total loss of ``cfg`` over ``(references, truth)`` pairs."""
    skeleton = skeleton or load_skeleton(cfg.skeleton)
    losses = []
    for refs, truth in suite:
        res = simulate_sequence(refs, cfg, skeleton)
        gt_kp = forward_kinematics(truth.motion.quats, truth.motion.root, skeleton)
        losses.append(metrics.loss_total(res.keypoints, gt_kp)["total"])
    return float(np.mean(losses))


def build_suite(cfg: RunConfig) -> list:
    suite = []
    for spec in cfg.motions:
        for seed in cfg.seeds:
            s = copy.deepcopy(spec)
            s.seed = seed
            suite.append(generate(s))
    return suite


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def simulate(cfg: RunConfig, out_dir=None, plots=True) -> dict:
    """Run every (motion, seed) pair; optionally write trajectories, reports and figures."""
    skeleton = load_skeleton(cfg.skeleton)
    outcomes = [run_one(cfg, i, s, skeleton) for i in range(len(cfg.motions)) for s in cfg.seeds]
    report = {
        "config": cfg.to_dict(),
        "runs": [
            {"motion": o.motion_index, "seed": o.seed, "loss": o.loss,
             "final_track_err": float(o.errors[-1]), "max_track_err": float(o.errors.max()),
             "omega_max": o.result.omega_max, **o.report.to_dict()}
            for o in outcomes
        ],
        "summary": summarize(outcomes),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(_json(report))
        (out / "runs.csv").write_text(rows_to_csv(report["runs"]))
        for o in outcomes:
            tag = f"motion{o.motion_index}_seed{o.seed}"
            write_motion(o.result.motion, out / f"trajectory_{tag}.jsonl")
            (out / f"errors_{tag}.csv").write_text(
                series_to_csv(o.result.motion.times, {"track_err_rad": o.errors}))
        if plots:
            from . import plotting
            first = outcomes[0]
            plotting.plot_tracking({"tracking": first.errors}, first.result.motion.dt,
                                   out / "tracking_error.png")
            plotting.plot_root(first.result.motion, first.truth, first.references, out / "root.png")
    return report


def ablation_configs(base: RunConfig) -> list:
    return [
        (label, base.replace(representation=rep, f_omega=f, s3=s3, alpha=a))
        for label, rep, f, s3, a in ABLATION_ROWS
    ]


def ablate(base: RunConfig, out_dir=None, plots=True) -> dict:
    """Run the seven-row representation/component matrix on identical inputs and seeds."""
    skeleton = load_skeleton(base.skeleton)
    rows, curves = [], {}
    for label, cfg in ablation_configs(base):
        outcomes = [run_one(cfg, i, s, skeleton) for i in range(len(cfg.motions)) for s in cfg.seeds]
        summary = summarize(outcomes)
        row = {"method": label, "rotation": cfg.representation, "f_omega": int(cfg.f_omega),
               "s3": int(cfg.s3), "alpha": int(cfg.alpha)}
        for name, stats in summary.items():
            row[name] = stats["mean"]
            row[name + "_std"] = stats["std"]
        rows.append(row)
        curves[f"{label} / {cfg.representation}"] = outcomes[0].errors
    ranked = sorted(rows, key=lambda r: r["mpjpe"])
    result = {"config": base.to_dict(), "rows": ranked}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(_json(result))
        (out / "ablation.csv").write_text(rows_to_csv(ranked))
        (out / "ablation.txt").write_text(ablation_table(ranked))
        times = np.arange(len(next(iter(curves.values())))) * base.motions[0].dt
        (out / "ablation_errors.csv").write_text(series_to_csv(times, curves))
        if plots:
            from . import plotting
            wrap = base.motions[0].wrap_frame if base.motions[0].kind == "wrap_crossing" else None
            plotting.plot_tracking(curves, base.motions[0].dt, out / "ablation_tracking.png", wrap)
    return result


TABLE_COLUMNS = ["method", "rotation", "f_omega", "s3", "alpha", "mpjpe", "p_mpjpe", "accel",
                 "g_mpjpe", "g_accel", "fs", "max_track_err"]


def ablation_table(rows) -> str:
    return metrics.format_table(rows, TABLE_COLUMNS)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def series_to_csv(times, series: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + list(series))
    for k, t in enumerate(times):
        writer.writerow([repr(float(t))] + [repr(float(v[k])) for v in series.values()])
    return buf.getvalue()
