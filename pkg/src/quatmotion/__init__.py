"""Quaternion-space PD tracking of articulated motion.

Submodules: ``rotcore`` (quaternion algebra), ``integrators`` (time stepping),
``controller`` (acceleration law and gain policies), ``skeleton`` (forward
kinematics), ``metrics``, ``synth`` (synthetic references), ``runner`` and
``cli``.
"""
from .controller import GainScales, Gains, ReferenceWindow, init_state, tune_gains
from .integrators import StepConfig, step_approx_renorm, step_exact
from .metrics import MetricReport, evaluate
from .motionfile import MotionSequence, read_motion, write_motion
from .runner import RunConfig, ablate, simulate
from .skeleton import Skeleton, forward_kinematics, load_skeleton
from .synth import MotionSpec, generate

__version__ = "0.1.0"

__all__ = [
    "GainScales", "Gains", "ReferenceWindow", "init_state", "tune_gains",
    "StepConfig", "step_approx_renorm", "step_exact",
    "MetricReport", "evaluate",
    "MotionSequence", "read_motion", "write_motion",
    "RunConfig", "ablate", "simulate",
    "Skeleton", "forward_kinematics", "load_skeleton",
    "MotionSpec", "generate",
]
