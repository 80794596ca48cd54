"""Regenerate the golden metrics pair and its frozen report.

Run from the repo root: python tests/data/regen_golden_metrics.py
The report files are the CLI's json and table output for the pair.
"""
import contextlib
import io
from pathlib import Path

from quatmotion import cli, runner
from quatmotion.motionfile import write_motion
from quatmotion.skeleton import load_skeleton
from quatmotion.synth import MotionSpec, RootPath, generate

HERE = Path(__file__).parent

SPEC = MotionSpec(kind="sinusoid", joints=(1, 2, 4, 5, 16, 17), axis=(1, 0, 0), amplitude=0.5,
                  frequency=0.8, frames=30, angular_sigma=0.03, positional_sigma=0.01, seed=7,
                  root=RootPath("linear", velocity=(0.6, 0.0, 0.0)))


def main():
    refs, truth = generate(SPEC)
    cfg = runner.RunConfig(motions=[SPEC], seeds=[7])
    result = runner.simulate_sequence(refs, cfg, load_skeleton())
    write_motion(result.motion, HERE / "golden_pred.jsonl")
    write_motion(truth.motion, HERE / "golden_gt.jsonl")
    for fmt, name in (("json", "golden_report.json"), ("table", "golden_report.txt")):
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            cli.main(["metrics", str(HERE / "golden_pred.jsonl"), str(HERE / "golden_gt.jsonl"), "--format", fmt])
        (HERE / name).write_text(buf.getvalue())


if __name__ == "__main__":
    main()
