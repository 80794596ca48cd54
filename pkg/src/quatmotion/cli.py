"""Command-line entry point: ``quatmotion {simulate,ablate,metrics,tune,gen}``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import controller, metrics, runner
from .motionfile import MotionFileError, read_motion, write_motion
from .skeleton import SkeletonError, forward_kinematics, load_skeleton
from .synth import SpecError, generate

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3
FORMATS = ("json", "csv", "table")

log = logging.getLogger("quatmotion")


def parse_seeds(text: str) -> list:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def load_document(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise runner.ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise runner.ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise runner.ConfigError(f"config {path} must be a JSON object")
    return doc


def resolve(args) -> tuple:
    """RunConfig plus the optional search block, with ``--seed`` applied."""
    doc = load_document(args.config)
    search = doc.pop("search", {})
    cfg = runner.RunConfig.from_dict(doc)
    if args.seed is not None:
        cfg = cfg.replace(seeds=args.seed)
    return cfg, search


def _summary_rows(summary: dict) -> list:
    return [{"metric": k, "mean": v["mean"], "std": v["std"]} for k, v in summary.items()]


def emit(text: str) -> None:
    sys.stdout.write(text)


def cmd_simulate(args) -> int:
    cfg, _ = resolve(args)
    report = runner.simulate(cfg, args.out, plots=not args.no_plots)
    if args.format == "json":
        emit(runner._json(report))
    elif args.format == "csv":
        emit(runner.rows_to_csv(report["runs"]))
    else:
        emit(metrics.format_table(_summary_rows(report["summary"]), ["metric", "mean", "std"]))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg, _ = resolve(args)
    result = runner.ablate(cfg, args.out, plots=not args.no_plots)
    if args.format == "json":
        emit(runner._json(result))
    elif args.format == "csv":
        emit(runner.rows_to_csv(result["rows"]))
    else:
        emit(runner.ablation_table(result["rows"]))
    return EXIT_OK


def eval_metrics(pred_path, gt_path, skeleton_path=None,
                 contact_height=metrics.CONTACT_HEIGHT) -> metrics.MetricReport:
    pred, gt = read_motion(pred_path), read_motion(gt_path)
    if len(pred) != len(gt):
        raise MotionFileError(f"prediction has {len(pred)} frames but ground truth has {len(gt)}")
    skel = load_skeleton(skeleton_path)
    for name, seq in (("prediction", pred), ("ground truth", gt)):
        if seq.n_joints != skel.n_joints:
            raise MotionFileError(f"{name} has {seq.n_joints} joints, skeleton has {skel.n_joints}")
    return metrics.evaluate(forward_kinematics(pred.quats, pred.root, skel),
                            forward_kinematics(gt.quats, gt.root, skel),
                            skel.feet, contact_height)


def cmd_metrics(args) -> int:
    report = eval_metrics(args.pred, args.gt, args.skeleton, args.contact_height)
    if args.format == "json":
        text = report.to_json()
    elif args.format == "csv":
        text = runner.rows_to_csv([report.to_dict()])
    else:
        text = report.to_table()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(report.to_json())
        (out / "metrics.txt").write_text(report.to_table())
    emit(text)
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg, search_doc = resolve(args)
    known = {f.name for f in fields(controller.SearchConfig)}
    bad = set(search_doc) - known
    if bad:
        raise runner.ConfigError(f"unknown search field(s): {sorted(bad)}")
    search = controller.SearchConfig(**{k: tuple(v) if isinstance(v, list) else v
                                        for k, v in search_doc.items()})
    if args.seed is not None:
        search.seed = args.seed[0]
    (kp, kd, ka), results = controller.tune_gains(runner.build_suite(cfg), search, cfg)
    rows = [{"kp": g[0], "kd": g[1], "ka": g[2], "loss": loss} for g, loss in results]
    tuned = cfg.with_gains(kp=kp, kd=kd, ka=ka)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = tuned.to_dict()
        doc.pop("integrator")
        (out / "tuned_config.json").write_text(runner._json(doc))
        (out / "search.csv").write_text(runner.rows_to_csv(rows))
    if args.format == "json":
        emit(runner._json({"best": {"kp": kp, "kd": kd, "ka": ka}, "results": rows}))
    elif args.format == "csv":
        emit(runner.rows_to_csv(rows))
    else:
        emit(metrics.format_table(rows, ["kp", "kd", "ka", "loss"]))
        emit(f"best: kp={kp:g} kd={kd:g} ka={ka:g}\n")
    return EXIT_OK


def cmd_gen(args) -> int:
    cfg, _ = resolve(args)
    if args.out is None:
        spec = cfg.motions[0]
        spec.seed = cfg.seeds[0]
        refs, _ = generate(spec)
        from .motionfile import dumps
        emit(dumps(refs))
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, spec in enumerate(cfg.motions):
        for seed in cfg.seeds:
            spec.seed = seed
            refs, truth = generate(spec)
            write_motion(refs, out / f"reference_motion{i}_seed{seed}.jsonl")
            write_motion(truth.motion, out / f"truth_motion{i}_seed{seed}.jsonl")
            log.info("wrote motion %d seed %d (%d frames)", i, seed, len(refs))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quatmotion", description="Quaternion PD motion tracking experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, plots=True):
        sp.add_argument("--config", metavar="PATH", help="JSON run config (defaults are used when omitted)")
        sp.add_argument("--seed", type=parse_seeds, metavar="N[,N...]", help="override the config's seed list")
        sp.add_argument("--out", metavar="DIR", help="directory for reports, trajectories and figures")
        sp.add_argument("--format", choices=FORMATS, default="table", help="stdout format (default: table)")
        if plots:
            sp.add_argument("--no-plots", action="store_true", help="skip the PNG figures")

    sp = sub.add_parser("simulate", help="run the closed loop over every motion and seed")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ablate", help="run the seven-row representation/component matrix")
    common(sp)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("metrics", help="score a predicted motion file against a ground-truth file")
    sp.add_argument("pred", help="predicted motion (JSON lines)")
    sp.add_argument("gt", help="ground-truth motion (JSON lines)")
    sp.add_argument("--skeleton", metavar="PATH", help="skeleton JSON (default: bundled 24-joint humanoid)")
    sp.add_argument("--contact-height", type=float, default=metrics.CONTACT_HEIGHT, metavar="M")
    sp.add_argument("--out", metavar="DIR")
    sp.add_argument("--format", choices=FORMATS, default="table")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("tune", help="search constant gains minimising the total loss")
    common(sp, plots=False)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("gen", help="write synthetic reference and ground-truth motion files")
    common(sp, plots=False)
    sp.set_defaults(func=cmd_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return args.func(args)
    except runner.DivergenceError as exc:
        print(f"error: numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (runner.ConfigError, SpecError, MotionFileError, SkeletonError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
