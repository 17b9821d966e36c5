"""Command-line entry point: ``mcvl <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from mcvl import config as config_mod
from mcvl import formats, pipeline, simworld
from mcvl.evaluation import compare, score, trajectory_svg
from mcvl.formats import Trajectory

log = logging.getLogger("mcvl")


def _config(path) -> config_mod.Config:
    return config_mod.load(path) if path else config_mod.Config()


def _scenario(path) -> simworld.ScenarioConfig:
    return formats.loads_scenario(Path(path).read_text()) if path else simworld.ScenarioConfig()


def cmd_simulate(args) -> int:
    out = pipeline.write_simulation(_scenario(args.scenario), args.out)
    print(f"wrote scenario to {out}")
    return 0


def cmd_train_codebook(args) -> int:
    cfg = _config(args.config)
    images = [im for d in args.images for im in pipeline.load_images(d)]
    cb, _ = pipeline.train(images, cfg)
    formats.write_codebook(args.out, cb)
    print(f"codebook K={cb.vocab.K} p={cb.pca.p} from {len(images)} images -> {args.out}")
    return 0


def cmd_build_db(args) -> int:
    if len(args.images) != len(args.poses):
        raise SystemExit("error: give one --poses file per --images directory")
    cb = formats.read_codebook(args.codebook)
    images, poses, seq_ids, frame_ids, names = [], [], [], [], []
    for s, (d, p) in enumerate(zip(args.images, args.poses)):
        imgs = pipeline.load_images(d)
        traj = formats.read_trajectory(p)
        if len(traj) != len(imgs):
            raise SystemExit(f"error: {d} has {len(imgs)} images but {p} has {len(traj)} poses")
        images += imgs
        poses += list(traj.poses)
        seq_ids += [s] * len(imgs)
        frame_ids += list(range(len(imgs)))
        names.append(Path(d).name)
    db = pipeline.build_database(cb, poses, images=images, seq_ids=seq_ids, frame_ids=frame_ids, seq_names=names)
    formats.write_database(args.out, db)
    print(f"database with {len(db)} entries -> {args.out}")
    return 0


def cmd_localize(args) -> int:
    cfg = _config(args.config)
    db = formats.read_database(args.db)
    cb_path = Path(args.codebook) if args.codebook else Path(args.db).with_name("codebook.bin")
    cb = formats.read_codebook(cb_path)
    if formats.codebook_hash(cb) != db.codebook_hash:
        raise SystemExit(f"error: {cb_path} is not the codebook {args.db} was built with")
    images = pipeline.load_images(args.images)
    zs = pipeline.measure_all(db, [cb.encode(im) for im in images], cfg.retrieval())
    if args.mode == "retrieval":
        poses = pipeline.localize_retrieval(zs)
    else:
        poses, records = pipeline.localize_filter(zs, cfg, args.seed)
        if args.log:
            formats.write_step_log(args.log, records)
    formats.write_trajectory(args.out, Trajectory(np.arange(len(poses)) * args.dt, poses))
    print(f"{len(poses)} poses ({args.mode}) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    gt = formats.read_trajectory(args.gt)
    names = args.name or [Path(p).stem for p in args.est]
    if len(names) != len(args.est):
        raise SystemExit("error: give one --name per --est")
    reports = [(n, score(formats.read_trajectory(p), gt)) for n, p in zip(names, args.est)]
    if len(reports) == 1:
        (name, rep), = reports
        cols = rep.summary()
        csv = "method," + ",".join(cols) + "\n" + name + "," + ",".join(repr(float(v)) for v in cols.values()) + "\n"
        text = "\n".join(f"{k:20s} {v:.4f}" for k, v in cols.items()) + "\n"
    else:
        table = compare(reports)
        csv, text = table.to_csv(), table.to_text()
    if args.out:
        Path(args.out).write_text(csv)
    sys.stdout.write(text)
    return 0


def cmd_plot(args) -> int:
    gt = formats.read_trajectory(args.gt)
    est = formats.read_trajectory(args.est)
    Path(args.out).write_text(trajectory_svg(gt.poses, est.poses))
    return 0


def cmd_experiment(args) -> int:
    scfg = _scenario(args.scenario)
    exp = pipeline.run_scenario(scfg, filter_seeds=range(args.seeds))
    print(f"top-1 within 10 m: {exp.top1_rate:.3f}")
    reports = [("retrieval", exp.retrieval)] + [(f"filter-seed{r.seed}", r.report) for r in exp.runs]
    sys.stdout.write(compare(reports).to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcvl", description="Visual Monte Carlo localization toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic scenario to disk")
    p.add_argument("--scenario", help="scenario file (defaults built in)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train-codebook", help="train vocabulary and PCA on map images")
    p.add_argument("--images", action="append", required=True, help="image directory (repeatable)")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_codebook)

    p = sub.add_parser("build-db", help="encode map images into a database")
    p.add_argument("--images", action="append", required=True, help="image directory (repeatable)")
    p.add_argument("--poses", action="append", required=True, help="trajectory file per image directory")
    p.add_argument("--codebook", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("localize", help="estimate poses for a query image sequence")
    p.add_argument("--db", required=True)
    p.add_argument("--codebook", help="defaults to codebook.bin next to the database")
    p.add_argument("--images", required=True)
    p.add_argument("--config")
    p.add_argument("--mode", choices=("retrieval", "filter"), default="filter")
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float, default=1.0, help="frame interval for output timestamps")
    p.add_argument("--log", help="JSONL per-step log (filter mode)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("eval", help="score estimated trajectories against ground truth")
    p.add_argument("--est", action="append", required=True, help="estimated trajectory (repeatable)")
    p.add_argument("--name", action="append", help="label per --est")
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="CSV report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="SVG overlay of estimate (red) on ground truth (green)")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("experiment", help="simulate, map, localize and compare in one go")
    p.add_argument("--scenario")
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
