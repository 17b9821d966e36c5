"""End-to-end plumbing: codebook training, map building, localization, simulated experiments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mcvl import formats, simworld
from mcvl.config import Config, scenario_filter_config
from mcvl.encoder import Codebook, train_codebook
from mcvl.evaluation import ErrorReport, score
from mcvl.formats import Trajectory
from mcvl.geometry import Pose6D
from mcvl.particle_filter import MonteCarloLocalizer
from mcvl.retrieval import MapDatabase, RetrievalConfig, knn, measure

log = logging.getLogger(__name__)


def load_images(directory) -> list:
    return [formats.read_image(p) for p in formats.list_images(directory)]


def train(images, cfg: Config) -> tuple:
    """Codebook trained on map images; returns ``(codebook, raw_vlads)``."""
    return train_codebook(images, cfg.vocab_size, cfg.pca_dims, cfg.features(),
                          cfg.vocab_samples_per_image, cfg.seed, cfg.vocab_image_stride)


def build_database(codebook: Codebook, poses, images=None, raws=None, seq_ids=None,
                   frame_ids=None, seq_names=None) -> MapDatabase:
    """Map database from images (or their precomputed raw VLAD vectors).

    Descriptors are stored at float32 precision, as on disk.
    """
    if raws is None:
        raws = [codebook.raw(im) for im in images]
    desc = np.array([codebook.encode_raw(r).values for r in raws], dtype=np.float32).astype(float)
    n = len(desc)
    poses = np.array([p.as_vector() if isinstance(p, Pose6D) else p for p in poses], dtype=float).reshape(-1, 6)
    if len(poses) != n:
        raise ValueError(f"{n} images but {len(poses)} poses")
    return MapDatabase(
        desc, poses,
        np.zeros(n, np.int64) if seq_ids is None else seq_ids,
        np.arange(n) if frame_ids is None else frame_ids,
        formats.codebook_hash(codebook),
        list(seq_names or []),
    )


def measure_all(db: MapDatabase, descriptors, rcfg: RetrievalConfig) -> list:
    """One measurement per query descriptor; ``None`` where retrieval fails."""
    out = []
    for i, q in enumerate(descriptors):
        try:
            out.append(measure(db, q, rcfg))
        except ValueError as exc:
            log.warning("frame %d: no measurement (%s)", i, exc)
            out.append(None)
    return out


def _fill(poses: list) -> np.ndarray:
    """Replace missing poses by the previous one (leading gaps take the first available)."""
    first = next((p for p in poses if p is not None), None)
    if first is None:
        raise ValueError("no frame produced a pose estimate")
    last, out = first, []
    for p in poses:
        last = p if p is not None else last
        out.append(last.as_vector())
    return np.array(out)


def localize_retrieval(measurements: list) -> np.ndarray:
    return _fill([None if z is None else z.pose for z in measurements])


def localize_filter(measurements: list, cfg: Config, seed: int | None = None) -> tuple:
    """Filtered poses (n, 6) and the per-step records."""
    loc = MonteCarloLocalizer(cfg.filter(), cfg.seed if seed is None else seed)
    est = loc.run(measurements)
    return _fill(est), loc.records


# ---------------------------------------------------------------- simulated experiments

@dataclass
class FilterRun:
    seed: int
    poses: np.ndarray
    records: list
    report: ErrorReport


@dataclass
class ScenarioExperiment:
    scenario: simworld.Scenario
    config: Config
    codebook: Codebook
    database: MapDatabase
    gt: Trajectory
    query_descriptors: list
    measurements: list
    top1_within: np.ndarray  # per test frame: top-1 map pose within the radius
    retrieval: ErrorReport
    retrieval_poses: np.ndarray
    runs: list = field(default_factory=list)

    @property
    def top1_rate(self) -> float:
        return float(self.top1_within.mean())

    def run_filter(self, seed: int) -> FilterRun:
        poses, records = localize_filter(self.measurements, self.config, seed)
        run = FilterRun(seed, poses, records, score(Trajectory(self.gt.times, poses), self.gt))
        self.runs.append(run)
        return run


def scenario_config_for(scfg: simworld.ScenarioConfig, **overrides) -> Config:
    return scenario_filter_config(scfg.speed * scfg.dt, **overrides)


def run_scenario(scfg: simworld.ScenarioConfig = simworld.ScenarioConfig(), cfg: Config | None = None,
                 filter_seeds=(), radius: float = 10.0) -> ScenarioExperiment:
    """Render a scenario, build the map from its training traversals and localize the test traversal."""
    cfg = cfg or scenario_config_for(scfg)
    sc = simworld.make_scenario(scfg)
    map_images, map_poses, seq_ids, frame_ids = [], [], [], []
    for s, tr in enumerate(sc.training):
        map_images += simworld.render_traversal(tr, sc.world_seed, sc.camera)
        map_poses += tr.poses
        seq_ids += [s] * len(tr.poses)
        frame_ids += list(range(len(tr.poses)))
    log.info("rendered %d map images", len(map_images))
    codebook, raws = train(map_images, cfg)
    db = build_database(codebook, map_poses, raws=raws, seq_ids=seq_ids, frame_ids=frame_ids,
                        seq_names=[tr.name for tr in sc.training])
    test_images = simworld.render_traversal(sc.test, sc.world_seed, sc.camera)
    queries = [codebook.encode(im) for im in test_images]
    gt = Trajectory.from_poses(sc.test.poses, sc.test.dt)
    top1 = []
    for q, p in zip(queries, gt.poses):
        if q.degenerate:
            top1.append(False)
            continue
        idx, _ = knn(db, q, 1)
        top1.append(np.linalg.norm(db.poses[idx[0], :3] - p[:3]) <= radius)
    zs = measure_all(db, queries, cfg.retrieval())
    rpose = localize_retrieval(zs)
    exp = ScenarioExperiment(sc, cfg, codebook, db, gt, queries, zs, np.array(top1),
                             score(Trajectory(gt.times, rpose), gt), rpose)
    for s in filter_seeds:
        exp.run_filter(s)
    return exp


def write_simulation(scfg: simworld.ScenarioConfig, out) -> Path:
    """Render a scenario to ``out``: one image directory and trajectory per sequence, plus a manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sc = simworld.make_scenario(scfg)
    (out / "scenario.txt").write_text(formats.dumps_scenario(scfg))
    rows = []
    for purpose, tr in [("train", t) for t in sc.training] + [("test", sc.test)]:
        d = out / tr.name
        d.mkdir(exist_ok=True)
        for i, img in enumerate(simworld.render_traversal(tr, sc.world_seed, sc.camera)):
            formats.write_pgm(d / f"{i:06d}.pgm", img)
        formats.write_trajectory(out / f"{tr.name}.traj", Trajectory.from_poses(tr.poses, tr.dt))
        rows.append((tr.name, len(tr.poses), tr.condition.name, tr.distance, purpose))
    (out / "manifest.txt").write_text(formats.dumps_manifest(rows))
    return out
