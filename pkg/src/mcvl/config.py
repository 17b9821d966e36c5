"""Run configuration and its ``key = value`` text format.

Vectors are comma separated; covariances are given by their diagonals.  Lines
starting with ``#`` are comments.  Every key has a default, so a config file
only needs the keys it overrides.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from mcvl.features import FeatureConfig
from mcvl.particle_filter import FilterConfig, MotionNoiseModel, ObservationNoiseModel
from mcvl.retrieval import RetrievalConfig


@dataclass
class Config:
    # observation encoder
    spacing: int = 2
    widths: tuple = (16, 24, 32, 40)
    vocab_size: int = 128
    vocab_samples_per_image: int = 100
    vocab_image_stride: int = 4
    pca_dims: int = 4096  # clamped to the available rank at training time
    retrieval_r: int = 20
    meanshift_bandwidth: float = 7.5
    min_support: int = 3
    # particle filter
    n_particles: int = 1000
    init_cov_pos: tuple = (10.0, 10.0, 10.0)
    init_cov_rot: tuple = (0.001, 0.001, 1.0)
    sigma_o: tuple = (5.0, 5.0, 5.0, 0.0001, 0.0001, 0.001)
    mu_v: tuple = (0.1, 0.1, 0.01)
    sigma_v: tuple = (1.0, 1.0, 0.01)
    mu_psi: tuple = (0.001, 0.00001, 0.01)
    sigma_psi: tuple = (0.0001, 0.00001, 0.01)
    motion_frame: str = "world"
    resample: str = "always"
    skip_low_confidence: bool = False
    seed: int = 0

    def features(self) -> FeatureConfig:
        return FeatureConfig(spacing=self.spacing, widths=tuple(self.widths))

    def retrieval(self) -> RetrievalConfig:
        return RetrievalConfig(self.retrieval_r, self.meanshift_bandwidth, self.min_support)

    def filter(self) -> FilterConfig:
        return FilterConfig(
            n_particles=self.n_particles,
            init_cov_pos=np.array(self.init_cov_pos),
            init_cov_rot=np.array(self.init_cov_rot),
            motion=MotionNoiseModel(
                np.array(self.mu_v), np.diag(self.sigma_v), np.array(self.mu_psi),
                np.diag(self.sigma_psi), self.motion_frame,
            ),
            observation=ObservationNoiseModel(np.diag(self.sigma_o)),
            resample=self.resample,
            skip_low_confidence=self.skip_low_confidence,
            retrieval=self.retrieval(),
        )

    def replace(self, **kw) -> "Config":
        return dataclasses.replace(self, **kw)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str, default):
    if isinstance(default, bool):
        if text.lower() not in ("true", "false"):
            raise ValueError(f"expected true/false, got {text!r}")
        return text.lower() == "true"
    if isinstance(default, tuple):
        kind = type(default[0]) if default else float
        return tuple(kind(x.strip()) for x in text.split(",") if x.strip())
    return type(default)(text)


def dumps(cfg: Config) -> str:
    lines = ["# mcvl configuration"]
    for f in fields(cfg):
        lines.append(f"{f.name} = {_fmt(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def loads(text: str, base: Config | None = None) -> Config:
    cfg = base or Config()
    known = {f.name for f in fields(Config)}
    updates = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"line {n}: unknown config key {key!r}")
        updates[key] = _parse(val, getattr(cfg, key))
    return dataclasses.replace(cfg, **updates)


def load(path) -> Config:
    return loads(Path(path).read_text())


def save(cfg: Config, path) -> None:
    Path(path).write_text(dumps(cfg))


def scenario_filter_config(step_length: float, **overrides) -> Config:
    """Configuration used for simulated runs.

    The vehicle moves ``step_length`` meters per frame, far more than the
    default 0.1 m drift, so velocity is applied in the body frame with the
    nominal step as its forward mean and a tighter lateral noise.
    """
    base = Config(
        motion_frame="body",
        mu_v=(float(step_length), 0.0, 0.0),
        sigma_v=(0.25, 0.25, 0.01),
    )
    return dataclasses.replace(base, **overrides)

