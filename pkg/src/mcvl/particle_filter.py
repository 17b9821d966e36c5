"""Monte Carlo localization over 6-DoF poses.

Per frame: propagate every particle with a noisy velocity / angular-velocity
draw, weight it by a Gaussian likelihood of the retrieval measurement,
normalize, resample with stochastic universal sampling and report the
weighted mean pose.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from mcvl import _backend
from mcvl.geometry import Pose6D, compose_rotation, euler_to_dcm, mean_rotation, wrap_angle
from mcvl.retrieval import Measurement, MapDatabase, RetrievalConfig, measure

log = logging.getLogger(__name__)


def _cov(c, n: int) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim == 1:
        c = np.diag(c)
    if c.shape != (n, n):
        raise ValueError(f"expected {n}x{n} covariance, got {c.shape}")
    if not np.allclose(c, c.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    return c


def _factor(cov: np.ndarray) -> np.ndarray:
    """L with L L^T = cov for symmetric PSD cov (exactly zero for zero cov)."""
    vals, vecs = np.linalg.eigh(cov)
    if vals.min(initial=0.0) < -1e-12 * max(1.0, vals.max(initial=0.0)):
        raise ValueError("covariance must be positive semi-definite")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def gaussian(rng: np.random.Generator, mean, cov, n: int) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    L = _factor(_cov(cov, len(mean)))
    return mean + rng.standard_normal((n, len(mean))) @ L.T


@dataclass
class MotionNoiseModel:
    mu_v: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.1, 0.01]))
    sigma_v: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 0.01]))
    mu_psi: np.ndarray = field(default_factory=lambda: np.array([0.001, 1e-5, 0.01]))
    sigma_psi: np.ndarray = field(default_factory=lambda: np.diag([1e-4, 1e-5, 0.01]))
    frame: str = "world"  # or "body": rotate v by the particle's yaw

    def __post_init__(self):
        self.mu_v = np.asarray(self.mu_v, dtype=float).reshape(3)
        self.mu_psi = np.asarray(self.mu_psi, dtype=float).reshape(3)
        self.sigma_v = _cov(self.sigma_v, 3)
        self.sigma_psi = _cov(self.sigma_psi, 3)
        _factor(self.sigma_v)
        _factor(self.sigma_psi)
        if self.frame not in ("world", "body"):
            raise ValueError("motion frame must be 'world' or 'body'")


@dataclass
class ObservationNoiseModel:
    sigma_o: np.ndarray = field(default_factory=lambda: np.diag([5.0, 5.0, 5.0, 1e-4, 1e-4, 1e-3]))

    def __post_init__(self):
        self.sigma_o = _cov(self.sigma_o, 6)
        if np.any(np.diag(self.sigma_o) <= 0):
            raise ValueError("observation covariance diagonal must be positive")
        self._chol = np.linalg.cholesky(self.sigma_o)


@dataclass
class FilterConfig:
    n_particles: int = 1000
    init_cov_pos: np.ndarray = field(default_factory=lambda: np.array([10.0, 10.0, 10.0]))
    init_cov_rot: np.ndarray = field(default_factory=lambda: np.array([0.001, 0.001, 1.0]))
    motion: MotionNoiseModel = field(default_factory=MotionNoiseModel)
    observation: ObservationNoiseModel = field(default_factory=ObservationNoiseModel)
    resample: str = "always"  # or "neff": only when N_eff < N / 2
    skip_low_confidence: bool = False
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)


@dataclass
class ParticleSet:
    positions: np.ndarray  # (N, 3)
    orientations: np.ndarray  # (N, 3) Euler
    weights: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.weights)

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.positions.copy(), self.orientations.copy(), self.weights.copy())

    def states(self) -> np.ndarray:
        return np.hstack([self.positions, self.orientations])

    def n_eff(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))

    def spread(self) -> float:
        """Trace of the sample covariance of particle positions."""
        if len(self) < 2:
            return 0.0
        return float(np.trace(np.cov(self.positions, rowvar=False)))


def init_particles(z0, n: int, init_cov_pos=(10.0, 10.0, 10.0), init_cov_rot=(0.001, 0.001, 1.0),
                   rng: np.random.Generator | int | None = None) -> ParticleSet:
    """Gaussian cloud around the first measurement, uniform weights."""
    if n < 1:
        raise ValueError("need at least one particle")
    rng = np.random.default_rng(rng)
    pose = z0.pose if isinstance(z0, Measurement) else z0
    pos = gaussian(rng, pose.position, init_cov_pos, n)
    rot = wrap_angle(gaussian(rng, pose.orientation, init_cov_rot, n))
    return ParticleSet(pos, rot.reshape(n, 3), np.full(n, 1.0 / n))


def predict(ps: ParticleSet, noise: MotionNoiseModel, rng: np.random.Generator) -> ParticleSet:
    """Position += v; orientation := euler(dcm(psi) @ dcm(previous)). Weights untouched."""
    n = len(ps)
    v = gaussian(rng, noise.mu_v, noise.sigma_v, n)
    psi = gaussian(rng, noise.mu_psi, noise.sigma_psi, n)
    if noise.frame == "body":
        yaw = ps.orientations[:, 2]
        c, s = np.cos(yaw), np.sin(yaw)
        v = np.column_stack([c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1], v[:, 2]])
    return ParticleSet(ps.positions + v, compose_rotation(psi, ps.orientations), ps.weights.copy())


def residuals(ps: ParticleSet, z) -> np.ndarray:
    pose = z.pose if isinstance(z, Measurement) else z
    r = pose.as_vector()[None, :] - ps.states()
    r[:, 3:] = wrap_angle(r[:, 3:])
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite residual between measurement and particles")
    return r


def log_likelihood(ps: ParticleSet, z, obs: ObservationNoiseModel) -> np.ndarray:
    """``-0.5 r^T Sigma_o^-1 r`` per particle (the unnormalized likelihood is its exp)."""
    r = residuals(ps, z)
    y = np.linalg.solve(obs._chol, r.T)
    return -0.5 * np.sum(y * y, axis=0)


def update_weights(ps: ParticleSet, z, obs: ObservationNoiseModel) -> ParticleSet:
    """Multiply weights by the Gaussian likelihood in log space, then normalize."""
    with np.errstate(divide="ignore"):
        lw = np.log(ps.weights) + log_likelihood(ps, z, obs)
    lw -= lw.max()
    w = np.exp(lw)
    return ParticleSet(ps.positions.copy(), ps.orientations.copy(), w / w.sum())


def sus_select(weights, rng: np.random.Generator) -> np.ndarray:
    """Indices chosen by one uniform offset in [0, 1/N) and N evenly spaced pointers."""
    w = np.ascontiguousarray(weights, dtype=float)
    n = len(w)
    return _backend.sus_indices(w, float(rng.uniform(0.0, 1.0 / n)))


def resample_sus(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    idx = sus_select(ps.weights, rng)
    n = len(ps)
    return ParticleSet(ps.positions[idx], ps.orientations[idx], np.full(n, 1.0 / n))


def estimate(ps: ParticleSet) -> Pose6D:
    """Weighted mean position and weighted quaternion-mean orientation."""
    w = ps.weights / ps.weights.sum()
    return Pose6D(w @ ps.positions, mean_rotation(ps.orientations, w))


@dataclass
class StepRecord:
    step: int
    measurement: Pose6D | None
    support: int
    n_eff: float
    estimate: Pose6D
    spread: float
    updated: bool

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "measurement": None if self.measurement is None else self.measurement.as_vector().tolist(),
            "support": self.support,
            "n_eff": self.n_eff,
            "estimate": self.estimate.as_vector().tolist(),
            "spread": self.spread,
            "updated": self.updated,
        }


def correct(ps: ParticleSet, z: Measurement | None, cfg: FilterConfig,
            rng: np.random.Generator) -> tuple:
    """Weight update and resampling for one measurement; returns (particles, updated, n_eff)."""
    if z is None or (cfg.skip_low_confidence and z.low_confidence):
        return ps, False, ps.n_eff()
    ps = update_weights(ps, z, cfg.observation)
    neff = ps.n_eff()
    if cfg.resample == "always" or (cfg.resample == "neff" and neff < len(ps) / 2):
        ps = resample_sus(ps, rng)
    return ps, True, neff


def step(ps: ParticleSet, image, db: MapDatabase, codebook, cfg: FilterConfig,
         rng: np.random.Generator) -> tuple:
    """predict -> measure -> update -> resample -> estimate for one query image.

    A failed measurement (degenerate descriptor, empty database) degrades to a
    predict-only step.
    """
    ps = predict(ps, cfg.motion, rng)
    try:
        z = measure(db, codebook.encode(image), cfg.retrieval)
    except ValueError as exc:
        log.debug("measurement failed, predict-only step: %s", exc)
        z = None
    ps, _, _ = correct(ps, z, cfg, rng)
    return ps, estimate(ps)


class MonteCarloLocalizer:
    """Stateful filter driven by one measurement (or None) per frame."""

    def __init__(self, cfg: FilterConfig = FilterConfig(), seed: int = 0):
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.particles: ParticleSet | None = None
        self.records: list = []

    def _record(self, z, updated: bool, neff: float) -> Pose6D:
        est = estimate(self.particles)
        self.records.append(StepRecord(
            len(self.records), None if z is None else z.pose, 0 if z is None else z.support,
            neff, est, self.particles.spread(), updated,
        ))
        return est

    def initialize(self, z0: Measurement) -> Pose6D:
        self.particles = init_particles(z0, self.cfg.n_particles, self.cfg.init_cov_pos,
                                        self.cfg.init_cov_rot, self.rng)
        self.records = []
        return self._record(z0, False, self.particles.n_eff())

    def step(self, z: Measurement | None) -> Pose6D:
        if self.particles is None:
            raise RuntimeError("filter not initialized")
        ps = predict(self.particles, self.cfg.motion, self.rng)
        ps, updated, neff = correct(ps, z, self.cfg, self.rng)
        self.particles = ps
        return self._record(z, updated, neff)

    def run(self, measurements: list) -> list:
        """Initialize from the first non-None measurement, then step through the rest.

        Frames before the first usable measurement get no estimate (None).
        """
        out = []
        for z in measurements:
            if self.particles is None:
                out.append(None if z is None else self.initialize(z))
            else:
                out.append(self.step(z))
        return out


def dcm_of(ps: ParticleSet) -> np.ndarray:
    return euler_to_dcm(ps.orientations)
