"""Procedural road world: network, trajectories and toy camera images.

The world is an infinite planar intensity field made of a smooth background
plus sparse "landmarks" (blobs, stripe patches, bars, rings, checkers) anchored
at world coordinates.  A camera at a pose sees a forward-facing trapezoid of
ground; a :class:`ConditionSpec` perturbs brightness, adds sensor noise and
occluding blocks and jitters texture phase, standing in for time-of-day and
weather changes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from mcvl.geometry import Pose6D, wrap_angle

CELL = 20.0  # landmark cell size, meters


@dataclass
class RoadNetwork:
    nodes: np.ndarray  # (n, 2)
    edges: list  # (i, j, width)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        n = len(self.nodes)
        for i, j, _ in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) references a missing node")
            if not np.linalg.norm(self.nodes[i] - self.nodes[j]) > 0:
                raise ValueError(f"edge ({i}, {j}) has zero length")

    def adjacency(self) -> dict:
        adj = {i: [] for i in range(len(self.nodes))}
        for i, j, _ in self.edges:
            length = float(np.linalg.norm(self.nodes[i] - self.nodes[j]))
            adj[i].append((j, length))
            adj[j].append((i, length))
        return adj

    def is_connected(self) -> bool:
        adj = self.adjacency()
        seen, stack = {0}, [0]
        while stack:
            for j, _ in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == len(self.nodes)


@dataclass(frozen=True)
class ConditionSpec:
    name: str = "clear"
    gain: float = 1.0
    bias: float = 0.0
    noise_sigma: float = 0.0
    occlusions: int = 0
    phase_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError("condition gain must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")


@dataclass(frozen=True)
class CameraSpec:
    width: int = 128
    height: int = 96
    near: float = 5.0
    far: float = 45.0
    hfov: float = math.radians(60.0)


@dataclass
class Traversal:
    name: str
    poses: list
    condition: ConditionSpec
    dt: float = 1.0

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.poses)) * self.dt

    @property
    def distance(self) -> float:
        p = np.array([q.position for q in self.poses])
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum()) if len(p) > 1 else 0.0


@dataclass
class Scenario:
    network: RoadNetwork
    training: list  # of Traversal
    test: Traversal
    world_seed: int = 0
    camera: CameraSpec = field(default_factory=CameraSpec)

    def __post_init__(self):
        names = {t.condition.name for t in self.training}
        if self.test.condition.name in names or any(
            self.test.condition == t.condition for t in self.training
        ):
            raise ValueError("test condition must differ from all training conditions")


def generate_network(seed: int, extent: float, n: int = 4, jitter: float = 0.15) -> RoadNetwork:
    """n x n jittered grid; 4-neighbour edges plus one diagonal per cell.

    Edge count is ``2 n (n - 1) + (n - 1)^2``.  Nodes stay inside
    ``[0, extent]^2``.
    """
    if not extent > 0:
        raise ValueError("extent must be positive")
    rng = np.random.default_rng(seed)
    step = extent / (n - 1)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    base = np.column_stack([jj.ravel() * step, ii.ravel() * step])
    nodes = np.clip(base + rng.uniform(-jitter, jitter, base.shape) * step, 0.0, extent)
    idx = lambda r, c: r * n + c  # noqa: E731
    edges = []
    for r in range(n):
        for c in range(n):
            if c + 1 < n:
                edges.append((idx(r, c), idx(r, c + 1), float(rng.uniform(6, 12))))
            if r + 1 < n:
                edges.append((idx(r, c), idx(r + 1, c), float(rng.uniform(6, 12))))
    for r in range(n - 1):
        for c in range(n - 1):
            if rng.random() < 0.5:
                edges.append((idx(r, c), idx(r + 1, c + 1), float(rng.uniform(6, 12))))
            else:
                edges.append((idx(r, c + 1), idx(r + 1, c), float(rng.uniform(6, 12))))
    return RoadNetwork(nodes, edges)


def shortest_path(network: RoadNetwork, start: int, goal: int) -> list:
    adj = network.adjacency()
    if start not in adj or goal not in adj:
        raise ValueError("start/goal not in network")
    dist = {start: 0.0}
    prev = {}
    heap = [(0.0, start)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == goal:
            break
        if d > dist.get(u, math.inf):
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if goal not in dist:
        raise ValueError(f"goal {goal} unreachable from {start}")
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


class _Polyline:
    def __init__(self, pts: np.ndarray):
        self.pts = pts
        seg = np.diff(pts, axis=0)
        self.len = np.linalg.norm(seg, axis=1)
        self.cum = np.r_[0.0, np.cumsum(self.len)]
        self.total = float(self.cum[-1])

    def point(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.total)
        k = min(int(np.searchsorted(self.cum, s, side="right")) - 1, len(self.len) - 1)
        t = (s - self.cum[k]) / self.len[k]
        return self.pts[k] + t * (self.pts[k + 1] - self.pts[k])

    def project(self, p: np.ndarray, s_hint: float, window: float) -> float:
        best_s, best_d = s_hint, math.inf
        lo = max(0, int(np.searchsorted(self.cum, s_hint - window)) - 1)
        hi = min(len(self.len), int(np.searchsorted(self.cum, s_hint + window)) + 1)
        for k in range(lo, hi):
            a, b = self.pts[k], self.pts[k + 1]
            t = np.clip(np.dot(p - a, b - a) / self.len[k] ** 2, 0.0, 1.0)
            d = float(np.linalg.norm(a + t * (b - a) - p))
            if d < best_d:
                best_d, best_s = d, float(self.cum[k] + t * self.len[k])
        return best_s


def _offset_polyline(pts: np.ndarray, offset: float) -> np.ndarray:
    if offset == 0:
        return pts
    seg = np.diff(pts, axis=0)
    nrm = np.column_stack([-seg[:, 1], seg[:, 0]]) / np.linalg.norm(seg, axis=1, keepdims=True)
    vn = np.vstack([nrm[:1], (nrm[:-1] + nrm[1:]) / 2, nrm[-1:]])
    vn /= np.linalg.norm(vn, axis=1, keepdims=True)
    return pts + offset * vn


def drive(network: RoadNetwork, start: int, goal: int, speed: float, dt: float, seed: int,
          speed_jitter: float = 0.05, max_yaw_rate: float = math.radians(30.0),
          lateral_offset: float = 0.0, start_offset: float = 0.0,
          attitude_noise: float = 0.002, lookahead: float | None = None) -> list:
    """Drive the shortest path from ``start`` to ``goal``.

    Pure-pursuit steering toward a look-ahead point, yaw change per step capped
    at ``max_yaw_rate * dt``, speed jittered by a bounded relative amount.
    Returns Pose6D list with z = 0 and small roll/pitch noise.
    """
    rng = np.random.default_rng(seed)
    nodes = shortest_path(network, start, goal)
    line = _Polyline(_offset_polyline(network.nodes[nodes], lateral_offset))
    step_nom = speed * dt
    look = lookahead if lookahead is not None else max(3.0 * step_nom, 8.0)
    s = min(start_offset, line.total)
    pos = line.point(s)
    ahead = line.point(s + 1e-3) - pos
    yaw = math.atan2(ahead[1], ahead[0])
    cap = max_yaw_rate * dt
    poses = []
    while True:
        rp = rng.normal(0.0, attitude_noise, 2) if attitude_noise > 0 else np.zeros(2)
        poses.append(Pose6D([pos[0], pos[1], 0.0], [rp[0], rp[1], yaw]))
        if s >= line.total - 0.5 * step_nom:
            break
        target = line.point(s + look)
        d = target - pos
        desired = math.atan2(d[1], d[0]) if np.hypot(*d) > 1e-9 else yaw
        yaw = float(wrap_angle(yaw + float(np.clip(wrap_angle(desired - yaw), -cap, cap))))
        jit = float(np.clip(rng.normal(0.0, speed_jitter), -2 * speed_jitter, 2 * speed_jitter)) if speed_jitter > 0 else 0.0
        step = step_nom * (1.0 + jit)
        pos = pos + step * np.array([math.cos(yaw), math.sin(yaw)])
        s = line.project(pos, s + step, 4 * step + look)
        if len(poses) > 100000:
            raise RuntimeError("drive did not terminate")
    return poses


# ---------------------------------------------------------------- rendering

def _hash01(ix, iy, seed: int) -> np.ndarray:
    """Deterministic uniform [0, 1) value per integer lattice point."""
    with np.errstate(over="ignore"):
        h = (np.asarray(ix, dtype=np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
             ^ np.asarray(iy, dtype=np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
             ^ np.uint64(seed & 0xFFFFFFFF) * np.uint64(0x165667B19E3779F9))
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xFF51AFD7ED558CCD)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xC4CEB9FE1A85EC53)
        h ^= h >> np.uint64(33)
    return (h >> np.uint64(11)).astype(float) / float(1 << 53)


def value_noise(x, y, scale: float, seed: int) -> np.ndarray:
    """Smooth lattice noise in [-1, 1] with lattice spacing ``scale`` meters."""
    gx, gy = np.asarray(x) / scale, np.asarray(y) / scale
    x0, y0 = np.floor(gx), np.floor(gy)
    tx, ty = gx - x0, gy - y0
    tx, ty = tx * tx * (3 - 2 * tx), ty * ty * (3 - 2 * ty)
    x0, y0 = x0.astype(np.int64), y0.astype(np.int64)
    v00 = _hash01(x0, y0, seed)
    v10 = _hash01(x0 + 1, y0, seed)
    v01 = _hash01(x0, y0 + 1, seed)
    v11 = _hash01(x0 + 1, y0 + 1, seed)
    v = (v00 * (1 - tx) + v10 * tx) * (1 - ty) + (v01 * (1 - tx) + v11 * tx) * ty
    return 2.0 * v - 1.0


N_PROTOTYPES = 24


@lru_cache(maxsize=64)
def _prototypes(seed: int) -> np.ndarray:
    """Finite landmark catalog: rows (type, theta, radius, freq, amp, phase).

    Every landmark in the world is a lightly perturbed copy of one prototype,
    so individual structures repeat across places.
    """
    rng = np.random.default_rng([seed & 0xFFFFFFFF, 0xCA7])
    out = np.empty((N_PROTOTYPES, 6))
    out[:, 0] = rng.integers(0, 5, N_PROTOTYPES)
    out[:, 1] = rng.uniform(0, np.pi, N_PROTOTYPES)
    out[:, 2] = rng.uniform(1.5, 5.0, N_PROTOTYPES)
    out[:, 3] = rng.uniform(0.25, 0.8, N_PROTOTYPES)
    out[:, 4] = rng.uniform(0.2, 0.45, N_PROTOTYPES) * rng.choice([-1.0, 1.0], N_PROTOTYPES)
    out[:, 5] = rng.uniform(0, 2 * np.pi, N_PROTOTYPES)
    return out


@lru_cache(maxsize=65536)
def _cell_landmarks(seed: int, cx: int, cy: int) -> np.ndarray:
    """Landmarks in one world cell: rows (x, y, type, theta, radius, freq, amp, phase)."""
    rng = np.random.default_rng([seed & 0xFFFFFFFF, cx + (1 << 31), cy + (1 << 31)])
    n = rng.poisson(2.5)
    proto = _prototypes(seed)[rng.integers(0, N_PROTOTYPES, n)]
    out = np.empty((n, 8))
    out[:, 0] = (cx + rng.random(n)) * CELL
    out[:, 1] = (cy + rng.random(n)) * CELL
    out[:, 2:] = proto
    out[:, 3] += rng.normal(0, 0.05, n)
    out[:, 4] *= rng.uniform(0.9, 1.1, n)
    return out


def landmarks_in_box(seed: int, xmin: float, xmax: float, ymin: float, ymax: float) -> np.ndarray:
    cells = [
        _cell_landmarks(seed, cx, cy)
        for cx in range(int(math.floor(xmin / CELL)), int(math.floor(xmax / CELL)) + 1)
        for cy in range(int(math.floor(ymin / CELL)), int(math.floor(ymax / CELL)) + 1)
    ]
    return np.vstack(cells) if cells else np.zeros((0, 8))


def ground_points(pose: Pose6D, cam: CameraSpec) -> tuple:
    """World (X, Y) of every pixel of the forward ground view."""
    H, W = cam.height, cam.width
    rows = np.arange(H)
    depth = cam.far + (cam.near - cam.far) * rows / (H - 1)  # top row = far
    u = (np.arange(W) - (W - 1) / 2.0) / ((W - 1) / 2.0)
    lateral = u[None, :] * depth[:, None] * math.tan(cam.hfov / 2)
    fwd = np.broadcast_to(depth[:, None], lateral.shape)
    yaw = float(pose.orientation[2])
    c, s = math.cos(yaw), math.sin(yaw)
    X = pose.position[0] + c * fwd - s * lateral
    Y = pose.position[1] + s * fwd + c * lateral
    return X, Y


def world_intensity(X: np.ndarray, Y: np.ndarray, seed: int, phase_jitter: float = 0.0,
                    jitter_seed: int = 0) -> np.ndarray:
    """Noise-free world texture at points (X, Y), roughly in [0, 1]."""
    # background (road surface, vegetation) belongs to the condition, not the place
    bg = seed ^ (jitter_seed * 0x9E37 + 0x5A5A)
    img = 0.5 + 0.08 * value_noise(X, Y, 4.0, bg) + 0.04 * value_noise(X, Y, 1.3, bg ^ 0x3C3C)
    lm = landmarks_in_box(seed, X.min() - 15, X.max() + 15, Y.min() - 15, Y.max() + 15)
    if len(lm) == 0:
        return img
    jrng = np.random.default_rng([jitter_seed & 0xFFFFFFFF, 17])
    for x0, y0, kind, th, r, f, a, ph in lm:
        reach = 2.5 * r
        m = (np.abs(X - x0) < reach) & (np.abs(Y - y0) < reach)
        if not m.any():
            continue
        dx, dy = X[m] - x0, Y[m] - y0
        ct, st = math.cos(th), math.sin(th)
        u = ct * dx + st * dy
        w = -st * dx + ct * dy
        rho2 = (u * u + w * w) / (r * r)
        if phase_jitter:
            ph = ph + phase_jitter * float(jrng.normal())
        kind = int(kind)
        if kind == 0:  # blob
            val = np.exp(-rho2 * rho2)
        elif kind == 1:  # stripe patch
            val = np.cos(2 * np.pi * f * u + ph) * np.exp(-rho2)
        elif kind == 2:  # bar
            val = np.exp(-((u / r) ** 8) - ((w / (0.3 * r)) ** 8))
        elif kind == 3:  # ring
            val = np.exp(-(((np.sqrt(rho2) - 1.0) / 0.25) ** 2))
        else:  # checker
            val = np.tanh(3 * np.sin(2 * np.pi * f * u + ph) * np.sin(2 * np.pi * f * w)) * np.exp(-rho2)
        img[m] += a * val
    return img


def _pose_seed(pose: Pose6D, cond: ConditionSpec) -> list:
    key = np.round(pose.as_vector() * 1e6).astype(np.int64)
    return [int(v) & 0xFFFFFFFF for v in key] + [cond.seed & 0xFFFFFFFF]


def render(pose: Pose6D, world_seed: int, cond: ConditionSpec = ConditionSpec(),
           size: tuple | CameraSpec = (128, 96)) -> np.ndarray:
    """Grayscale view (H x W, values k/255) of the ground ahead of ``pose``."""
    cam = size if isinstance(size, CameraSpec) else CameraSpec(width=size[0], height=size[1])
    X, Y = ground_points(pose, cam)
    img = world_intensity(X, Y, world_seed, cond.phase_jitter, cond.seed)
    img = cond.gain * img + cond.bias
    rng = np.random.default_rng(_pose_seed(pose, cond))
    H, W = img.shape
    for _ in range(cond.occlusions):
        bh, bw = int(rng.integers(H // 8, H // 4)), int(rng.integers(W // 10, W // 5))
        y0, x0 = int(rng.integers(0, H - bh)), int(rng.integers(0, W - bw))
        img[y0:y0 + bh, x0:x0 + bw] = rng.uniform(0.1, 0.9)
    if cond.noise_sigma > 0:
        img = img + rng.normal(0.0, cond.noise_sigma, img.shape)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, float).ravel() - np.mean(a)
    b = np.asarray(b, float).ravel() - np.mean(b)
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / den) if den > 0 else 0.0


# ---------------------------------------------------------------- scenarios

DEFAULT_TRAIN_CONDITIONS = (
    ConditionSpec("11:24am-rainy", gain=0.9, bias=0.05, noise_sigma=0.02, occlusions=1, phase_jitter=0.4, seed=11),
    ConditionSpec("9:15pm-clear", gain=0.6, bias=0.02, noise_sigma=0.025, occlusions=0, phase_jitter=0.2, seed=21),
    ConditionSpec("1:28pm-sunny", gain=1.15, bias=-0.05, noise_sigma=0.01, occlusions=0, phase_jitter=0.0, seed=13),
)
DEFAULT_TEST_CONDITION = ConditionSpec(
    "6:26pm-cloudy", gain=0.75, bias=0.08, noise_sigma=0.02, occlusions=1, phase_jitter=0.3, seed=18
)


@dataclass
class ScenarioConfig:
    seed: int = 7
    extent: float = 700.0
    grid: int = 4
    speed: float = 10.0
    dt: float = 0.25
    image_width: int = 128
    image_height: int = 96
    start: int = 0
    goal: int = -1
    train_conditions: tuple = DEFAULT_TRAIN_CONDITIONS
    test_condition: ConditionSpec = DEFAULT_TEST_CONDITION


def make_scenario(cfg: ScenarioConfig = ScenarioConfig()) -> Scenario:
    """Training traversals (one per condition) and a test traversal over one route.

    Each traversal uses its own lane offset, start phase and speed jitter so
    test frames never coincide with map frames.
    """
    net = generate_network(cfg.seed, cfg.extent, cfg.grid)
    goal = cfg.goal % len(net.nodes)
    step = cfg.speed * cfg.dt
    training = []
    for k, cond in enumerate(cfg.train_conditions):
        poses = drive(net, cfg.start, goal, cfg.speed, cfg.dt, seed=cfg.seed * 100 + k,
                      lateral_offset=(-1.0, 0.0, 1.0)[k % 3], start_offset=step * k / max(len(cfg.train_conditions), 1))
        training.append(Traversal(f"train-{k + 1:02d}", poses, cond, cfg.dt))
    test_poses = drive(net, cfg.start, goal, cfg.speed, cfg.dt, seed=cfg.seed * 100 + 99,
                       lateral_offset=0.5, start_offset=0.37 * step)
    test = Traversal("test-01", test_poses, cfg.test_condition, cfg.dt)
    cam = CameraSpec(width=cfg.image_width, height=cfg.image_height)
    return Scenario(net, training, test, cfg.seed, cam)


def render_traversal(tr: Traversal, world_seed: int, cam: CameraSpec) -> list:
    return [render(p, world_seed, tr.condition, cam) for p in tr.poses]
