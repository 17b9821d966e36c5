"""On-disk formats: images, trajectories, descriptor dumps, codebooks, map databases,
scenario files and manifests.

All binary formats are little-endian.  Writers are deterministic, so every
format survives write -> read -> write byte-identically.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mcvl.encoder import Codebook, PcaModel, Vocabulary
from mcvl.features import DescriptorSet, FeatureConfig, to_gray
from mcvl.geometry import Pose6D
from mcvl.retrieval import MapDatabase
from mcvl.simworld import ConditionSpec, ScenarioConfig

DESC_MAGIC = b"MCVLDSC1"
CODEBOOK_MAGIC = b"MCVLCB\0\0"
CODEBOOK_VERSION = 1
DB_MAGIC = b"MCVLDB\0\0"
DB_VERSION = 1


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------- images

def write_pgm(path, img) -> None:
    """8-bit binary PGM (P5); intensities in [0, 1] are rounded to 0..255."""
    a = np.round(np.clip(np.asarray(img, dtype=float), 0, 1) * 255).astype(np.uint8)
    H, W = a.shape
    Path(path).write_bytes(f"P5\n{W} {H}\n255\n".encode() + a.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    W, H, maxval = (int(t) for t in tokens[1:])
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    n = W * H * dtype.itemsize
    if len(data) - pos < n:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(data[pos:pos + n], dtype=dtype).reshape(H, W).astype(float) / maxval


def read_image(path) -> np.ndarray:
    """Grayscale image in [0, 1] from PGM, or any format Pillow reads."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    from PIL import Image  # optional dependency

    with Image.open(path) as im:
        a = np.asarray(im, dtype=float)
        scale = 65535.0 if a.max(initial=0) > 255 else 255.0
        a = a / scale
    return to_gray(a) if a.ndim == 3 else a


IMAGE_SUFFIXES = (".pgm", ".png")


def list_images(directory) -> list:
    d = Path(directory)
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise FormatError(f"no images found in {d}")
    return files


# ---------------------------------------------------------------- trajectories

@dataclass
class Trajectory:
    times: np.ndarray  # (n,)
    poses: np.ndarray  # (n, 6): x y z roll pitch yaw

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 6)
        if len(self.times) != len(self.poses):
            raise ValueError("times and poses differ in length")

    def __len__(self) -> int:
        return len(self.times)

    @classmethod
    def from_poses(cls, poses, dt: float = 1.0) -> "Trajectory":
        vecs = [p.as_vector() if isinstance(p, Pose6D) else np.asarray(p, float) for p in poses]
        return cls(np.arange(len(vecs)) * dt, np.array(vecs).reshape(-1, 6))

    def pose(self, i: int) -> Pose6D:
        return Pose6D.from_vector(self.poses[i])


TRAJ_HEADER = "# t x y z roll pitch yaw\n"


def dumps_trajectory(traj: Trajectory) -> str:
    rows = [TRAJ_HEADER]
    for t, p in zip(traj.times, traj.poses):
        rows.append(" ".join(repr(float(v)) for v in (t, *p)) + "\n")
    return "".join(rows)


def loads_trajectory(text: str) -> Trajectory:
    rows = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 7:
            raise FormatError(f"line {n}: expected 7 fields 't x y z roll pitch yaw', got {len(parts)}")
        rows.append([float(x) for x in parts])
    a = np.array(rows, dtype=float).reshape(-1, 7)
    return Trajectory(a[:, 0], a[:, 1:])


def write_trajectory(path, traj: Trajectory) -> None:
    Path(path).write_text(dumps_trajectory(traj))


def read_trajectory(path) -> Trajectory:
    return loads_trajectory(Path(path).read_text())


# ---------------------------------------------------------------- descriptor dumps

def dump_descriptors(ds: DescriptorSet) -> bytes:
    M, d = ds.descriptors.shape
    return (DESC_MAGIC + struct.pack("<II", M, d)
            + np.asarray(ds.descriptors, "<f4").tobytes()
            + np.asarray(ds.keypoints, "<f4").reshape(M, 3).tobytes())


def load_descriptors(data: bytes) -> DescriptorSet:
    if data[:8] != DESC_MAGIC:
        raise FormatError("not a descriptor dump")
    M, d = struct.unpack_from("<II", data, 8)
    off = 16
    desc = np.frombuffer(data, "<f4", M * d, off).reshape(M, d).astype(float)
    off += 4 * M * d
    kp = np.frombuffer(data, "<f4", M * 3, off).reshape(M, 3).astype(float)
    return DescriptorSet(desc, kp)


# ---------------------------------------------------------------- codebook

def codebook_bytes(cb: Codebook) -> bytes:
    K, d = cb.vocab.centers.shape
    p = cb.pca.p
    widths = tuple(cb.features.widths)
    head = CODEBOOK_MAGIC + struct.pack("<IIIII", CODEBOOK_VERSION, K, d, p, cb.features.spacing)
    head += struct.pack("<I", len(widths)) + struct.pack(f"<{len(widths)}I", *widths)
    blocks = [cb.vocab.centers, cb.pca.mean, cb.pca.basis, cb.pca.scale]
    return head + b"".join(np.ascontiguousarray(b, "<f4").tobytes() for b in blocks)


def codebook_from_bytes(data: bytes) -> Codebook:
    if data[:8] != CODEBOOK_MAGIC:
        raise FormatError("not a codebook file")
    version, K, d, p, spacing = struct.unpack_from("<IIIII", data, 8)
    if version != CODEBOOK_VERSION:
        raise FormatError(f"unsupported codebook version {version}")
    off = 28
    (nw,) = struct.unpack_from("<I", data, off)
    widths = struct.unpack_from(f"<{nw}I", data, off + 4)
    off += 4 + 4 * nw
    D = K * d

    def take(n, shape):
        nonlocal off
        a = np.frombuffer(data, "<f4", n, off).reshape(shape).astype(float)
        off += 4 * n
        return a

    centers = take(K * d, (K, d))
    mean = take(D, (D,))
    basis = take(D * p, (D, p))
    scale = take(p, (p,))
    if off != len(data):
        raise FormatError("trailing bytes in codebook file")
    return Codebook(Vocabulary(centers), PcaModel(mean, basis, scale),
                    FeatureConfig(spacing=spacing, widths=tuple(widths)))


def codebook_hash(cb: Codebook) -> bytes:
    return hashlib.sha256(codebook_bytes(cb)).digest()


def write_codebook(path, cb: Codebook) -> None:
    Path(path).write_bytes(codebook_bytes(cb))


def read_codebook(path) -> Codebook:
    return codebook_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------- map database

def _db_record_dtype(p: int) -> np.dtype:
    return np.dtype([("desc", "<f4", (p,)), ("pose", "<f8", (6,)), ("seq", "<u4"), ("frame", "<u4")])


def database_bytes(db: MapDatabase) -> bytes:
    p = db.dim
    buf = io.BytesIO()
    buf.write(DB_MAGIC + struct.pack("<IQ", DB_VERSION, len(db)))
    buf.write(db.codebook_hash.ljust(32, b"\0")[:32])
    buf.write(struct.pack("<II", p, len(db.seq_names)))
    for name in db.seq_names:
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)) + raw)
    rec = np.zeros(len(db), _db_record_dtype(p))
    rec["desc"] = db.descriptors
    rec["pose"] = db.poses
    rec["seq"] = db.seq_ids
    rec["frame"] = db.frame_ids
    buf.write(rec.tobytes())
    return buf.getvalue()


def database_from_bytes(data: bytes) -> MapDatabase:
    if data[:8] != DB_MAGIC:
        raise FormatError("not a map database file")
    version, n = struct.unpack_from("<IQ", data, 8)
    if version != DB_VERSION:
        raise FormatError(f"unsupported database version {version}")
    off = 20
    h = data[off:off + 32]
    off += 32
    p, n_names = struct.unpack_from("<II", data, off)
    off += 8
    names = []
    for _ in range(n_names):
        (ln,) = struct.unpack_from("<H", data, off)
        names.append(data[off + 2:off + 2 + ln].decode())
        off += 2 + ln
    dt = _db_record_dtype(p)
    if len(data) - off != n * dt.itemsize:
        raise FormatError("database record block has the wrong size")
    rec = np.frombuffer(data, dt, n, off)
    return MapDatabase(rec["desc"].astype(float), rec["pose"].astype(float),
                       rec["seq"].astype(np.int64), rec["frame"].astype(np.int64), h, names)


def write_database(path, db: MapDatabase) -> None:
    Path(path).write_bytes(database_bytes(db))


def read_database(path) -> MapDatabase:
    return database_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------- scenarios

_SCALAR_KEYS = ("seed", "extent", "grid", "speed", "dt", "image_width", "image_height", "start", "goal")
_COND_FIELDS = ("gain", "bias", "noise_sigma", "occlusions", "phase_jitter", "seed")


def _check_name(name: str) -> str:
    if not name or any(c.isspace() for c in name) or any(c in name for c in ",=#"):
        raise FormatError(f"invalid sequence/condition name {name!r}")
    return name


def dumps_scenario(cfg: ScenarioConfig) -> str:
    lines = ["# mcvl scenario"]
    for k in _SCALAR_KEYS:
        v = getattr(cfg, k)
        lines.append(f"{k} = {repr(float(v)) if isinstance(v, float) else v}")
    conds = list(cfg.train_conditions) + [cfg.test_condition]
    for c in conds:
        vals = ", ".join(repr(float(getattr(c, f))) if isinstance(getattr(c, f), float) else str(getattr(c, f))
                         for f in _COND_FIELDS)
        lines.append(f"condition.{_check_name(c.name)} = {vals}")
    lines.append("train = " + ", ".join(c.name for c in cfg.train_conditions))
    lines.append(f"test = {cfg.test_condition.name}")
    return "\n".join(lines) + "\n"


def loads_scenario(text: str) -> ScenarioConfig:
    defaults = ScenarioConfig()
    scalars, conds, train, test = {}, {}, None, None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in _SCALAR_KEYS:
            scalars[key] = type(getattr(defaults, key))(val)
        elif key.startswith("condition."):
            name = _check_name(key[len("condition."):])
            parts = [x.strip() for x in val.split(",")]
            if len(parts) != len(_COND_FIELDS):
                raise FormatError(f"line {n}: condition needs {len(_COND_FIELDS)} values")
            conds[name] = ConditionSpec(name, float(parts[0]), float(parts[1]), float(parts[2]),
                                        int(parts[3]), float(parts[4]), int(parts[5]))
        elif key == "train":
            train = [x.strip() for x in val.split(",") if x.strip()]
        elif key == "test":
            test = val
        else:
            raise FormatError(f"line {n}: unknown scenario key {key!r}")
    kw = dict(scalars)
    if train is not None:
        kw["train_conditions"] = tuple(conds[c] for c in train)
    if test is not None:
        kw["test_condition"] = conds[test]
    return ScenarioConfig(**kw)


MANIFEST_HEADER = "# sequence images condition distance_m purpose\n"


def dumps_manifest(rows: list) -> str:
    """Rows of (sequence, image_count, condition, distance_m, purpose)."""
    out = [MANIFEST_HEADER]
    for seq, count, cond, dist, purpose in rows:
        out.append(f"{_check_name(seq)} {int(count)} {_check_name(cond)} {repr(float(dist))} {_check_name(purpose)}\n")
    return "".join(out)


def loads_manifest(text: str) -> list:
    rows = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise FormatError(f"line {n}: expected 5 manifest fields")
        rows.append((parts[0], int(parts[1]), parts[2], float(parts[3]), parts[4]))
    return rows


# ---------------------------------------------------------------- step logs

def write_step_log(path, records) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json() if hasattr(r, "to_json") else r, sort_keys=True) + "\n")
