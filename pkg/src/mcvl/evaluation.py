"""Trajectory scoring, comparison tables and SVG overlays."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from mcvl.geometry import euler_to_dcm, rotation_error
from mcvl.formats import Trajectory

TIME_TOL = 1e-6


def lower_median(x) -> float:
    """Median with the lower-middle element for even counts."""
    x = np.sort(np.asarray(x, dtype=float).reshape(-1))
    if len(x) == 0:
        raise ValueError("median of an empty sequence")
    return float(x[(len(x) - 1) // 2])


def smoothness(positions) -> float:
    """Mean distance between consecutive positions (0 for fewer than two)."""
    P = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(P) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(P, axis=0), axis=1).mean())


@dataclass
class ErrorReport:
    translation: np.ndarray  # per-frame, meters
    rotation: np.ndarray  # per-frame, radians
    smoothness: float

    @property
    def mean_translation(self) -> float:
        return float(self.translation.mean())

    @property
    def median_translation(self) -> float:
        return lower_median(self.translation)

    @property
    def mean_rotation(self) -> float:
        return float(self.rotation.mean())

    @property
    def median_rotation(self) -> float:
        return lower_median(self.rotation)

    def summary(self) -> dict:
        return {k: getattr(self, k) for k in COLUMNS}


COLUMNS = ("mean_translation", "median_translation", "mean_rotation", "median_rotation", "smoothness")


def score(est: Trajectory, gt: Trajectory) -> ErrorReport:
    if len(est) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(est)} vs {len(gt)}")
    if len(est) == 0:
        raise ValueError("cannot score empty trajectories")
    if np.max(np.abs(est.times - gt.times)) > TIME_TOL:
        raise ValueError("trajectory timestamps are not aligned")
    trans = np.linalg.norm(est.poses[:, :3] - gt.poses[:, :3], axis=1)
    Re, Rg = euler_to_dcm(est.poses[:, 3:]), euler_to_dcm(gt.poses[:, 3:])
    rot = np.array([rotation_error(a, b) for a, b in zip(Re, Rg)])
    return ErrorReport(trans, rot, smoothness(est.poses[:, :3]))


@dataclass
class Comparison:
    names: list
    rows: list  # one dict per name, keyed by COLUMNS
    best: dict  # column -> index of the unique best row, or None

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("method," + ",".join(COLUMNS) + "\n")
        for name, row in zip(self.names, self.rows):
            out.write(name + "," + ",".join(repr(float(row[c])) for c in COLUMNS) + "\n")
        return out.getvalue()

    def to_text(self) -> str:
        """Aligned table; the unique best entry of each column carries a ``*``."""
        cells = [["method", *COLUMNS]]
        for i, (name, row) in enumerate(zip(self.names, self.rows)):
            cells.append([name] + [f"{row[c]:.4f}" + ("*" if self.best[c] == i else "") for c in COLUMNS])
        widths = [max(len(r[j]) for r in cells) for j in range(len(cells[0]))]
        return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in cells) + "\n"


def compare(reports) -> Comparison:
    """Table over named reports (a dict or a list of ``(name, report)`` pairs); lower is better."""
    items = list(reports.items()) if isinstance(reports, dict) else list(reports)
    if len(items) < 2:
        raise ValueError("compare needs at least two reports")
    names = []
    for name, _ in items:
        if not isinstance(name, str) or not name.strip():
            raise ValueError("report names must be non-empty")
        if "," in name:
            raise ValueError(f"report name {name!r} contains a comma")
        names.append(name)
    rows = [r.summary() for _, r in items]
    best = {}
    for c in COLUMNS:
        vals = np.array([row[c] for row in rows])
        winners = np.flatnonzero(vals == vals.min())
        best[c] = int(winners[0]) if len(winners) == 1 else None
    return Comparison(names, rows, best)


def trajectory_svg(gt, est, size: int = 600, margin: int = 20) -> str:
    """Top-down overlay: ground truth in green, estimate in red (x right, y up)."""
    G = np.asarray(gt, dtype=float).reshape(-1, np.shape(gt)[-1])[:, :2]
    E = np.asarray(est, dtype=float).reshape(-1, np.shape(est)[-1])[:, :2]
    both = np.vstack([G, E])
    lo, hi = both.min(axis=0), both.max(axis=0)
    span = max(float((hi - lo).max()), 1e-9)
    s = (size - 2 * margin) / span

    def pts(P):
        return " ".join(f"{margin + (x - lo[0]) * s:.2f},{size - margin - (y - lo[1]) * s:.2f}" for x, y in P)

    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">\n'
        f'<rect width="{size}" height="{size}" fill="white"/>\n'
        f'<polyline fill="none" stroke="green" stroke-width="2" points="{pts(G)}"/>\n'
        f'<polyline fill="none" stroke="red" stroke-width="1.5" points="{pts(E)}"/>\n'
        "</svg>\n"
    )
