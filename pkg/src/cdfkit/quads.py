"""Quad layout extraction from a direction field, the planarity measure, and
projection-based planarization."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .field import DirectionField, singularity_indices
from .mesh import TriMesh
from .strokes import SurfaceLocator, TraceConfig, trace_streamline


class QuadError(ValueError):
    pass


@dataclass
class QuadMesh:
    """Positions (N, 3) and quads (Q, 4). ``grid`` optionally records the
    ragged-layout structure: an (R, C) int array of vertex indices with -1
    marking holes."""

    positions: np.ndarray
    quads: np.ndarray
    grid: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.quads = np.asarray(self.quads, dtype=np.int64).reshape(-1, 4)
        n = len(self.positions)
        if self.quads.size:
            if self.quads.min() < 0 or self.quads.max() >= n:
                raise QuadError("quad references an invalid vertex")
            for q in self.quads:
                if len(set(int(x) for x in q)) != 4:
                    raise QuadError("quad vertices must be distinct")
            p = self.positions[self.quads]
            area = 0.5 * (
                np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
                + np.linalg.norm(np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]), axis=1)
            )
            scale = max(float(np.linalg.norm(np.ptp(p.reshape(-1, 3), axis=0))), 1e-30)
            if (area < 1e-12 * scale**2).any():
                raise QuadError("zero-area quad")

    @property
    def count(self) -> int:
        return len(self.quads)


@dataclass
class PlanarityReport:
    eta: np.ndarray
    eta_mean: float
    eta_max: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "eta": np.asarray(self.eta).tolist(),
                "mean": self.eta_mean,
                "max": self.eta_max,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PlanarityReport":
        d = json.loads(text)
        return cls(eta=np.array(d["eta"]), eta_mean=d["mean"], eta_max=d["max"])


def save_quad_obj(quad: QuadMesh) -> str:
    lines = [
        f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}" for p in quad.positions
    ]
    lines += [f"f {q[0] + 1} {q[1] + 1} {q[2] + 1} {q[3] + 1}" for q in quad.quads]
    return "\n".join(lines) + "\n"


def load_quad_obj(text: str) -> QuadMesh:
    positions, quads = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) != 4:
                raise QuadError(f"line {lineno}: malformed vertex")
            positions.append([float(x) for x in parts[1:]])
        elif parts[0] == "f":
            if len(parts) != 5:
                raise QuadError(f"line {lineno}: quad faces need 4 indices")
            quads.append([int(p.split("/")[0]) - 1 for p in parts[1:]])
    return QuadMesh(np.array(positions), np.array(quads, dtype=np.int64))


def segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between segments [p1, p2] and [q1, q2]."""
    d1 = p2 - p1
    d2 = q2 - q1
    r = p1 - q1
    a = float(np.dot(d1, d1))
    e = float(np.dot(d2, d2))
    f = float(np.dot(d2, r))
    if a < 1e-300 and e < 1e-300:
        return float(np.linalg.norm(r))
    if a < 1e-300:
        t = np.clip(f / e, 0.0, 1.0)
        return float(np.linalg.norm(r - t * d2))
    c = float(np.dot(d1, r))
    if e < 1e-300:
        s = np.clip(-c / a, 0.0, 1.0)
        return float(np.linalg.norm(p1 + s * d1 - q1))
    b = float(np.dot(d1, d2))
    den = a * e - b * b
    s = np.clip((b * f - c * e) / den, 0.0, 1.0) if den > 1e-300 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = np.clip(-c / a, 0.0, 1.0)
    elif t > 1.0:
        t = 1.0
        s = np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm(p1 + s * d1 - (q1 + t * d2)))


def planarity(quad: QuadMesh) -> PlanarityReport:
    """Per quad: minimum diagonal segment distance over mean edge length."""
    if quad.count == 0:
        raise QuadError("empty quad mesh")
    p = quad.positions[quad.quads]
    edges = np.stack(
        [
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 3] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 3], axis=1),
        ],
        axis=1,
    )
    mean_edge = edges.mean(axis=1)
    if (mean_edge < 1e-300).any():
        raise QuadError("degenerate quad with zero average edge length")
    eta = np.empty(quad.count)
    for i in range(quad.count):
        d = segment_distance(p[i, 0], p[i, 2], p[i, 1], p[i, 3])
        eta[i] = d / mean_edge[i]
    return PlanarityReport(eta=eta, eta_mean=float(eta.mean()), eta_max=float(eta.max()))


def planarize(
    quad: QuadMesh,
    reference: TriMesh | None = None,
    iters: int = 100,
    damping: float = 0.5,
    w_ref: float = 0.1,
):
    """Local-global planarization.

    Each iteration projects every quad onto its least-squares plane, averages
    the per-vertex copies, blends with the previous position by ``damping``,
    and optionally pulls towards the closest point on ``reference`` with
    weight ``w_ref``. Returns (QuadMesh, report before, report after).
    """
    before = planarity(quad)
    pos = quad.positions.copy()
    locator = SurfaceLocator(reference) if reference is not None else None
    q = quad.quads

    for _ in range(iters):
        acc = np.zeros_like(pos)
        cnt = np.zeros(len(pos))
        p = pos[q]  # (Q, 4, 3)
        cen = p.mean(axis=1, keepdims=True)
        d = p - cen
        cov = np.einsum("qij,qik->qjk", d, d)
        _, vecs = np.linalg.eigh(cov)
        normal = vecs[:, :, 0]  # smallest-eigenvalue direction
        off = np.einsum("qij,qj->qi", d, normal)
        proj = p - off[:, :, None] * normal[:, None, :]
        for corner in range(4):
            np.add.at(acc, q[:, corner], proj[:, corner])
            np.add.at(cnt, q[:, corner], 1.0)
        used = cnt > 0
        target = pos.copy()
        target[used] = acc[used] / cnt[used, None]
        new = damping * pos + (1.0 - damping) * target
        if locator is not None:
            closest = np.array([locator.snap(pt)[0] for pt in new])
            new = (1.0 - w_ref) * new + w_ref * closest
        pos = new

    out = QuadMesh(positions=pos, quads=quad.quads.copy(), grid=quad.grid)
    after = planarity(out)
    return out, before, after


# ---------------------------------------------------------------------------
# layout tracing


def _resample_by_arclength(points: np.ndarray, spacing: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    if total < spacing:
        return points[:1]
    targets = np.arange(0.0, total + 1e-12, spacing)
    out = np.empty((len(targets), 3))
    for c in range(3):
        out[:, c] = np.interp(targets, arc, points[:, c])
    return out


def _two_sided_trace(field, mesh, face, point, family, cfg):
    fwd = trace_streamline(field, mesh, face, point, family, 1, cfg)
    bwd = trace_streamline(field, mesh, face, point, family, -1, cfg)
    pts = np.concatenate([bwd.points[::-1], fwd.points[1:]])
    pivot = len(bwd.points) - 1  # index of the center point
    return pts, pivot


def trace_quad_layout(
    field: DirectionField,
    mesh: TriMesh,
    spacing: float,
    max_edge_factor: float = 2.0,
) -> QuadMesh:
    """Streamline-grid layout of a singularity-free field on a patch.

    A spine streamline of family v runs through the surface point nearest
    the centroid; family-u streamlines start from spacing-``h`` seeds along
    it and are sampled at the same spacing. Sample k of streamline i and its
    neighbors form quad cells; short streamlines leave holes, as do cells
    whose streamlines diverged past ``max_edge_factor`` times the spacing.
    """
    if spacing <= 0:
        raise QuadError("spacing must be positive")
    rep = singularity_indices(field, mesh)
    if rep.count:
        verts = [v for v, _ in rep.entries]
        raise QuadError(f"field has singular vertices {verts}; layout needs none")

    locator = SurfaceLocator(mesh)
    centroid = mesh.positions.mean(axis=0)
    start, face, _ = locator.snap(centroid)
    diameter = mesh.bbox_diagonal()
    cfg = TraceConfig(max_length=2.0 * diameter)

    spine_pts, _ = _two_sided_trace(field, mesh, face, start, "v", cfg)
    if len(spine_pts) < 2:
        raise QuadError("spine streamline exited immediately")
    seeds = _resample_by_arclength(spine_pts, spacing)
    if len(seeds) < 2:
        raise QuadError("spine too short for the requested spacing")

    rows = []  # per seed: dict k -> 3D point (k signed along family u)
    prev_dir = None
    for seed in seeds:
        q, f, _ = locator.snap(seed)
        u_dir = field.u[f] / np.linalg.norm(field.u[f])
        sign = 1
        if prev_dir is not None and np.dot(u_dir, prev_dir) < 0:
            u_dir = -u_dir
            sign = -1
        prev_dir = u_dir
        fwd = trace_streamline(field, mesh, f, q, "u", sign, cfg)
        bwd = trace_streamline(field, mesh, f, q, "u", -sign, cfg)
        samples = {0: q}
        for arm, direction in ((fwd, 1), (bwd, -1)):
            res = _resample_by_arclength(arm.points, spacing)
            for k in range(1, len(res)):
                samples[direction * k] = res[k]
        rows.append(samples)

    ks = sorted({k for row in rows for k in row})
    k_index = {k: idx for idx, k in enumerate(ks)}
    grid = -np.ones((len(rows), len(ks)), dtype=np.int64)
    positions = []
    for i, row in enumerate(rows):
        for k, pt in row.items():
            grid[i, k_index[k]] = len(positions)
            positions.append(pt)

    pos_arr = np.array(positions)
    limit = max_edge_factor * spacing
    quads = []
    for i in range(len(rows) - 1):
        for j in range(len(ks) - 1):
            ids = (grid[i, j], grid[i, j + 1], grid[i + 1, j + 1], grid[i + 1, j])
            if not all(x >= 0 for x in ids):
                continue
            corners = pos_arr[list(ids)]
            edge_len = np.linalg.norm(np.roll(corners, -1, axis=0) - corners, axis=1)
            if edge_len.max() > limit:
                continue
            quads.append(ids)
    if not quads:
        raise QuadError("tracing produced no complete quad cells")
    return QuadMesh(
        positions=np.array(positions),
        quads=np.array(quads, dtype=np.int64),
        grid=grid,
    )
