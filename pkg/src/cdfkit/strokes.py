"""Strokes on the mesh: streamline tracing, segment-to-face assignment, and
per-vertex projection features."""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree

from .field import DirectionField, FieldError, transport_matrix
from .mesh import TriMesh, face_normals


class StrokeError(ValueError):
    pass


@dataclass
class Stroke:
    """Polyline on the surface: points (k, 3) and for each point the face
    carrying the following segment (the last entry repeats its predecessor)."""

    points: np.ndarray
    faces: np.ndarray

    def length(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


@dataclass
class StrokeAssignment:
    """Per-stroke face index sets with in-plane segment vectors.

    ``segments[i]`` is a list of (face, s_vec) for stroke i, in path order.
    ``polylines[i]`` holds the snapped-and-split points backing them.
    """

    segments: list = dc_field(default_factory=list)
    polylines: list = dc_field(default_factory=list)

    def face_sets(self) -> list:
        return [sorted({f for f, _ in segs}) for segs in self.segments]

    def total_segments(self) -> int:
        return sum(len(s) for s in self.segments)

    def flat_segments(self):
        """(faces, vectors, weights) over all segments; weight of a segment
        of stroke i is 1 / (#strokes * #segments of stroke i)."""
        faces, vecs, weights = [], [], []
        ns = len(self.segments)
        for segs in self.segments:
            if not segs:
                continue
            w = 1.0 / (ns * len(segs))
            for f, s in segs:
                faces.append(f)
                vecs.append(s)
                weights.append(w)
        return (
            np.array(faces, dtype=np.int64),
            np.array(vecs, dtype=np.float64).reshape(-1, 3),
            np.array(weights, dtype=np.float64),
        )


@dataclass
class StrokeFeatures:
    """Closest stroke sample and projection vector per vertex."""

    closest: np.ndarray  # (n, 3)
    projection: np.ndarray  # (n, 3) l_i = p*_i - p_i
    empty: bool = False


def strokes_to_json(strokes: list) -> str:
    out = []
    for s in strokes:
        entry = {"points": np.asarray(s.points, dtype=float).tolist()}
        if getattr(s, "faces", None) is not None:
            entry["faces"] = [int(f) for f in s.faces]
        out.append(entry)
    return json.dumps({"strokes": out}, sort_keys=True)


def strokes_from_json(text: str) -> list:
    data = json.loads(text)
    out = []
    for entry in data["strokes"]:
        pts = np.array(entry["points"], dtype=np.float64).reshape(-1, 3)
        faces = np.array(entry.get("faces", [-1] * len(pts)), dtype=np.int64)
        out.append(Stroke(points=pts, faces=faces))
    return out


# ---------------------------------------------------------------------------
# geometry helpers


def _face_frame(mesh, f, normals):
    """2D orthonormal basis of face f and its origin (first vertex)."""
    p = mesh.positions[mesh.triangles[f]]
    e1 = p[1] - p[0]
    e1 = e1 - np.dot(e1, normals[f]) * normals[f]
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normals[f], e1)
    return p[0], e1, e2


def _to2d(pt, origin, e1, e2):
    d = pt - origin
    return np.array([np.dot(d, e1), np.dot(d, e2)])


def barycentric(mesh: TriMesh, f: int, point: np.ndarray) -> np.ndarray:
    a, b, c = mesh.positions[mesh.triangles[f]]
    v0, v1, v2 = b - a, c - a, np.asarray(point) - a
    d00, d01, d11 = np.dot(v0, v0), np.dot(v0, v1), np.dot(v1, v1)
    d20, d21 = np.dot(v2, v0), np.dot(v2, v1)
    den = d00 * d11 - d01 * d01
    w1 = (d11 * d20 - d01 * d21) / den
    w2 = (d00 * d21 - d01 * d20) / den
    return np.array([1.0 - w1 - w2, w1, w2])


def closest_point_on_triangle(p, a, b, c):
    """Standard closest-point-on-triangle (Ericson)."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = np.dot(ab, ap), np.dot(ac, ap)
    if d1 <= 0 and d2 <= 0:
        return a
    bp = p - b
    d3, d4 = np.dot(ab, bp), np.dot(ac, bp)
    if d3 >= 0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        t = d1 / (d1 - d3)
        return a + t * ab
    cp = p - c
    d5, d6 = np.dot(ab, cp), np.dot(ac, cp)
    if d6 >= 0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        t = d2 / (d2 - d6)
        return a + t * ac
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + t * (c - b)
    den = 1.0 / (va + vb + vc)
    v = vb * den
    w = vc * den
    return a + ab * v + ac * w


class SurfaceLocator:
    """Snaps 3D points to the closest surface point using a face-centroid
    KD-tree to shortlist candidate faces."""

    def __init__(self, mesh: TriMesh, n_candidates: int = 24):
        self.mesh = mesh
        self.centroids = mesh.positions[mesh.triangles].mean(axis=1)
        self.tree = cKDTree(self.centroids)
        self.k = min(n_candidates, mesh.m)

    def snap(self, point: np.ndarray) -> tuple[np.ndarray, int, float]:
        """(surface point, face index, distance)."""
        point = np.asarray(point, dtype=np.float64)
        _, idx = self.tree.query(point, k=self.k)
        idx = np.atleast_1d(idx)
        best = None
        for f in idx:
            tri = self.mesh.positions[self.mesh.triangles[f]]
            q = closest_point_on_triangle(point, tri[0], tri[1], tri[2])
            d = float(np.linalg.norm(q - point))
            if best is None or d < best[2]:
                best = (q, int(f), d)
        return best


# ---------------------------------------------------------------------------
# streamline tracing


@dataclass
class TraceConfig:
    max_length: float = 10.0
    max_segments: int = 2000
    loop_tol_deg: float = 1.0


def _edge_neighbors(mesh: TriMesh) -> dict:
    """(sorted vertex pair) -> list of faces."""
    out: dict = {}
    for f in range(mesh.m):
        a, b, c = (int(x) for x in mesh.triangles[f])
        for e in ((a, b), (b, c), (c, a)):
            out.setdefault((min(e), max(e)), []).append(f)
    return out


def trace_streamline(
    field: DirectionField,
    mesh: TriMesh,
    start_face: int,
    start_point: np.ndarray,
    family: str = "u",
    sign: int = 1,
    config: TraceConfig | None = None,
) -> Stroke:
    """Piecewise-straight integral curve of one family of the field.

    Within each face the path is straight along the (constant) face
    direction; at an edge crossing the next direction is the candidate in
    {+-u, +-v} of the neighbor face best aligned with the hinge-transported
    incoming direction. Stops at the boundary, at ``max_length`` arc length,
    at ``max_segments``, or when re-entering a face with a direction within
    ``loop_tol_deg`` of an earlier visit.
    """
    if config is None:
        config = TraceConfig()
    if family not in ("u", "v"):
        raise StrokeError("family must be 'u' or 'v'")
    normals = face_normals(mesh)
    neighbors = _edge_neighbors(mesh)
    pos = mesh.positions

    bary = barycentric(mesh, start_face, start_point)
    if bary.min() < -1e-6 or bary.max() > 1 + 1e-6:
        raise StrokeError("start point outside start face")

    vec0 = (field.u if family == "u" else field.v)[start_face] * sign
    if np.linalg.norm(vec0) < 1e-12:
        raise FieldError("zero field vector at start face")

    def in_plane_unit(vec, f):
        t = vec - np.dot(vec, normals[f]) * normals[f]
        nrm = np.linalg.norm(t)
        if nrm < 1e-12:
            raise FieldError(f"zero tangent direction on face {f}")
        return t / nrm

    f = start_face
    point = np.asarray(start_point, dtype=np.float64).copy()
    direction = in_plane_unit(vec0, f)
    points = [point.copy()]
    faces = [f]
    visited: dict = {f: [direction.copy()]}
    total = 0.0
    entry_edge = None

    def exits(f, tri, point, direction, entry_edge):
        origin, e1, e2 = _face_frame(mesh, f, normals)
        p2 = _to2d(point, origin, e1, e2)
        d2 = np.array([np.dot(direction, e1), np.dot(direction, e2)])
        best = None
        for i in range(3):
            a_i, b_i = tri[i], tri[(i + 1) % 3]
            key = (min(a_i, b_i), max(a_i, b_i))
            if key == entry_edge:
                continue
            a2 = _to2d(pos[a_i], origin, e1, e2)
            b2 = _to2d(pos[b_i], origin, e1, e2)
            eb = b2 - a2
            denom = d2[0] * (-eb[1]) - d2[1] * (-eb[0])
            if abs(denom) < 1e-15:
                continue
            rhs = a2 - p2
            t = (rhs[0] * (-eb[1]) - rhs[1] * (-eb[0])) / denom
            s = (d2[0] * rhs[1] - d2[1] * rhs[0]) / denom
            if t > 1e-10 and -1e-9 <= s <= 1 + 1e-9:
                if best is None or t < best[0]:
                    best = (t, key, np.clip(s, 0.0, 1.0), a_i, b_i)
        return best

    for _ in range(config.max_segments):
        tri = [int(x) for x in mesh.triangles[f]]
        # intersect the ray with the three edges
        best = exits(f, tri, point, direction, entry_edge)
        if best is None:
            # degenerate: the ray runs along an edge or leaves exactly
            # through a vertex; nudge towards the centroid and retry
            centroid = pos[tri].mean(axis=0)
            nudged = point + 1e-6 * (centroid - point)
            best = exits(f, tri, nudged, direction, entry_edge)
            if best is None:
                best = exits(f, tri, nudged, direction, None)
        if best is None:
            break
        t, key, s, a_i, b_i = best
        if total + t >= config.max_length:
            # truncate inside the face at the length budget
            end = point + (config.max_length - total) * direction
            points.append(end)
            faces.append(f)
            total = config.max_length
            break
        crossing = pos[a_i] + s * (pos[b_i] - pos[a_i])
        total += t
        point = crossing
        points.append(point.copy())
        incident = neighbors[key]
        if len(incident) < 2:
            faces.append(f)
            break  # boundary
        g = incident[0] if incident[1] == f else incident[1]
        T = transport_matrix(normals[f], normals[g], pos[b_i] - pos[a_i])
        transported = T @ direction
        cands = []
        for vec in (field.u[g], -field.u[g], field.v[g], -field.v[g]):
            nrm = np.linalg.norm(vec)
            if nrm < 1e-12:
                raise FieldError(f"zero field vector on face {g}")
            cands.append(in_plane_unit(vec, g))
        dots = [np.dot(transported, c) for c in cands]
        direction = cands[int(np.argmax(dots))]
        entry_edge = key
        f = g
        faces.append(f)
        prior = visited.setdefault(f, [])
        looped = any(
            np.dot(direction, d_old) > np.cos(np.radians(config.loop_tol_deg))
            for d_old in prior
        )
        if looped:
            break
        prior.append(direction.copy())

    pts = np.array(points)
    fcs = np.array(faces[: len(points)], dtype=np.int64)
    if len(fcs) < len(pts):
        fcs = np.append(fcs, fcs[-1])
    return Stroke(points=pts, faces=fcs)


# ---------------------------------------------------------------------------
# segment assignment


def assign_segments(mesh: TriMesh, polylines: list, snap_tol_factor: float = 1e-4) -> StrokeAssignment:
    """Snap polylines to the surface and split them at face boundaries.

    Split points are inserted on shared edges so every resulting segment has
    both endpoints on one face (its vector therefore lies in that face's
    plane). A polyline whose points are all farther than
    ``snap_tol_factor * bbox_diagonal`` from the surface is rejected.
    """
    locator = SurfaceLocator(mesh)
    tol = snap_tol_factor * mesh.bbox_diagonal()
    neighbors = _edge_neighbors(mesh)
    pos = mesh.positions
    assignment = StrokeAssignment()

    for pl in polylines:
        pts = np.asarray(pl, dtype=np.float64).reshape(-1, 3)
        snapped = []
        dists = []
        for p in pts:
            q, f, d = locator.snap(p)
            snapped.append((q, f))
            dists.append(d)
        if len(snapped) == 0 or min(dists) > tol:
            raise StrokeError("polyline entirely off-surface")

        split_pts: list = []
        split_faces: list = []

        def emit(q, f):
            """Append a split point; ``f`` is the face entered at this point,
            i.e. the face carrying the segment that starts here."""
            split_pts.append(np.asarray(q, dtype=np.float64))
            split_faces.append(int(f))

        for (qa, fa), (qb, fb) in zip(snapped[:-1], snapped[1:]):
            if not split_pts:
                emit(qa, fa)

            def lerp(t):
                return qa + t * (qb - qa)

            def bridge(t0, f0, t1, f1):
                """Emit the face-boundary crossings of the chord between
                parameters t0 and t1 (snapped faces f0 != f1), in order."""
                if f0 == f1:
                    return
                shared = set(int(x) for x in mesh.triangles[f0]) & set(
                    int(x) for x in mesh.triangles[f1]
                )
                if len(shared) == 2:
                    a, b = sorted(shared)
                    x = _closest_point_segment_segment(
                        lerp(t0), lerp(t1), pos[a], pos[b]
                    )
                    emit(x, f1)
                    return
                if t1 - t0 < 1e-9:
                    qm, _, _ = locator.snap(lerp(0.5 * (t0 + t1)))
                    emit(qm, f1)
                    return
                tm = 0.5 * (t0 + t1)
                qm, fm, _ = locator.snap(lerp(tm))
                if fm == f0:
                    bridge(tm, f0, t1, f1)
                elif fm == f1:
                    bridge(t0, f0, tm, f1)
                else:
                    bridge(t0, f0, tm, fm)
                    bridge(tm, fm, t1, f1)

            bridge(0.0, fa, 1.0, fb)
            emit(qb, fb)

        segs = []
        for i in range(len(split_pts) - 1):
            d = split_pts[i + 1] - split_pts[i]
            if np.linalg.norm(d) < 1e-12:
                continue
            segs.append((split_faces[i], d))
        if segs:
            assignment.segments.append(segs)
            assignment.polylines.append(
                Stroke(points=np.array(split_pts), faces=np.array(split_faces, dtype=np.int64))
            )
    return assignment


def _closest_point_segment_segment(p1, p2, q1, q2):
    """Point on segment [q1, q2] closest to segment [p1, p2]."""
    d1 = p2 - p1
    d2 = q2 - q1
    r = p1 - q1
    a, e, f = np.dot(d1, d1), np.dot(d2, d2), np.dot(d2, r)
    if a < 1e-300 and e < 1e-300:
        return q1
    if a < 1e-300:
        t = np.clip(f / e, 0, 1)
        return q1 + t * d2
    c = np.dot(d1, r)
    if e < 1e-300:
        return q1
    b = np.dot(d1, d2)
    den = a * e - b * b
    s = np.clip((b * f - c * e) / den, 0, 1) if den > 1e-300 else 0.0
    t = (b * s + f) / e
    if t < 0:
        t = 0.0
    elif t > 1:
        t = 1.0
    return q1 + t * d2


# ---------------------------------------------------------------------------
# projection features


def stroke_projection_features(
    mesh: TriMesh, strokes: list, spacing_factor: float = 0.5
) -> StrokeFeatures:
    """Closest point among resampled stroke samples, per vertex.

    Strokes are resampled at ``spacing_factor`` times the mean edge length;
    the projection vector is l_i = p*_i - p_i. An empty stroke set yields
    zero vectors with the ``empty`` flag set.
    """
    n = mesh.n
    pts = [np.asarray(getattr(s, "points", s), dtype=np.float64).reshape(-1, 3) for s in strokes]
    pts = [p for p in pts if len(p) >= 1]
    if not pts:
        return StrokeFeatures(
            closest=np.zeros((n, 3)), projection=np.zeros((n, 3)), empty=True
        )
    edges = mesh.edges()
    elens = np.linalg.norm(mesh.positions[edges[:, 0]] - mesh.positions[edges[:, 1]], axis=1)
    spacing = spacing_factor * float(elens.mean())
    samples = np.concatenate([_resample_polyline(p, spacing) for p in pts])
    tree = cKDTree(samples)
    _, idx = tree.query(mesh.positions)
    closest = samples[idx]
    return StrokeFeatures(closest=closest, projection=closest - mesh.positions)


def _resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    if len(points) == 1:
        return points
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    if total < 1e-12:
        return points[:1]
    count = max(int(np.ceil(total / spacing)) + 1, 2)
    targets = np.linspace(0.0, total, count)
    out = np.empty((count, 3))
    for c in range(3):
        out[:, c] = np.interp(targets, arc, points[:, c])
    return out


def build_vertex_features(
    mesh: TriMesh, vnormals: np.ndarray, features: StrokeFeatures
) -> np.ndarray:
    """Per-vertex 9-vector (position, normal, stroke projection)."""
    if vnormals.shape != (mesh.n, 3) or features.projection.shape != (mesh.n, 3):
        raise StrokeError("feature size mismatch")
    return np.concatenate([mesh.positions, vnormals, features.projection], axis=1)
