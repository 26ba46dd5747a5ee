"""Triangle mesh container, OBJ I/O, normals, adjacency and PCA normalization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Invalid mesh data (parse failure, degeneracy, non-manifoldness)."""


@dataclass
class TriMesh:
    """Triangle mesh with float64 positions (n, 3) and int triangles (m, 3).

    Validation enforces: distinct valid indices per triangle, nonzero face
    area relative to the bounding box, and edge-manifoldness (every edge has
    at most two incident faces).
    """

    positions: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise MeshError("positions must be (n, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be (m, 3)")
        self._validate()

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def m(self) -> int:
        return self.triangles.shape[0]

    def _validate(self):
        t = self.triangles
        if t.size and (t.min() < 0 or t.max() >= self.n):
            raise MeshError("triangle index out of range")
        same = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        if same.any():
            raise MeshError(f"triangle with repeated vertex: face {int(np.argmax(same))}")
        p = self.positions
        if not np.isfinite(p).all():
            raise MeshError("non-finite vertex position")
        diag2 = float(np.sum((p.max(axis=0) - p.min(axis=0)) ** 2)) if self.n else 0.0
        areas = 0.5 * np.linalg.norm(
            np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]]), axis=1
        )
        bad = areas <= 1e-12 * max(diag2, 1e-300)
        if bad.any():
            raise MeshError(f"degenerate (zero-area) face {int(np.argmax(bad))}")
        counts = _edge_face_counts(t)
        if counts and max(counts.values()) > 2:
            e = next(k for k, v in counts.items() if v > 2)
            raise MeshError(f"non-manifold edge {e}")

    def bbox_diagonal(self) -> float:
        p = self.positions
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a sorted (E, 2) index array."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)


@dataclass
class FaceAdjacency:
    """Interior-edge face pairs with the shared edge endpoints.

    ``pairs[i] = (j, k)`` with j < k, and ``shared_edges[i] = (a, b)`` the
    vertex indices of the common edge.
    """

    pairs: np.ndarray
    shared_edges: np.ndarray

    @property
    def count(self) -> int:
        return self.pairs.shape[0]


@dataclass
class NormalizeTransform:
    """Rigid rotation + translation + uniform scale, applied as
    ``p_out = scale * rotation @ (p + translation)``."""

    rotation: np.ndarray
    translation: np.ndarray
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points, dtype=np.float64) + self.translation) @ self.rotation.T

    def to_json(self) -> str:
        return json.dumps(
            {
                "rotation": [float(x) for x in self.rotation.reshape(-1)],
                "translation": [float(x) for x in self.translation],
                "scale": float(self.scale),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "NormalizeTransform":
        d = json.loads(text)
        return cls(
            rotation=np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
            translation=np.array(d["translation"], dtype=np.float64),
            scale=float(d["scale"]),
        )


def _edge_face_counts(t: np.ndarray) -> dict:
    counts: dict = {}
    for f in range(t.shape[0]):
        a, b, c = t[f]
        for e in ((a, b), (b, c), (c, a)):
            key = (min(e), max(e))
            counts[key] = counts.get(key, 0) + 1
    return counts


def load_mesh(text: str) -> TriMesh:
    """Parse OBJ text with triangular faces. Quads are rejected here."""
    positions = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                positions.append([float(x) for x in parts[1:4]])
            except ValueError as exc:
                raise MeshError(f"line {lineno}: bad vertex coordinate") from exc
        elif parts[0] == "f":
            idx = [p.split("/")[0] for p in parts[1:]]
            if len(idx) != 3:
                raise MeshError(f"line {lineno}: non-triangular face ({len(idx)} indices)")
            try:
                faces.append([int(i) - 1 for i in idx])
            except ValueError as exc:
                raise MeshError(f"line {lineno}: bad face index") from exc
    if not positions:
        raise MeshError("no vertices in OBJ")
    return TriMesh(np.array(positions), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_mesh(mesh: TriMesh) -> str:
    lines = [f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}" for p in mesh.positions]
    lines += [f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}" for t in mesh.triangles]
    return "\n".join(lines) + "\n"


def face_normals(mesh: TriMesh) -> np.ndarray:
    """Unit face normals, right-hand rule from vertex order."""
    p, t = mesh.positions, mesh.triangles
    n = np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]])
    norms = np.linalg.norm(n, axis=1, keepdims=True)
    if (norms <= 0).any():
        raise MeshError("degenerate face in normal computation")
    return n / norms


def face_areas(mesh: TriMesh) -> np.ndarray:
    p, t = mesh.positions, mesh.triangles
    return 0.5 * np.linalg.norm(
        np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]]), axis=1
    )


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted average of incident face normals, unit length."""
    fn = face_normals(mesh)
    areas = face_areas(mesh)
    acc = np.zeros((mesh.n, 3))
    weighted = fn * areas[:, None]
    for c in range(3):
        np.add.at(acc, mesh.triangles[:, c], weighted)
    norms = np.linalg.norm(acc, axis=1)
    if (norms <= 0).any():
        raise MeshError(f"isolated or zero-normal vertex {int(np.argmax(norms <= 0))}")
    return acc / norms[:, None]


def adjacency(mesh: TriMesh) -> FaceAdjacency:
    """All interior-edge face pairs; errors on non-manifold edges."""
    edge_faces: dict = {}
    t = mesh.triangles
    for f in range(mesh.m):
        a, b, c = t[f]
        for e in ((a, b), (b, c), (c, a)):
            key = (min(e), max(e))
            edge_faces.setdefault(key, []).append(f)
    pairs = []
    shared = []
    for key in sorted(edge_faces):
        fs = edge_faces[key]
        if len(fs) > 2:
            raise MeshError(f"non-manifold edge {key}")
        if len(fs) == 2:
            j, k = sorted(fs)
            pairs.append((j, k))
            shared.append(key)
    pairs_arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    shared_arr = np.array(shared, dtype=np.int64).reshape(-1, 2)
    order = np.lexsort((pairs_arr[:, 1], pairs_arr[:, 0])) if len(pairs) else np.array([], dtype=np.int64)
    return FaceAdjacency(pairs=pairs_arr[order], shared_edges=shared_arr[order])


def boundary_edges(mesh: TriMesh) -> set:
    counts = _edge_face_counts(mesh.triangles)
    return {e for e, c in counts.items() if c == 1}


def pca_normalize(mesh: TriMesh) -> tuple[TriMesh, NormalizeTransform]:
    """Center at the origin, align principal axes (descending eigenvalue) to
    x, y, z, and scale so the farthest vertex sits exactly on the unit sphere.

    Axis signs are fixed so each principal axis has nonnegative dot product
    with the direction from the centroid to the farthest vertex; if that
    leaves an improper rotation, the axis with the smallest such dot product
    is flipped to restore det +1.
    """
    p = mesh.positions
    if mesh.n < 4:
        raise MeshError("need at least 4 vertices for PCA normalization")
    centroid = p.mean(axis=0)
    q = p - centroid
    cov = q.T @ q / mesh.n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    if evals[1] <= 1e-14 * max(evals[0], 1e-300):
        raise MeshError("rank-deficient covariance (collinear vertex set)")
    far = q[np.argmax(np.einsum("ij,ij->i", q, q))]
    dots = evecs.T @ far
    canon = np.array([1.0, 1.0, 1.0])  # tie toward +x/+y/+z
    signs = np.where(np.abs(dots) < 1e-12, canon, np.sign(dots))
    evecs = evecs * signs[None, :]
    if np.linalg.det(evecs) < 0:
        flip = int(np.argmin(np.abs(dots)))
        evecs[:, flip] *= -1.0
    rot = evecs.T  # rows are principal axes
    q = q @ rot.T
    radius = float(np.max(np.linalg.norm(q, axis=1)))
    scale = 1.0 / radius
    out = TriMesh(q * scale, mesh.triangles.copy())
    return out, NormalizeTransform(rotation=rot, translation=-centroid, scale=scale)
