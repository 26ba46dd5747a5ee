"""Direction-pair fields and the tangent-plane algebra used by the energies:
90-degree rotation, hinge parallel transport, conjugacy, singularity indices."""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .curvature import CurvatureFrame, is_umbilic
from .mesh import FaceAdjacency, MeshError, TriMesh, face_normals


class FieldError(ValueError):
    pass


@dataclass
class DirectionField:
    """Per-face vector pair (u, v), both (m, 3)."""

    u: np.ndarray
    v: np.ndarray
    tangent_valid: bool = False

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2 or self.u.shape[1] != 3:
            raise FieldError("u and v must both be (m, 3)")
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise FieldError("non-finite field entries")

    @property
    def m(self) -> int:
        return self.u.shape[0]

    def copy(self) -> "DirectionField":
        return DirectionField(self.u.copy(), self.v.copy(), self.tangent_valid)

    def to_json(self) -> str:
        return json.dumps(
            {"m": self.m, "u": self.u.tolist(), "v": self.v.tolist()}, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "DirectionField":
        d = json.loads(text)
        u = np.array(d["u"], dtype=np.float64)
        v = np.array(d["v"], dtype=np.float64)
        if u.shape[0] != d["m"] or v.shape[0] != d["m"]:
            raise FieldError("field length does not match declared face count")
        return cls(u, v)


@dataclass
class SingularityReport:
    """Nonzero quarter-indices at interior vertices.

    ``entries`` is a list of (vertex index, index in quarters), e.g. +4 means
    index +1. ``count`` is the number of singular vertices.
    """

    entries: list = dc_field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.entries)


def rotate90(vec: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """In-plane 90-degree rotation: normal x vec. Works on (3,) or (m, 3)."""
    return np.cross(normal, vec)


def transport_matrix(n_from: np.ndarray, n_to: np.ndarray, edge: np.ndarray) -> np.ndarray:
    """Hinge map rotating about the shared edge by the dihedral angle.

    Maps the fromFace tangent plane onto the toFace tangent plane while
    preserving the component along the edge.
    """
    e = edge / np.linalg.norm(edge)
    a1 = np.cross(n_from, e)
    a2 = np.cross(n_to, e)
    return np.outer(e, e) + np.outer(a2, a1) + np.outer(n_to, n_from)


def parallel_transport(vec: np.ndarray, from_face: int, to_face: int, mesh: TriMesh) -> np.ndarray:
    """Transport ``vec`` from ``from_face`` across the shared edge."""
    shared = set(mesh.triangles[from_face]) & set(mesh.triangles[to_face])
    if len(shared) != 2:
        raise FieldError(f"faces {from_face} and {to_face} are not edge-adjacent")
    a, b = sorted(shared)
    edge = mesh.positions[b] - mesh.positions[a]
    normals = face_normals(mesh)
    return transport_matrix(normals[from_face], normals[to_face], edge) @ np.asarray(vec, dtype=np.float64)


def transport_matrices(mesh: TriMesh, adj: FaceAdjacency, normals: np.ndarray | None = None) -> np.ndarray:
    """Hinge maps for every adjacency pair: (P, 3, 3), mapping j -> k."""
    if normals is None:
        normals = face_normals(mesh)
    P = adj.count
    T = np.empty((P, 3, 3))
    pos = mesh.positions
    for i in range(P):
        j, k = adj.pairs[i]
        a, b = adj.shared_edges[i]
        T[i] = transport_matrix(normals[j], normals[k], pos[b] - pos[a])
    return T


def conjugacy_residual(field: DirectionField, frame: CurvatureFrame) -> np.ndarray:
    """Per-face r = k1 (u.d1)(v.d1) + k2 (u.d2)(v.d2) on unit-normalized u, v."""
    nu = np.linalg.norm(field.u, axis=1)
    nv = np.linalg.norm(field.v, axis=1)
    if (nu <= 0).any() or (nv <= 0).any():
        raise FieldError("zero-length field vector")
    u = field.u / nu[:, None]
    v = field.v / nv[:, None]
    c1 = np.einsum("ij,ij->i", u, frame.d1)
    c2 = np.einsum("ij,ij->i", u, frame.d2)
    e1 = np.einsum("ij,ij->i", v, frame.d1)
    e2 = np.einsum("ij,ij->i", v, frame.d2)
    return frame.k1 * c1 * e1 + frame.k2 * c2 * e2


def conjugate_direction(
    u: np.ndarray,
    d1: np.ndarray,
    d2: np.ndarray,
    k1: float,
    k2: float,
    normal: np.ndarray | None = None,
) -> tuple[np.ndarray, bool]:
    """Conjugate partner of the unit tangent direction u.

    Writing u = cos(phi) d1 + sin(phi) d2, the conjugate is proportional to
    (-k2 sin(phi)) d1 + (k1 cos(phi)) d2. Falls back to the in-plane
    90-degree rotation on umbilic faces or when that expression degenerates.
    Returns (v, degenerate) where degenerate flags |u x v| < 1e-3
    (near-asymptotic input).
    """
    u = np.asarray(u, dtype=np.float64)
    if normal is None:
        normal = np.cross(d1, d2)
        normal /= np.linalg.norm(normal)
    cphi = float(np.dot(u, d1))
    sphi = float(np.dot(u, d2))
    raw = (-k2 * sphi) * d1 + (k1 * cphi) * d2
    if is_umbilic(k1, k2) or np.linalg.norm(raw) < 1e-12:
        v = rotate90(u, normal)
        v = v / np.linalg.norm(v)
        return v, False
    v = raw / np.linalg.norm(raw)
    degenerate = bool(np.linalg.norm(np.cross(u, v)) < 1e-3)
    return v, degenerate


def project_tangent(field: DirectionField, mesh: TriMesh) -> DirectionField:
    """Remove normal components and renormalize to unit length."""
    normals = face_normals(mesh)
    out = []
    for vecs in (field.u, field.v):
        t = vecs - np.einsum("ij,ij->i", vecs, normals)[:, None] * normals
        norms = np.linalg.norm(t, axis=1)
        if (norms < 1e-12).any():
            raise FieldError(
                f"vector parallel to face normal at face {int(np.argmax(norms < 1e-12))}"
            )
        out.append(t / norms[:, None])
    return DirectionField(out[0], out[1], tangent_valid=True)


def _signed_angle(a: np.ndarray, b: np.ndarray, normal: np.ndarray) -> float:
    """Signed angle from a to b about normal, in (-pi, pi]."""
    return float(np.arctan2(np.dot(normal, np.cross(a, b)), np.dot(a, b)))


def vertex_rings(mesh: TriMesh) -> dict:
    """Ordered face one-rings for interior vertices.

    Returns {vertex: [f0, f1, ...]} where consecutive faces (cyclically)
    share an edge through the vertex. Boundary vertices are omitted.
    """
    t = mesh.triangles
    incident: dict = {}
    for f in range(mesh.m):
        for vtx in t[f]:
            incident.setdefault(int(vtx), []).append(f)
    # map (vertex, other) directed edge -> face containing it with this orientation
    edge_face: dict = {}
    for f in range(mesh.m):
        a, b, c = (int(x) for x in t[f])
        for u_, v_ in ((a, b), (b, c), (c, a)):
            edge_face[(u_, v_)] = f
    rings = {}
    for vtx, faces in incident.items():
        k = len(faces)
        if k < 3:
            continue
        # counterclockwise walk (seen from the outward normal): in face f the
        # edge entering vtx is (prev, vtx); the neighbor across it contains
        # the directed edge (vtx, prev)
        start = faces[0]
        ring = [start]
        f = start
        ok = True
        for _ in range(k - 1):
            tri = [int(x) for x in t[f]]
            i = tri.index(vtx)
            prev = tri[(i + 2) % 3]
            g = edge_face.get((vtx, prev))
            if g is None or g in ring:
                ok = False
                break
            ring.append(g)
            f = g
        if not ok or len(ring) != k:
            continue
        # closure check: last face must hand the walk back to the start face
        tri = [int(x) for x in t[f]]
        i = tri.index(vtx)
        prev = tri[(i + 2) % 3]
        if edge_face.get((vtx, prev)) != start:
            continue
        rings[vtx] = ring
    return rings


def angle_defect(mesh: TriMesh, vtx: int, ring: list) -> float:
    """2*pi minus the sum of interior angles at the vertex."""
    total = 0.0
    p = mesh.positions
    for f in ring:
        tri = [int(x) for x in mesh.triangles[f]]
        i = tri.index(vtx)
        a = p[tri[(i + 1) % 3]] - p[vtx]
        b = p[tri[(i + 2) % 3]] - p[vtx]
        total += float(
            np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b))
        )
    return 2.0 * np.pi - total


def singularity_indices(field: DirectionField, mesh: TriMesh) -> SingularityReport:
    """Quarter-index winding of the matched frame field at interior vertices.

    Walks each ordered one-ring carrying a representative direction: across
    every ring edge the representative is hinge-transported and re-matched to
    the closest of {+-u, +-v} on the next face; the summed signed residual
    rotations, minus the vertex angle defect, divided by 2*pi and rounded to
    the nearest quarter, is the index.
    """
    norms_u = np.linalg.norm(field.u, axis=1)
    norms_v = np.linalg.norm(field.v, axis=1)
    if (norms_u <= 0).any() or (norms_v <= 0).any():
        raise FieldError("zero-length field vector")
    u = field.u / norms_u[:, None]
    v = field.v / norms_v[:, None]
    normals = face_normals(mesh)
    pos = mesh.positions
    rings = vertex_rings(mesh)
    entries = []
    for vtx in sorted(rings):
        ring = rings[vtx]
        k = len(ring)
        total = 0.0
        w = u[ring[0]]
        for step in range(k):
            f = ring[step]
            g = ring[(step + 1) % k]
            shared = set(mesh.triangles[f]) & set(mesh.triangles[g])
            a, b = sorted(int(x) for x in shared)
            T = transport_matrix(normals[f], normals[g], pos[b] - pos[a])
            wt = T @ w
            cands = (u[g], -u[g], v[g], -v[g])
            dots = [float(np.dot(wt, c)) for c in cands]
            best = cands[int(np.argmax(dots))]
            total += _signed_angle(wt / np.linalg.norm(wt), best, normals[g])
            w = best
        defect = angle_defect(mesh, vtx, ring)
        quarters = int(round(4.0 * (total - defect) / (2.0 * np.pi)))
        if quarters != 0:
            entries.append((vtx, quarters))
    return SingularityReport(entries=entries)
