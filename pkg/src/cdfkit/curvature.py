"""Per-face principal curvature frames from a second-fundamental-form fit."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh, face_normals


@dataclass
class CurvatureFrame:
    """Per-face orthonormal principal directions and curvatures.

    d1, d2: (m, 3) unit vectors in the face plane, d1 for the larger
    |curvature|; k1, k2: (m,) with |k1| >= |k2|. Sign convention: a sphere
    with outward normals has positive curvature.
    """

    d1: np.ndarray
    d2: np.ndarray
    k1: np.ndarray
    k2: np.ndarray

    @property
    def m(self) -> int:
        return self.k1.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "d1": self.d1.tolist(),
                "d2": self.d2.tolist(),
                "k1": self.k1.tolist(),
                "k2": self.k2.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "CurvatureFrame":
        d = json.loads(text)
        return cls(
            d1=np.array(d["d1"], dtype=np.float64),
            d2=np.array(d["d2"], dtype=np.float64),
            k1=np.array(d["k1"], dtype=np.float64),
            k2=np.array(d["k2"], dtype=np.float64),
        )


def curvature_normals(mesh: TriMesh) -> np.ndarray:
    """Vertex normals weighted by sin(angle)/(|e1||e2|) (Max's weights).

    Exact for vertices on a sphere, which makes the per-face shape-operator
    fit considerably more accurate than area weighting; used as the normal
    source for curvature estimation only (feature vectors keep the plain
    area-weighted normals).
    """
    fn = face_normals(mesh)
    p, t = mesh.positions, mesh.triangles
    acc = np.zeros((mesh.n, 3))
    for c in range(3):
        a = p[t[:, c]]
        e1 = p[t[:, (c + 1) % 3]] - a
        e2 = p[t[:, (c + 2) % 3]] - a
        w = np.linalg.norm(np.cross(e1, e2), axis=1) / (
            np.einsum("ij,ij->i", e1, e1) * np.einsum("ij,ij->i", e2, e2)
        )
        np.add.at(acc, t[:, c], w[:, None] * fn)
    norms = np.linalg.norm(acc, axis=1)
    if (norms <= 0).any():
        raise ValueError("zero vertex normal")
    return acc / norms[:, None]


def _face_basis(mesh: TriMesh, normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal in-plane basis (e1, e2) per face, e1 along the first edge."""
    p, t = mesh.positions, mesh.triangles
    e1 = p[t[:, 1]] - p[t[:, 0]]
    e1 = e1 - np.einsum("ij,ij->i", e1, normals)[:, None] * normals
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(normals, e1)
    return e1, e2


def estimate_curvature(mesh: TriMesh, vnormals: np.ndarray | None = None) -> CurvatureFrame:
    """Least-squares fit of a symmetric 2x2 shape operator per face.

    For each of the three edges e of a face, the finite difference of the
    vertex normals constrains S via S @ e_t = (dn)_t in the face tangent
    basis; six equations for the three unknowns of S. When ``vnormals`` is
    omitted, ``curvature_normals`` supplies them.
    """
    if vnormals is None:
        vnormals = curvature_normals(mesh)
    p, t = mesh.positions, mesh.triangles
    normals = face_normals(mesh)
    e1, e2 = _face_basis(mesh, normals)
    m = mesh.m

    d1 = np.zeros((m, 3))
    d2 = np.zeros((m, 3))
    k1 = np.zeros(m)
    k2 = np.zeros(m)

    # Edge vectors and normal differences, tangent components (m, 3 edges, 2)
    verts = p[t]  # (m, 3, 3)
    norms = vnormals[t]  # (m, 3, 3)
    ev = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 1], verts[:, 0] - verts[:, 2]], axis=1)
    dn = np.stack([norms[:, 1] - norms[:, 0], norms[:, 2] - norms[:, 1], norms[:, 0] - norms[:, 2]], axis=1)
    ev_t = np.stack([np.einsum("mej,mj->me", ev, e1), np.einsum("mej,mj->me", ev, e2)], axis=-1)
    dn_t = np.stack([np.einsum("mej,mj->me", dn, e1), np.einsum("mej,mj->me", dn, e2)], axis=-1)

    # Build the 6x3 least-squares system per face for S = [[a, b], [b, c]]
    A = np.zeros((m, 6, 3))
    rhs = np.zeros((m, 6))
    A[:, 0::2, 0] = ev_t[..., 0]
    A[:, 0::2, 1] = ev_t[..., 1]
    A[:, 1::2, 1] = ev_t[..., 0]
    A[:, 1::2, 2] = ev_t[..., 1]
    rhs[:, 0::2] = dn_t[..., 0]
    rhs[:, 1::2] = dn_t[..., 1]

    AtA = np.einsum("mij,mik->mjk", A, A)
    Atb = np.einsum("mij,mi->mj", A, rhs)
    abc = np.linalg.solve(AtA + 1e-14 * np.eye(3)[None], Atb[..., None])[..., 0]

    S = np.empty((m, 2, 2))
    S[:, 0, 0] = abc[:, 0]
    S[:, 0, 1] = S[:, 1, 0] = abc[:, 1]
    S[:, 1, 1] = abc[:, 2]
    evals, evecs = np.linalg.eigh(S)  # ascending

    # order by |curvature| descending
    swap = np.abs(evals[:, 0]) > np.abs(evals[:, 1])
    ka = np.where(swap, evals[:, 0], evals[:, 1])
    kb = np.where(swap, evals[:, 1], evals[:, 0])
    va = np.where(swap[:, None], evecs[:, :, 0], evecs[:, :, 1])
    vb = np.where(swap[:, None], evecs[:, :, 1], evecs[:, :, 0])

    k1[:] = ka
    k2[:] = kb
    d1[:] = va[:, 0:1] * e1 + va[:, 1:2] * e2
    d2[:] = vb[:, 0:1] * e1 + vb[:, 1:2] * e2

    # Deterministic frames at (near-)umbilic faces: project the global x axis
    # (fallback y) onto the face plane.
    umb = _umbilic_mask(k1, k2, 1e-6, 1e-9)
    if umb.any():
        for f in np.nonzero(umb)[0]:
            axis = np.array([1.0, 0.0, 0.0])
            proj = axis - np.dot(axis, normals[f]) * normals[f]
            if np.linalg.norm(proj) < 1e-6:
                axis = np.array([0.0, 1.0, 0.0])
                proj = axis - np.dot(axis, normals[f]) * normals[f]
            proj /= np.linalg.norm(proj)
            d1[f] = proj
            d2[f] = np.cross(normals[f], proj)
    d1 /= np.linalg.norm(d1, axis=1, keepdims=True)
    d2 /= np.linalg.norm(d2, axis=1, keepdims=True)
    return CurvatureFrame(d1=d1, d2=d2, k1=k1, k2=k2)


def _umbilic_mask(k1: np.ndarray, k2: np.ndarray, tol: float, eps_abs: float) -> np.ndarray:
    return np.abs(k1 - k2) <= tol * np.maximum.reduce([np.abs(k1), np.abs(k2), np.full_like(k1, eps_abs)])


def is_umbilic(k1: float, k2: float, tol: float = 1e-3, eps_abs: float = 1e-6) -> bool:
    """True iff |k1 - k2| <= tol * max(|k1|, |k2|, eps_abs)."""
    return bool(abs(k1 - k2) <= tol * max(abs(k1), abs(k2), eps_abs))
