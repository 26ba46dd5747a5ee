"""Direct field generation: first-order minimization of the total energy over
per-face vector pairs, guided by anchors and/or strokes."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .curvature import CurvatureFrame
from .energy import EnergyBreakdown, EnergyContext, EnergyWeights, evaluate
from .field import (
    DirectionField,
    FieldError,
    conjugate_direction,
    project_tangent,
)
from .mesh import TriMesh, adjacency, face_normals


class SolverError(RuntimeError):
    pass


@dataclass
class Anchor:
    """A face with a prescribed conjugate pair (u0, v0), both unit tangent."""

    face: int
    u0: np.ndarray
    v0: np.ndarray

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=np.float64)
        self.v0 = np.asarray(self.v0, dtype=np.float64)
        for vec in (self.u0, self.v0):
            if abs(np.linalg.norm(vec) - 1.0) > 1e-6:
                raise FieldError("anchor vectors must be unit length")
        if np.linalg.norm(np.cross(self.u0, self.v0)) < 1e-3:
            raise FieldError("anchor pair is near-parallel")


@dataclass
class SolverConfig:
    weights: EnergyWeights = dc_field(default_factory=EnergyWeights)
    max_iters: int = 2000
    step_size: float = 1e-2
    lambda_conj_initial: float = 1.0
    lambda_conj_final: float = 100.0
    ramp_fraction: float = 0.6
    window: int = 50
    tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.tolerance <= 0 or self.window < 1:
            raise ValueError("tolerance and window must be positive")


def anchors_to_json(anchors: list) -> str:
    return json.dumps(
        [
            {"face": int(a.face), "u": a.u0.tolist(), "v": a.v0.tolist()}
            for a in anchors
        ],
        sort_keys=True,
    )


def anchors_from_json(text: str) -> list:
    return [
        Anchor(face=int(d["face"]), u0=np.array(d["u"]), v0=np.array(d["v"]))
        for d in json.loads(text)
    ]


def sample_anchors(
    mesh: TriMesh, frame: CurvatureFrame, count: int, rng: np.random.Generator
) -> list:
    """Uniformly random anchors on distinct non-degenerate faces.

    u0 is a uniformly random unit tangent direction; v0 its conjugate.
    Faces where the conjugate collapses (near-asymptotic draws) are redrawn
    with a fresh direction, then rejected entirely after repeated failures.
    """
    if not 1 <= count <= 5:
        raise ValueError("anchor count must be in [1, 5]")
    normals = face_normals(mesh)
    order = rng.permutation(mesh.m)
    anchors = []
    for f in order:
        f = int(f)
        ok = None
        for _ in range(8):
            phi = rng.uniform(0.0, 2.0 * np.pi)
            u0 = np.cos(phi) * frame.d1[f] + np.sin(phi) * frame.d2[f]
            v0, degen = conjugate_direction(
                u0, frame.d1[f], frame.d2[f],
                float(frame.k1[f]), float(frame.k2[f]), normals[f],
            )
            if not degen:
                ok = (u0, v0)
                break
        if ok is not None:
            anchors.append(Anchor(face=f, u0=ok[0], v0=ok[1]))
            if len(anchors) == count:
                return anchors
    raise SolverError(f"only {len(anchors)} non-degenerate faces for {count} anchors")


def _face_graph(mesh: TriMesh):
    adj = adjacency(mesh)
    nbr: dict = {f: [] for f in range(mesh.m)}
    for j, k in adj.pairs:
        nbr[int(j)].append(int(k))
        nbr[int(k)].append(int(j))
    return adj, nbr


def init_field(
    mesh: TriMesh,
    frame: CurvatureFrame,
    anchors: list,
    rng: np.random.Generator,
) -> DirectionField:
    """Anchor pairs propagated breadth-first by parallel transport.

    After propagation u is tangent-projected and v replaced by the conjugate
    of u, so the initial field satisfies the tangency and conjugacy
    constraints everywhere. Components without an anchor start from a random
    unit tangent on their lowest-index face.
    """
    from collections import deque

    from .field import transport_matrix

    normals = face_normals(mesh)
    _, nbr = _face_graph(mesh)
    m = mesh.m
    u = np.zeros((m, 3))
    v = np.zeros((m, 3))
    seen = np.zeros(m, dtype=bool)
    queue = deque()

    for a in anchors:
        u[a.face] = a.u0
        v[a.face] = a.v0
        seen[a.face] = True
        queue.append(a.face)

    pos = mesh.positions

    def flood():
        while queue:
            f = queue.popleft()
            for g in nbr[f]:
                if seen[g]:
                    continue
                shared = sorted(set(mesh.triangles[f]) & set(mesh.triangles[g]))
                edge = pos[shared[1]] - pos[shared[0]]
                T = transport_matrix(normals[f], normals[g], edge)
                u[g] = T @ u[f]
                v[g] = T @ v[f]
                seen[g] = True
                queue.append(g)

    flood()
    while not seen.all():
        f = int(np.argmin(seen))
        phi = rng.uniform(0.0, 2.0 * np.pi)
        u[f] = np.cos(phi) * frame.d1[f] + np.sin(phi) * frame.d2[f]
        v[f] = np.cross(normals[f], u[f])
        seen[f] = True
        queue.append(f)
        flood()

    out = project_tangent(DirectionField(u, v), mesh)
    uu, vv = out.u.copy(), out.v.copy()
    anchor_faces = {a.face for a in anchors}
    for f in range(m):
        if f in anchor_faces:
            continue
        vv[f], _ = conjugate_direction(
            uu[f], frame.d1[f], frame.d2[f],
            float(frame.k1[f]), float(frame.k2[f]), normals[f],
        )
    for a in anchors:
        uu[a.face] = a.u0
        vv[a.face] = a.v0
    return DirectionField(uu, vv, tangent_valid=True)


def solve_cdf(
    mesh: TriMesh,
    frame: CurvatureFrame,
    anchors: list | None = None,
    strokes=None,
    config: SolverConfig | None = None,
    allow_unconstrained: bool = False,
):
    """Minimize the total energy; returns (DirectionField, trace).

    ``trace`` is a list of EnergyBreakdown, one per iteration (evaluated at
    the current conjugacy weight). Anchor faces are held fixed. Vectors are
    renormalized and tangent-projected every 50 iterations and on exit.
    """
    if config is None:
        config = SolverConfig()
    anchors = anchors or []
    has_strokes = strokes is not None and strokes.total_segments() > 0
    if not anchors and not has_strokes and not allow_unconstrained:
        raise SolverError(
            "no anchors or strokes; pass allow_unconstrained=True for a free solve"
        )

    rng = np.random.default_rng(config.seed)
    adj = adjacency(mesh)
    ctx = EnergyContext(
        mesh, frame=frame, adj=adj, assignment=strokes if has_strokes else None
    )
    field = init_field(mesh, frame, anchors, rng)
    u = field.u.copy()
    v = field.v.copy()
    m = mesh.m

    anchor_faces = np.array(sorted({a.face for a in anchors}), dtype=np.int64)
    au = np.stack([a.u0 for a in anchors]) if anchors else np.zeros((0, 3))
    av = np.stack([a.v0 for a in anchors]) if anchors else np.zeros((0, 3))
    order = np.argsort([a.face for a in anchors]) if anchors else []
    if anchors:
        au, av = au[order], av[order]

    def pin():
        if len(anchor_faces):
            u[anchor_faces] = au
            v[anchor_faces] = av

    w = config.weights
    ramp_iters = max(1, int(config.ramp_fraction * config.max_iters))

    mu_u = np.zeros((m, 3))
    nu_u = np.zeros((m, 3))
    mu_v = np.zeros((m, 3))
    nu_v = np.zeros((m, 3))
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    trace = []
    totals = []

    for it in range(config.max_iters):
        frac = min(1.0, it / ramp_iters)
        lam_c = config.lambda_conj_initial + frac * (
            config.lambda_conj_final - config.lambda_conj_initial
        )
        weights = EnergyWeights(
            lambda1=w.lambda1, lambda2=w.lambda2, lambda3=w.lambda3,
            lambda4=w.lambda4, lambda_conj=lam_c,
        )
        bd, gu, gv = evaluate(
            DirectionField(u, v), ctx, weights, want_gradient=True
        )
        if not np.isfinite(bd.total):
            raise SolverError(f"non-finite energy at iteration {it}")
        trace.append(bd)
        totals.append(bd.total)

        if len(anchor_faces):
            gu[anchor_faces] = 0.0
            gv[anchor_faces] = 0.0

        t = it + 1
        mu_u = beta1 * mu_u + (1 - beta1) * gu
        nu_u = beta2 * nu_u + (1 - beta2) * gu**2
        mu_v = beta1 * mu_v + (1 - beta1) * gv
        nu_v = beta2 * nu_v + (1 - beta2) * gv**2
        bc1 = 1 - beta1**t
        bc2 = 1 - beta2**t
        u -= config.step_size * (mu_u / bc1) / (np.sqrt(nu_u / bc2) + eps)
        v -= config.step_size * (mu_v / bc1) / (np.sqrt(nu_v / bc2) + eps)
        pin()

        if (it + 1) % 50 == 0:
            proj = project_tangent(DirectionField(u, v), mesh)
            u, v = proj.u.copy(), proj.v.copy()
            pin()

        if len(totals) > config.window:
            prev = totals[-config.window - 1]
            cur = totals[-1]
            if abs(prev - cur) / max(abs(prev), 1e-300) < config.tolerance:
                break

    proj = project_tangent(DirectionField(u, v), mesh)
    u, v = proj.u.copy(), proj.v.copy()
    pin()
    return DirectionField(u, v, tangent_valid=True), trace


def write_trace_csv(trace: list, path: str):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iter", "L_d", "L_dn", "L_ds", "L_dc", "L_fr", "L_conj", "total"])
        for i, bd in enumerate(trace):
            wr.writerow(
                [i, bd.L_d, bd.L_dn, bd.L_ds, bd.L_dc, bd.L_fr, bd.L_conj, bd.total]
            )


def read_trace_csv(path: str) -> list:
    out = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            out.append(
                EnergyBreakdown(
                    L_d=float(row["L_d"]), L_dn=float(row["L_dn"]),
                    L_ds=float(row["L_ds"]), L_dc=float(row["L_dc"]),
                    L_fr=float(row["L_fr"]), L_conj=float(row["L_conj"]),
                    total=float(row["total"]),
                )
            )
    return out
