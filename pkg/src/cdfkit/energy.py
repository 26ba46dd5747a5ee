"""The five loss terms plus the conjugacy penalty, with analytic gradients.

Heavy evaluation is delegated to a backend: a compiled kernel
(``cdfkit._energy_cy``) when available, otherwise the numpy implementation in
``cdfkit._energy_numpy``. Set ``CDFKIT_PURE=1`` to force the numpy path.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from .curvature import CurvatureFrame
from .field import DirectionField, FieldError, rotate90, transport_matrices
from .mesh import FaceAdjacency, TriMesh, face_normals

# branch tie-break: the first branch wins when |E - E'| <= BRANCH_TIE
BRANCH_TIE = 1e-12

if os.environ.get("CDFKIT_PURE"):
    from . import _energy_numpy as _backend

    BACKEND = "numpy"
else:
    try:
        from . import _energy_cy as _backend  # type: ignore

        BACKEND = "compiled"
    except ImportError:
        from . import _energy_numpy as _backend

        BACKEND = "numpy"


def backend_name() -> str:
    return BACKEND


@dataclass
class EnergyWeights:
    """Weights of the total objective: lambda1..4 from the weighted sum of
    loss terms, plus the conjugacy penalty weight lambda_conj (solver-only
    addition; zero when training against ground truth)."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 1.0
    lambda_conj: float = 0.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "lambda_conj"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda_conj]
        )


@dataclass
class EnergyBreakdown:
    """Individual terms and the weighted total. Terms whose inputs were
    absent (no ground truth, no strokes) are zero and listed in
    ``missing``."""

    L_d: float
    L_dn: float
    L_ds: float
    L_dc: float
    L_fr: float
    L_conj: float
    total: float
    missing: tuple = ()

    def to_json(self) -> str:
        return json.dumps(
            {
                "L_d": self.L_d,
                "L_dn": self.L_dn,
                "L_ds": self.L_ds,
                "L_dc": self.L_dc,
                "L_fr": self.L_fr,
                "L_conj": self.L_conj,
                "total": self.total,
                "missing": list(self.missing),
            },
            sort_keys=True,
        )


class EnergyContext:
    """Geometry fixed across evaluations of one objective.

    Bundles face normals, adjacency pairs with hinge transport matrices,
    rotated ground-truth directions, stroke segment data and the curvature
    frame into flat arrays the backends consume.
    """

    def __init__(
        self,
        mesh: TriMesh,
        frame: CurvatureFrame | None = None,
        adj: FaceAdjacency | None = None,
        gt: DirectionField | None = None,
        assignment=None,
    ):
        self.m = mesh.m
        self.normals = face_normals(mesh)

        if adj is not None and adj.count > 0:
            self.pairs = np.ascontiguousarray(adj.pairs, dtype=np.int64)
            self.transport = np.ascontiguousarray(transport_matrices(mesh, adj, self.normals))
        else:
            self.pairs = np.zeros((0, 2), dtype=np.int64)
            self.transport = np.zeros((0, 3, 3))

        if gt is not None:
            if gt.m != self.m:
                raise FieldError("ground-truth field size mismatch")
            gu = gt.u / np.linalg.norm(gt.u, axis=1, keepdims=True)
            gv = gt.v / np.linalg.norm(gt.v, axis=1, keepdims=True)
            self.gt_u_perp = np.ascontiguousarray(rotate90(gu, self.normals))
            self.gt_v_perp = np.ascontiguousarray(rotate90(gv, self.normals))
        else:
            self.gt_u_perp = None
            self.gt_v_perp = None

        if assignment is not None and assignment.total_segments() > 0:
            faces, segs, weights = assignment.flat_segments()
            lens = np.linalg.norm(segs, axis=1)
            keep = lens > 1e-12
            self.seg_face = np.ascontiguousarray(faces[keep], dtype=np.int64)
            s = segs[keep]
            self.seg_perp = np.ascontiguousarray(
                rotate90(s, self.normals[self.seg_face])
            )
            self.seg_len = np.ascontiguousarray(lens[keep])
            self.seg_weight = np.ascontiguousarray(weights[keep])
        else:
            self.seg_face = np.zeros(0, dtype=np.int64)
            self.seg_perp = np.zeros((0, 3))
            self.seg_len = np.zeros(0)
            self.seg_weight = np.zeros(0)

        if frame is not None:
            if frame.m != self.m:
                raise FieldError("curvature frame size mismatch")
            self.d1 = np.ascontiguousarray(frame.d1)
            self.d2 = np.ascontiguousarray(frame.d2)
            self.k1 = np.ascontiguousarray(frame.k1)
            self.k2 = np.ascontiguousarray(frame.k2)
        else:
            self.d1 = None
            self.d2 = None
            self.k1 = None
            self.k2 = None

    @property
    def has_gt(self) -> bool:
        return self.gt_u_perp is not None

    @property
    def has_strokes(self) -> bool:
        return self.seg_face.shape[0] > 0

    @property
    def has_frame(self) -> bool:
        return self.d1 is not None


def _check_sizes(field: DirectionField, ctx: EnergyContext):
    if field.m != ctx.m:
        raise FieldError(f"field has {field.m} faces, context has {ctx.m}")


def evaluate(
    field: DirectionField,
    ctx: EnergyContext,
    weights: EnergyWeights,
    want_gradient: bool = False,
):
    """Full objective and (optionally) its analytic gradient.

    Returns (EnergyBreakdown, grad_u, grad_v); the gradients are None unless
    requested. min(.,.) branches are resolved in this forward pass and the
    gradient differentiates the selected branch.
    """
    _check_sizes(field, ctx)
    if weights.lambda_conj > 0 and not ctx.has_frame:
        raise FieldError("conjugacy weight set but context has no curvature frame")
    terms, gu, gv = _backend.evaluate(
        field.u, field.v, ctx, weights.as_array(), bool(want_gradient)
    )
    L_d, L_dn, L_ds, L_dc, L_fr, L_conj = (float(x) for x in terms)
    missing = []
    if not ctx.has_gt:
        missing.append("L_d")
    if not ctx.has_strokes:
        missing.append("L_dc")
    if not ctx.has_frame:
        missing.append("L_conj")
    total = (
        L_d
        + weights.lambda1 * L_dn
        + weights.lambda2 * L_ds
        + weights.lambda3 * L_dc
        + weights.lambda4 * L_fr
        + weights.lambda_conj * L_conj
    )
    bd = EnergyBreakdown(L_d, L_dn, L_ds, L_dc, L_fr, L_conj, total, tuple(missing))
    return bd, gu, gv


def total_energy(field, ctx, weights) -> EnergyBreakdown:
    bd, _, _ = evaluate(field, ctx, weights, want_gradient=False)
    return bd


def total_gradient(field, ctx, weights):
    """(EnergyBreakdown, grad wrt u (m,3), grad wrt v (m,3))."""
    return evaluate(field, ctx, weights, want_gradient=True)


# Individual terms, mainly for tests and reporting. Each evaluates through
# the same backend with the other terms switched off.


def alignment_energy(field: DirectionField, ctx: EnergyContext) -> float:
    if not ctx.has_gt:
        raise FieldError("context has no ground-truth field")
    _check_sizes(field, ctx)
    terms, _, _ = _backend.evaluate(
        field.u, field.v, ctx, np.zeros(5), False
    )
    return float(terms[0])


def normal_consistency(field: DirectionField, ctx: EnergyContext) -> float:
    _check_sizes(field, ctx)
    terms, _, _ = _backend.evaluate(field.u, field.v, ctx, np.zeros(5), False)
    return float(terms[1])


def smoothness_energy(field: DirectionField, ctx: EnergyContext) -> float:
    if ctx.pairs.shape[0] == 0:
        raise FieldError("empty adjacency")
    _check_sizes(field, ctx)
    terms, _, _ = _backend.evaluate(field.u, field.v, ctx, np.zeros(5), False)
    return float(terms[2])


def stroke_consistency(field: DirectionField, ctx: EnergyContext) -> float:
    _check_sizes(field, ctx)
    terms, _, _ = _backend.evaluate(field.u, field.v, ctx, np.zeros(5), False)
    return float(terms[3])


def regularization(field: DirectionField) -> float:
    nu = np.linalg.norm(field.u, axis=1)
    nv = np.linalg.norm(field.v, axis=1)
    return float(np.mean((nu - 1.0) ** 2 + (nv - 1.0) ** 2))


def conjugacy_energy(field: DirectionField, ctx: EnergyContext) -> float:
    if not ctx.has_frame:
        raise FieldError("context has no curvature frame")
    _check_sizes(field, ctx)
    nu = np.linalg.norm(field.u, axis=1)
    nv = np.linalg.norm(field.v, axis=1)
    if (nu <= 0).any() or (nv <= 0).any():
        raise FieldError("zero-length field vector")
    terms, _, _ = _backend.evaluate(field.u, field.v, ctx, np.zeros(5), False)
    return float(terms[5])
