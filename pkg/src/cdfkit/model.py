"""Feed-forward direction-pair predictor and its trainer.

Per-vertex 9-d features (position, normal, stroke projection) pass through a
shared encoder; a mean-pooled global code is fused with each local code; two
heads emit raw u and v per face, which are unit-normalized. Training
backpropagates the energy objective through the whole pipeline by hand."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .energy import EnergyContext, EnergyWeights, evaluate
from .field import DirectionField
from .mesh import TriMesh, adjacency, vertex_normals
from .strokes import assign_segments, build_vertex_features, stroke_projection_features


class ModelError(RuntimeError):
    pass


# layer name -> (weight shape, bias length)
ARCHITECTURE = {
    "enc1": ((9, 64), 64),
    "enc2": ((64, 128), 128),
    "enc3": ((128, 128), 128),
    "glob": ((128, 128), 128),
    "u1": ((256, 128), 128),
    "u2": ((128, 64), 64),
    "u3": ((64, 3), 3),
    "v1": ((256, 128), 128),
    "v2": ((128, 64), 64),
    "v3": ((64, 3), 3),
}

PARAMS_VERSION = 1


@dataclass
class PredictorParams:
    layers: dict  # name -> {"W": (in, out), "b": (out,)}

    def __post_init__(self):
        for name, (wshape, blen) in ARCHITECTURE.items():
            if name not in self.layers:
                raise ModelError(f"missing layer {name}")
            W = np.asarray(self.layers[name]["W"], dtype=np.float64)
            b = np.asarray(self.layers[name]["b"], dtype=np.float64)
            if W.shape != wshape or b.shape != (blen,):
                raise ModelError(
                    f"layer {name}: expected {wshape}/{blen}, got {W.shape}/{b.shape}"
                )
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise ModelError(f"layer {name}: non-finite parameters")
            self.layers[name] = {"W": W, "b": b}

    def copy(self) -> "PredictorParams":
        return PredictorParams(
            {k: {"W": v["W"].copy(), "b": v["b"].copy()} for k, v in self.layers.items()}
        )

    def flatten(self) -> np.ndarray:
        parts = []
        for name in ARCHITECTURE:
            parts.append(self.layers[name]["W"].ravel())
            parts.append(self.layers[name]["b"].ravel())
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, vec: np.ndarray) -> "PredictorParams":
        layers = {}
        off = 0
        for name, (wshape, blen) in ARCHITECTURE.items():
            wn = wshape[0] * wshape[1]
            layers[name] = {
                "W": vec[off : off + wn].reshape(wshape).copy(),
                "b": vec[off + wn : off + wn + blen].copy(),
            }
            off += wn + blen
        return cls(layers)


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-4
    weights: EnergyWeights = dc_field(default_factory=EnergyWeights)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def init_params(seed: int = 0) -> PredictorParams:
    """Glorot-uniform initialization: +-sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng(seed)
    layers = {}
    for name, (wshape, blen) in ARCHITECTURE.items():
        bound = np.sqrt(6.0 / (wshape[0] + wshape[1]))
        layers[name] = {
            "W": rng.uniform(-bound, bound, size=wshape),
            "b": np.zeros(blen),
        }
    return PredictorParams(layers)


def _relu(x):
    return np.maximum(x, 0.0)


def _forward(params: PredictorParams, X: np.ndarray, triangles: np.ndarray):
    """Raw (un-normalized) per-face u, v plus the cache for backprop."""
    L = params.layers
    z1 = X @ L["enc1"]["W"] + L["enc1"]["b"]
    a1 = _relu(z1)
    z2 = a1 @ L["enc2"]["W"] + L["enc2"]["b"]
    a2 = _relu(z2)
    z3 = a2 @ L["enc3"]["W"] + L["enc3"]["b"]
    codes = _relu(z3)  # (n, 128)
    gmean = codes.mean(axis=0)
    zg = gmean @ L["glob"]["W"] + L["glob"]["b"]
    g = _relu(zg)
    face_codes = codes[triangles].mean(axis=1)  # (m, 128)
    fused = np.concatenate(
        [face_codes, np.broadcast_to(g, (len(face_codes), 128))], axis=1
    )
    cache = {"X": X, "z1": z1, "a1": a1, "z2": z2, "a2": a2, "z3": z3,
             "codes": codes, "gmean": gmean, "zg": zg, "fused": fused,
             "triangles": triangles}
    raw = {}
    for head in ("u", "v"):
        h1 = _relu(fused @ L[head + "1"]["W"] + L[head + "1"]["b"])
        h2 = _relu(h1 @ L[head + "2"]["W"] + L[head + "2"]["b"])
        raw[head] = h2 @ L[head + "3"]["W"] + L[head + "3"]["b"]
        cache[head + "_h1"] = h1
        cache[head + "_h2"] = h2
    return raw["u"], raw["v"], cache


def _normalize_rows(raw: np.ndarray, what: str):
    norms = np.linalg.norm(raw, axis=1)
    if (norms < 1e-12).any():
        raise ModelError(f"zero-length raw {what} vector; cannot normalize")
    return raw / norms[:, None], norms


def _backward(params: PredictorParams, cache, du_raw, dv_raw):
    """Gradients of all layers given dL/d(raw u), dL/d(raw v)."""
    L = params.layers
    grads = {name: {"W": np.zeros_like(L[name]["W"]), "b": np.zeros_like(L[name]["b"])}
             for name in ARCHITECTURE}
    fused = cache["fused"]
    d_fused = np.zeros_like(fused)
    for head, d_raw in (("u", du_raw), ("v", dv_raw)):
        h1, h2 = cache[head + "_h1"], cache[head + "_h2"]
        grads[head + "3"]["W"] += h2.T @ d_raw
        grads[head + "3"]["b"] += d_raw.sum(axis=0)
        dh2 = (d_raw @ L[head + "3"]["W"].T) * (h2 > 0)
        grads[head + "2"]["W"] += h1.T @ dh2
        grads[head + "2"]["b"] += dh2.sum(axis=0)
        dh1 = (dh2 @ L[head + "2"]["W"].T) * (h1 > 0)
        grads[head + "1"]["W"] += fused.T @ dh1
        grads[head + "1"]["b"] += dh1.sum(axis=0)
        d_fused += dh1 @ L[head + "1"]["W"].T

    codes = cache["codes"]
    tri = cache["triangles"]
    n = len(codes)
    d_codes = np.zeros_like(codes)
    d_face_codes = d_fused[:, :128]
    for corner in range(3):
        np.add.at(d_codes, tri[:, corner], d_face_codes / 3.0)
    dg = d_fused[:, 128:].sum(axis=0)

    dzg = dg * (cache["zg"] > 0)
    grads["glob"]["W"] += np.outer(cache["gmean"], dzg)
    grads["glob"]["b"] += dzg
    d_codes += (L["glob"]["W"] @ dzg) / n

    dz3 = d_codes * (cache["z3"] > 0)
    grads["enc3"]["W"] += cache["a2"].T @ dz3
    grads["enc3"]["b"] += dz3.sum(axis=0)
    da2 = dz3 @ L["enc3"]["W"].T
    dz2 = da2 * (cache["z2"] > 0)
    grads["enc2"]["W"] += cache["a1"].T @ dz2
    grads["enc2"]["b"] += dz2.sum(axis=0)
    da1 = dz2 @ L["enc2"]["W"].T
    dz1 = da1 * (cache["z1"] > 0)
    grads["enc1"]["W"] += cache["X"].T @ dz1
    grads["enc1"]["b"] += dz1.sum(axis=0)
    return PredictorParams(grads)


def mesh_features(mesh: TriMesh, strokes=None) -> np.ndarray:
    feats = stroke_projection_features(mesh, strokes or [])
    return build_vertex_features(mesh, vertex_normals(mesh), feats)


def predict(params: PredictorParams, mesh: TriMesh, strokes=None) -> DirectionField:
    """Per-face unit direction pair; not tangent-projected."""
    X = mesh_features(mesh, strokes)
    raw_u, raw_v, _ = _forward(params, X, mesh.triangles)
    u, _ = _normalize_rows(raw_u, "u")
    v, _ = _normalize_rows(raw_v, "v")
    return DirectionField(u, v)


def _grad_through_normalization(d_unit, unit, norms):
    return (d_unit - np.einsum("ij,ij->i", d_unit, unit)[:, None] * unit) / norms[:, None]


def loss_and_grad(params: PredictorParams, X, triangles, ctx, weights):
    """(EnergyBreakdown, parameter gradients) for one sample."""
    raw_u, raw_v, cache = _forward(params, X, triangles)
    u, nu = _normalize_rows(raw_u, "u")
    v, nv = _normalize_rows(raw_v, "v")
    bd, gu, gv = evaluate(DirectionField(u, v), ctx, weights, want_gradient=True)
    du_raw = _grad_through_normalization(gu, u, nu)
    dv_raw = _grad_through_normalization(gv, v, nv)
    grads = _backward(params, cache, du_raw, dv_raw)
    return bd, grads


@dataclass
class _SampleCtx:
    X: np.ndarray
    triangles: np.ndarray
    ctx: EnergyContext


def _prepare(sample, weights) -> _SampleCtx:
    assignment = None
    if sample.strokes:
        assignment = assign_segments(sample.mesh, [s.points for s in sample.strokes])
    needs_frame = weights.lambda_conj > 0
    ctx = EnergyContext(
        sample.mesh,
        frame=sample.frame if needs_frame else None,
        adj=adjacency(sample.mesh),
        gt=sample.gt_field,
        assignment=assignment,
    )
    X = mesh_features(sample.mesh, sample.strokes)
    return _SampleCtx(X=X, triangles=sample.mesh.triangles, ctx=ctx)


def train(dataset: list, config: TrainConfig | None = None):
    """Per-sample Adam steps over the epochs; returns (params, curve).

    ``curve`` has one dict per epoch with the mean of each loss term.
    """
    if config is None:
        config = TrainConfig()
    if not dataset:
        raise ModelError("empty training set")
    prepared = [_prepare(s, config.weights) for s in dataset]
    params = init_params(config.seed)
    vec = params.flatten()
    mu = np.zeros_like(vec)
    nu = np.zeros_like(vec)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    t = 0
    curve = []
    term_names = ("L_d", "L_dn", "L_ds", "L_dc", "L_fr", "L_conj", "total")
    for epoch in range(config.epochs):
        sums = {k: 0.0 for k in term_names}
        for sc in prepared:
            params = PredictorParams.unflatten(vec)
            bd, grads = loss_and_grad(params, sc.X, sc.triangles, sc.ctx, config.weights)
            if not np.isfinite(bd.total):
                raise ModelError(f"non-finite loss at epoch {epoch}")
            for k in term_names:
                sums[k] += getattr(bd, k)
            g = grads.flatten()
            t += 1
            mu = beta1 * mu + (1 - beta1) * g
            nu = beta2 * nu + (1 - beta2) * g**2
            vec = vec - config.learning_rate * (mu / (1 - beta1**t)) / (
                np.sqrt(nu / (1 - beta2**t)) + eps
            )
        curve.append(
            {"epoch": epoch, **{k: sums[k] / len(prepared) for k in term_names}}
        )
    return PredictorParams.unflatten(vec), curve


def write_train_csv(curve: list, path: str):
    cols = ["epoch", "L_d", "L_dn", "L_ds", "L_dc", "L_fr", "L_conj", "total"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for row in curve:
            wr.writerow([row[c] for c in cols])


def save_params(params: PredictorParams, path: str):
    doc = {
        "version": PARAMS_VERSION,
        "layers": {
            name: {
                "shape": list(params.layers[name]["W"].shape),
                "W": params.layers[name]["W"].ravel().tolist(),
                "b": params.layers[name]["b"].tolist(),
            }
            for name in ARCHITECTURE
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_params(path: str) -> PredictorParams:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read params file {path}: {exc}") from exc
    if doc.get("version") != PARAMS_VERSION:
        raise ModelError(f"unsupported params version in {path}")
    layers = {}
    for name, (wshape, blen) in ARCHITECTURE.items():
        if name not in doc["layers"]:
            raise ModelError(f"params file missing layer {name}")
        entry = doc["layers"][name]
        W = np.array(entry["W"], dtype=np.float64)
        if tuple(entry["shape"]) != wshape or W.size != wshape[0] * wshape[1]:
            raise ModelError(f"layer {name}: shape mismatch in params file")
        layers[name] = {"W": W.reshape(wshape), "b": np.array(entry["b"])}
    return PredictorParams(layers)
