"""Benchmark: compiled energy kernel vs. the numpy fallback.

Usage: python benchmarks/bench_energy.py [--faces 5000] [--repeats 20]
"""

import argparse
import time

import numpy as np

from cdfkit import _energy_numpy
from cdfkit.curvature import estimate_curvature
from cdfkit.energy import EnergyContext
from cdfkit.field import DirectionField
from cdfkit.mesh import TriMesh, adjacency, face_normals


def saddle_mesh(side: int) -> TriMesh:
    xs = np.linspace(-1, 1, side)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    pos = np.stack([xx, yy, 0.4 * (xx**2 - yy**2)], axis=-1).reshape(-1, 3)
    tris = []
    for i in range(side - 1):
        for j in range(side - 1):
            a = i * side + j
            b = (i + 1) * side + j
            tris += [[a, b, b + 1], [a, b + 1, a + 1]]
    return TriMesh(pos, np.array(tris, dtype=np.int64))


def bench(fn, u, v, ctx, lam, repeats):
    fn(u, v, ctx, lam, True)  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(u, v, ctx, lam, True)
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--faces", type=int, default=5000)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    side = max(3, int(np.sqrt(args.faces / 2)) + 1)
    mesh = saddle_mesh(side)
    frame = estimate_curvature(mesh)
    rng = np.random.default_rng(0)
    n = face_normals(mesh)
    gt_u = rng.normal(size=(mesh.m, 3))
    gt_u -= np.einsum("ij,ij->i", gt_u, n)[:, None] * n
    gt_u /= np.linalg.norm(gt_u, axis=1, keepdims=True)
    gt = DirectionField(gt_u, np.cross(n, gt_u), tangent_valid=True)
    ctx = EnergyContext(mesh, frame=frame, adj=adjacency(mesh), gt=gt)
    u = rng.normal(size=(mesh.m, 3))
    v = rng.normal(size=(mesh.m, 3))
    lam = np.array([1.0, 1.0, 1.0, 1.0, 10.0])

    t_np = bench(_energy_numpy.evaluate, u, v, ctx, lam, args.repeats)
    print(f"mesh: {mesh.m} faces, {ctx.pairs.shape[0]} interior edges")
    print(f"numpy    backend: {t_np * 1e3:8.3f} ms / eval+grad")
    try:
        from cdfkit import _energy_cy
    except ImportError:
        print("compiled backend: not built")
        return
    t_cy = bench(_energy_cy.evaluate, u, v, ctx, lam, args.repeats)
    print(f"compiled backend: {t_cy * 1e3:8.3f} ms / eval+grad")
    print(f"speedup: {t_np / t_cy:.2f}x")


if __name__ == "__main__":
    main()
