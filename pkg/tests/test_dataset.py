import json

import numpy as np
import pytest

from cdfkit.dataset import (
    BSplinePatch,
    DatasetError,
    PatchConfig,
    build_dataset,
    gen_patch,
    load_manifest,
    make_sample,
    read_sample,
    sample_checksum,
    sample_patch,
    verify_dataset,
    write_sample,
)
from cdfkit.field import conjugacy_residual
from cdfkit.mesh import MeshError, face_normals
from cdfkit.solver import SolverConfig


def small_config():
    """Desk-scale sample: coarser mesh and a shorter solve."""
    return PatchConfig(
        samples_per_side=21,
        solver=SolverConfig(max_iters=600, lambda_conj_final=2000.0),
    )


@pytest.fixture(scope="module")
def small_sample():
    return make_sample(2024, small_config())


# ---------------------------------------------------------------------------
# de Boor oracle


def de_boor(t, c, k, x):
    """Textbook de Boor evaluation of a clamped B-spline curve at x."""
    # find the knot span
    n = len(c)
    lo = k
    hi = n
    j = np.searchsorted(t, x, side="right") - 1
    j = min(max(j, lo), hi - 1)
    d = [np.array(c[i], dtype=float) for i in range(j - k, j + 1)]
    for r in range(1, k + 1):
        for i in range(k, r - 1, -1):
            denom = t[j + i - r + 1] - t[j - k + i]
            alpha = 0.0 if denom == 0 else (x - t[j - k + i]) / denom
            d[i] = (1.0 - alpha) * d[i - 1] + alpha * d[i]
    return d[k]


def patch_point_de_boor(patch, u, v):
    t = patch.knots()
    rows = np.array([de_boor(t, patch.control[i], 3, v) for i in range(patch.grid)])
    return de_boor(t, rows, 3, u)


def test_patch_matches_de_boor_oracle():
    rng = np.random.default_rng(5)
    patch = gen_patch(rng)
    for u, v in rng.random((10, 2)):
        got = patch.evaluate(np.array([u]), np.array([v]))[0, 0]
        want = patch_point_de_boor(patch, u, v)
        assert np.allclose(got, want, atol=1e-10)


def test_patch_interpolates_corner_control_points():
    rng = np.random.default_rng(1)
    patch = gen_patch(rng)
    got = patch.evaluate(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    assert np.allclose(got[0, 0], patch.control[0, 0], atol=1e-12)
    assert np.allclose(got[1, 1], patch.control[-1, -1], atol=1e-12)


def test_gen_patch_deterministic():
    p1 = gen_patch(np.random.default_rng(7))
    p2 = gen_patch(np.random.default_rng(7))
    assert np.array_equal(p1.control, p2.control)


def test_gen_patch_flat_limit():
    cfg = PatchConfig(height_min=1e-9, height_max=1e-8, warp_amplitude=0.0)
    patch = gen_patch(np.random.default_rng(3), cfg)
    mesh = sample_patch(patch, 21)
    n = face_normals(mesh)
    # all normals parallel up to sign
    assert np.abs(np.abs(n @ n[0]) - 1).max() < 1e-6
    from cdfkit.curvature import estimate_curvature

    fr = estimate_curvature(mesh)
    assert np.abs(fr.k1).max() < 1e-4


def test_gen_patch_height_distribution_spans_range():
    # thickness along the smallest principal axis tracks 2h, h ~ U(0.1, 0.5)
    thick = []
    rng = np.random.default_rng(100)
    for _ in range(100):
        patch = gen_patch(rng, PatchConfig(warp_amplitude=0.0))
        c = patch.control.reshape(-1, 3)
        c = c - c.mean(axis=0)
        w = np.linalg.eigvalsh(c.T @ c)
        axis_dir = np.linalg.eigh(c.T @ c)[1][:, 0]
        proj = c @ axis_dir
        thick.append(proj.max() - proj.min())
    thick = np.array(thick)
    assert thick.min() < 0.35
    assert thick.max() > 0.6
    assert np.ptp(thick) > 0.3


def test_patch_rejects_duplicate_control_points():
    control = np.zeros((4, 4, 3))
    with pytest.raises(DatasetError):
        BSplinePatch(control=control)


def test_sample_patch_counts():
    patch = gen_patch(np.random.default_rng(11))
    mesh = sample_patch(patch)
    assert mesh.n == 2601
    assert mesh.m == 5000


def test_sample_patch_shorter_diagonal():
    # a saddle-shaped cell must split along its shorter 3D diagonal
    patch = gen_patch(np.random.default_rng(13))
    mesh = sample_patch(patch, 21)
    pos, tri = mesh.positions, mesh.triangles
    # reconstruct cells and check each used diagonal is the shorter one
    s = 21
    for idx in range(0, len(tri), 2):
        cell = set(tri[idx]) | set(tri[idx + 1])
        cell = sorted(cell)
        a, d, b, c = cell[0], cell[1], cell[2], cell[3]
        # grid indices: a=i*s+j, b=(i+1)*s+j, c=(i+1)*s+j+1, d=i*s+j+1
        diag_ac = np.linalg.norm(pos[a] - pos[c])
        diag_bd = np.linalg.norm(pos[b] - pos[d])
        shared = set(tri[idx]) & set(tri[idx + 1])
        used = np.linalg.norm(pos[list(shared)[0]] - pos[list(shared)[1]])
        assert used <= min(diag_ac, diag_bd) + 1e-12


def test_sample_patch_degenerate_errors():
    # control net collapsed onto a line: every triangle has zero area
    line = np.linspace(0.0, 1.0, 4)
    control = np.zeros((4, 4, 3))
    for i in range(4):
        for j in range(4):
            control[i, j] = [line[i] + 0.01 * j, line[i] + 0.01 * j, 0.0]
    patch = BSplinePatch(control=control)
    with pytest.raises(MeshError):
        sample_patch(patch, 11)


# ---------------------------------------------------------------------------
# full samples


def test_make_sample_invariants(small_sample):
    s = small_sample
    assert s.mesh.n == 21 * 21
    assert np.linalg.norm(s.mesh.positions, axis=1).max() == pytest.approx(1.0, abs=1e-9)
    res = np.abs(conjugacy_residual(s.gt_field, s.frame))
    assert res.mean() <= 1e-3
    assert s.meta["stroke_deviation_deg"] < 2.0
    assert 1 <= s.meta["anchor_count"] <= 5
    assert len(s.strokes) == 2 * len(s.anchors)
    assert s.gt_field.tangent_valid


def test_make_sample_deterministic_files(tmp_path, small_sample):
    s2 = make_sample(2024, small_config())
    d1 = tmp_path / "a"
    d2 = tmp_path / "b"
    write_sample(small_sample, str(d1))
    write_sample(s2, str(d2))
    assert sample_checksum(str(d1)) == sample_checksum(str(d2))


def test_sample_round_trip(tmp_path, small_sample):
    d = tmp_path / "s"
    write_sample(small_sample, str(d))
    back = read_sample(str(d))
    assert np.abs(back.gt_field.u - small_sample.gt_field.u).max() < 1e-12
    assert np.abs(back.gt_field.v - small_sample.gt_field.v).max() < 1e-12
    assert np.allclose(back.mesh.positions, small_sample.mesh.positions)
    assert back.meta == small_sample.meta
    assert len(back.strokes) == len(small_sample.strokes)


def test_read_sample_missing_file_named(tmp_path, small_sample):
    d = tmp_path / "s"
    write_sample(small_sample, str(d))
    (d / "frame.json").unlink()
    with pytest.raises(DatasetError, match="frame.json"):
        read_sample(str(d))


def test_read_sample_tampered_field(tmp_path, small_sample):
    d = tmp_path / "s"
    write_sample(small_sample, str(d))
    data = json.loads((d / "field.json").read_text())
    data["u"] = data["u"][:-1]
    (d / "field.json").write_text(json.dumps(data))
    with pytest.raises(DatasetError):
        read_sample(str(d))


def test_build_dataset_manifest_and_verify(tmp_path):
    root = tmp_path / "ds"
    manifest = build_dataset(
        str(root), seed=99, config=small_config(), splits={"train": 2, "val": 1}
    )
    assert len(manifest["samples"]) == 3
    assert load_manifest(str(root)) == manifest
    assert verify_dataset(str(root))
    # corrupt one file: verification fails
    victim = root / manifest["samples"][0]["dir"] / "meta.json"
    victim.write_text(victim.read_text() + " ")
    assert not verify_dataset(str(root))


def test_build_dataset_reproducible(tmp_path):
    cfg = small_config()
    m1 = build_dataset(str(tmp_path / "d1"), seed=5, config=cfg, splits={"test": 2})
    m2 = build_dataset(str(tmp_path / "d2"), seed=5, config=cfg, splits={"test": 2})
    assert [s["checksum"] for s in m1["samples"]] == [
        s["checksum"] for s in m2["samples"]
    ]
