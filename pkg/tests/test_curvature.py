import numpy as np

from cdfkit.curvature import estimate_curvature, is_umbilic
from cdfkit.mesh import TriMesh, face_normals, vertex_normals

from conftest import cylinder_mesh, grid_mesh, icosphere


def frame_of(mesh):
    return estimate_curvature(mesh)


def shape_operators(fr):
    return fr.k1[:, None, None] * np.einsum("ij,ik->ijk", fr.d1, fr.d1) + fr.k2[
        :, None, None
    ] * np.einsum("ij,ik->ijk", fr.d2, fr.d2)


def test_planar_grid_zero_curvature(flat_grid):
    fr = frame_of(flat_grid)
    assert np.abs(fr.k1).max() < 1e-8
    assert np.abs(fr.k2).max() < 1e-8


def test_frame_orthonormality(saddle):
    fr = frame_of(saddle)
    n = face_normals(saddle)
    assert np.abs(np.einsum("ij,ij->i", fr.d1, fr.d2)).max() < 1e-8
    assert np.abs(np.einsum("ij,ij->i", fr.d1, n)).max() < 1e-8
    assert np.abs(np.einsum("ij,ij->i", fr.d2, n)).max() < 1e-8
    assert np.abs(np.linalg.norm(fr.d1, axis=1) - 1).max() < 1e-8
    assert (np.abs(fr.k1) >= np.abs(fr.k2) - 1e-15).all()


def test_icosphere_curvature_close_to_inverse_radius():
    mesh = icosphere(4)  # 2562 vertices
    fr = frame_of(mesh)
    assert fr.k1.min() > 0.95 and fr.k1.max() < 1.05
    assert fr.k2.min() > 0.95 and fr.k2.max() < 1.05


def test_cylinder_curvatures_and_axis():
    mesh = cylinder_mesh(radius=2.0, n_theta=60, n_z=16)
    fr = frame_of(mesh)
    assert np.allclose(fr.k1, 0.5, rtol=0.05)
    assert np.abs(fr.k2).max() <= 0.02
    axis_angle = np.degrees(np.arccos(np.clip(np.abs(fr.d2[:, 2]), 0, 1)))
    assert axis_angle.max() < 3.0


def test_rigid_motion_equivariance(saddle, rng):
    # compare reconstructed shape operators: robust to the |k| label swap
    # where k1 and k2 have nearly equal magnitude (everywhere on a saddle)
    fr = frame_of(saddle)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    rotated = TriMesh(saddle.positions @ q.T, saddle.triangles)
    fr2 = frame_of(rotated)
    S = shape_operators(fr)
    S2 = shape_operators(fr2)
    assert np.allclose(S2, np.einsum("ab,mbc,dc->mad", q, S, q), atol=1e-6)
    ks = np.sort(np.stack([fr.k1, fr.k2], axis=1), axis=1)
    ks2 = np.sort(np.stack([fr2.k1, fr2.k2], axis=1), axis=1)
    assert np.allclose(ks, ks2, atol=1e-6)


def test_uniform_scaling_divides_curvature(saddle):
    fr = frame_of(saddle)
    scaled = TriMesh(saddle.positions * 2.5, saddle.triangles)
    fr2 = frame_of(scaled)
    assert np.allclose(shape_operators(fr2), shape_operators(fr) / 2.5, atol=1e-6)


def test_shape_operator_reconstruction(saddle):
    # k1 d1 d1^T + k2 d2 d2^T expressed in the (d1, d2) basis reproduces the
    # eigenvalues on the diagonal exactly
    fr = frame_of(saddle)
    S = fr.k1[:, None, None] * np.einsum("ij,ik->ijk", fr.d1, fr.d1) + fr.k2[
        :, None, None
    ] * np.einsum("ij,ik->ijk", fr.d2, fr.d2)
    s11 = np.einsum("ij,ijk,ik->i", fr.d1, S, fr.d1)
    s12 = np.einsum("ij,ijk,ik->i", fr.d1, S, fr.d2)
    s22 = np.einsum("ij,ijk,ik->i", fr.d2, S, fr.d2)
    assert np.allclose(s11, fr.k1, atol=1e-10)
    assert np.allclose(s22, fr.k2, atol=1e-10)
    assert np.abs(s12).max() < 1e-10


def test_is_umbilic_cases(sphere, cylinder):
    fr_s = frame_of(sphere)
    assert is_umbilic(fr_s.k1[0], fr_s.k2[0], tol=0.2)
    fr_c = frame_of(cylinder)
    assert not is_umbilic(fr_c.k1[0], fr_c.k2[0])
    # below the absolute floor everything is umbilic
    assert is_umbilic(1e-9, 0.0, tol=1e-3, eps_abs=1e-6)
