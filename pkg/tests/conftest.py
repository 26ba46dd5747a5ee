import numpy as np
import pytest

from cdfkit.mesh import TriMesh


def grid_mesh(nx=11, ny=11, extent=1.0, height=None):
    """Regular grid patch over [-extent, extent]^2, z = height(x, y) or 0."""
    xs = np.linspace(-extent, extent, nx)
    ys = np.linspace(-extent, extent, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Z = height(X, Y) if height is not None else np.zeros_like(X)
    pos = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    tris = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            c = (i + 1) * ny + j + 1
            d = i * ny + j + 1
            tris.append([a, b, c])
            tris.append([a, c, d])
    return TriMesh(pos, np.array(tris))


def icosphere(subdiv=3, radius=1.0):
    """Subdivided icosahedron projected onto the sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    verts = list(verts)
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            p = (verts[i] + verts[j]) / 2.0
            p = p / np.linalg.norm(p)
            verts.append(p)
            cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(subdiv):
        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    return TriMesh(np.array(verts) * radius, np.array(faces))


def cylinder_mesh(radius=2.0, height=4.0, n_theta=40, n_z=12, arc=2 * np.pi):
    """Open cylinder tube (or partial arc patch) with axis z, outward normals."""
    closed = abs(arc - 2 * np.pi) < 1e-12
    thetas = np.linspace(0.0, arc, n_theta, endpoint=not closed)
    zs = np.linspace(-height / 2, height / 2, n_z)
    pos = []
    for z in zs:
        for th in thetas:
            pos.append([radius * np.cos(th), radius * np.sin(th), z])
    tris = []
    cols = n_theta if closed else n_theta - 1
    for iz in range(n_z - 1):
        for it in range(cols):
            it2 = (it + 1) % n_theta
            a = iz * n_theta + it
            b = iz * n_theta + it2
            c = (iz + 1) * n_theta + it2
            d = (iz + 1) * n_theta + it
            tris.append([a, b, c])
            tris.append([a, c, d])
    return TriMesh(np.array(pos), np.array(tris))


def disk_mesh(radius=1.0, n_theta=16, n_r=4):
    """Flat polar disk: center vertex, concentric rings, fan triangulation."""
    pos = [[0.0, 0.0, 0.0]]
    for ir in range(1, n_r + 1):
        r = radius * ir / n_r
        for it in range(n_theta):
            th = 2 * np.pi * it / n_theta
            pos.append([r * np.cos(th), r * np.sin(th), 0.0])
    tris = []
    for it in range(n_theta):
        it2 = (it + 1) % n_theta
        tris.append([0, 1 + it, 1 + it2])
    for ir in range(n_r - 1):
        base = 1 + ir * n_theta
        nxt = base + n_theta
        for it in range(n_theta):
            it2 = (it + 1) % n_theta
            tris.append([base + it, nxt + it, nxt + it2])
            tris.append([base + it, nxt + it2, base + it2])
    return TriMesh(np.array(pos), np.array(tris))


def annulus_mesh(r0=0.5, r1=1.5, n_theta=64, n_r=6):
    thetas = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
    rs = np.linspace(r0, r1, n_r)
    pos = []
    for r in rs:
        for th in thetas:
            pos.append([r * np.cos(th), r * np.sin(th), 0.0])
    tris = []
    for ir in range(n_r - 1):
        for it in range(n_theta):
            it2 = (it + 1) % n_theta
            a = ir * n_theta + it
            b = ir * n_theta + it2
            c = (ir + 1) * n_theta + it2
            d = (ir + 1) * n_theta + it
            tris.append([a, b, c])
            tris.append([a, c, d])
    return TriMesh(np.array(pos), np.array(tris))


@pytest.fixture(scope="session")
def flat_grid():
    return grid_mesh(11, 11)


@pytest.fixture(scope="session")
def saddle():
    return grid_mesh(21, 21, height=lambda x, y: 0.5 * (x**2 - y**2))


@pytest.fixture(scope="session")
def sphere():
    return icosphere(3)


@pytest.fixture(scope="session")
def sphere_fine():
    return icosphere(4)  # 2562 vertices


@pytest.fixture(scope="session")
def cylinder():
    return cylinder_mesh()


@pytest.fixture(scope="session")
def annulus():
    return annulus_mesh()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260823)
