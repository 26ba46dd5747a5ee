"""cdfkit: stroke-guided conjugate direction field design on triangle meshes."""

from .mesh import (
    FaceAdjacency,
    MeshError,
    NormalizeTransform,
    TriMesh,
    adjacency,
    face_normals,
    load_mesh,
    pca_normalize,
    save_mesh,
    vertex_normals,
)
from .curvature import CurvatureFrame, estimate_curvature, is_umbilic
from .field import (
    DirectionField,
    FieldError,
    SingularityReport,
    conjugacy_residual,
    conjugate_direction,
    parallel_transport,
    project_tangent,
    rotate90,
    singularity_indices,
)
from .energy import (
    EnergyBreakdown,
    EnergyContext,
    EnergyWeights,
    backend_name,
    total_energy,
    total_gradient,
)

__version__ = "0.1.0"
