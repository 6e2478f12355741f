"""Taylor-Hood finite elements for the nondimensional u-p poroelastic problem."""

from .mesh import Mesh, build_structured_mesh, tag_left_interval
from .assembly import (MaterialField, BlockSystem, assemble_operators,
                       traction_load, flux_load, nodes_on_tag,
                       TRI_QUAD, plane_strain_stiffness)
from .solver import (ProblemDef, TransientSolution, assemble, solve_transient,
                     sample_fields)
from .terzaghi import terzaghi_pressure, terzaghi_settlement

__all__ = [
    "Mesh", "build_structured_mesh", "tag_left_interval",
    "MaterialField", "BlockSystem", "assemble_operators", "assemble",
    "traction_load", "flux_load", "nodes_on_tag", "TRI_QUAD",
    "plane_strain_stiffness",
    "ProblemDef", "TransientSolution", "solve_transient", "sample_fields",
    "terzaghi_pressure", "terzaghi_settlement",
]
