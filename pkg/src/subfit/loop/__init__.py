"""Loop subdivision: masks, exact patch evaluation and the sample operator."""

from .masks import (ControlMesh, SubdivisionStep, limit_matrix, loop_beta,
                    subdivide_once, subdivide_to_level, subdivision_matrix)
from .operator import (SampleOperator, SampleSpec, build_sample_operator, eval_points,
                       level1_samples, map_sample_to_patch, samples_for_level,
                       vertex_samples)
from .patches import (Patch, PatchTable, build_patch_table, eval_basis,
                      eval_basis_derivatives, stam_tables)

__all__ = [
    "ControlMesh", "SubdivisionStep", "limit_matrix", "loop_beta", "subdivide_once",
    "subdivide_to_level", "subdivision_matrix", "SampleOperator", "SampleSpec",
    "build_sample_operator", "eval_points", "level1_samples", "map_sample_to_patch",
    "samples_for_level", "vertex_samples", "Patch", "PatchTable", "build_patch_table",
    "eval_basis", "eval_basis_derivatives", "stam_tables",
]
