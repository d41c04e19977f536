"""Eigenvalue upper bounds for closed surfaces in R^3, checked numerically on
triangle meshes: cotangent spectra, extrinsic invariants, packings."""

__version__ = "0.1.0"

from .bounds import BoundReport, check_bounds, constants, weyl_scan  # noqa: E402
from .invariants import (  # noqa: E402
    GeometricInvariants,
    concentration,
    estimate_invariants,
    grassmann_average,
    intersection_index,
    moment_of_inertia,
    shadow,
)
from .laplace import SpectralPair, Spectrum, assemble, eigs, mean_curvature_energy  # noqa: E402
from .mesh import TriMesh, gen_icosphere, gen_torus, load_mesh, mesh_stats, recenter  # noqa: E402

__all__ = [
    "BoundReport", "GeometricInvariants", "SpectralPair", "Spectrum", "TriMesh", "assemble",
    "check_bounds", "concentration", "constants", "eigs", "estimate_invariants", "gen_icosphere",
    "gen_torus", "grassmann_average", "intersection_index", "load_mesh", "mean_curvature_energy",
    "mesh_stats", "moment_of_inertia", "recenter", "shadow", "weyl_scan",
]
