"""Defocused TEM image simulation and diffraction tomography.

The package simulates projection images of small, weakly scattering 3D
objects under three forward models of increasing fidelity (straight-ray
projection, single-scattering slice models, full multislice) and
reconstructs the electrostatic potential by three inverse routes:
conventional filtered back-projection, diffraction tomography on Ewald
paraboloids, and a simplified transport-of-intensity variant.
"""

__version__ = "0.1.0"

from .born import (
    ContrastImage,
    ProjectionSet,
    born_contrast,
    contrast_from_wavefield,
    forward_thin,
    per_atom_composite,
    sliced_contrast,
)
from .ct import ct_pipeline, ctf_correct_naive
from .dt import (
    ParaboloidAccumulator,
    accumulate_angle,
    dt_pipeline,
    invert_to_volume,
    solve_paraboloid_sample,
)
from .metrics import ErrorReport, image_error, volume_error
from .numerics import (
    Beam,
    Grid2,
    Grid3,
    electron_wavelength,
    fresnel_number,
    ft2,
    ft3,
    ift2,
    ift3,
    inverse_laplacian_2d,
)
from .phantom import (
    Atom,
    Phantom,
    analytic_ft3,
    line_projection,
    load_phantom,
    potential_on_grid,
    random_phantom,
    rotate_y,
)
from .propagation import (
    Wavefield,
    multislice,
    phase_grating,
    plane_wave,
    projection_exit_wave,
    propagate,
    refocus,
)
from .tie import fbp_reconstruct, symmetrize, tie_dt_pipeline, tie_phase

__all__ = [
    "__version__",
    "Atom",
    "Beam",
    "ContrastImage",
    "ErrorReport",
    "Grid2",
    "Grid3",
    "ParaboloidAccumulator",
    "Phantom",
    "ProjectionSet",
    "Wavefield",
    "accumulate_angle",
    "analytic_ft3",
    "born_contrast",
    "contrast_from_wavefield",
    "ct_pipeline",
    "ctf_correct_naive",
    "dt_pipeline",
    "electron_wavelength",
    "fbp_reconstruct",
    "forward_thin",
    "fresnel_number",
    "ft2",
    "ft3",
    "ift2",
    "ift3",
    "image_error",
    "inverse_laplacian_2d",
    "invert_to_volume",
    "line_projection",
    "load_phantom",
    "multislice",
    "per_atom_composite",
    "phase_grating",
    "plane_wave",
    "potential_on_grid",
    "projection_exit_wave",
    "propagate",
    "random_phantom",
    "refocus",
    "rotate_y",
    "sliced_contrast",
    "solve_paraboloid_sample",
    "symmetrize",
    "tie_dt_pipeline",
    "tie_phase",
    "volume_error",
]
