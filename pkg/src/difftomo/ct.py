"""Conventional-CT comparison arm.

This module deliberately embodies the straight-ray projection approximation:
defocus-corrected image contrast is treated as if it were a line integral
and handed to the same FBP kernel the other reconstructions use.  On data
with real in-object diffraction this produces the characteristic artefacts
(atoms reconstructed with inverted contrast); on true line integrals it is
the clean control.
"""

from __future__ import annotations

import numpy as np

from .born import ContrastImage, ProjectionSet, contrast_from_wavefield
from .fbp import fbp_volume_on_grid
from .numerics import Grid3
from .propagation import Wavefield, refocus

__all__ = ["ctf_correct_naive", "ct_pipeline", "CT_MODES"]

CT_MODES = ("intensity-as-projection", "true-phase")


def ctf_correct_naive(w: Wavefield, to_plane: float = 0.0) -> ContrastImage:
    """Backpropagate an exit wave to the central plane and take its contrast.

    This is the conventional single-distance defocus correction: one global
    refocus for the whole image.  Atoms at different depths would each need
    their own refocus distance, so a residual contrast survives for thick
    objects; that residual is exactly what poisons the plain-CT arm.
    """
    focused = refocus(w, to_plane)
    return contrast_from_wavefield(focused, model="ctf-corrected")


def ct_pipeline(
    ps: ProjectionSet,
    grid: Grid3,
    mode: str = "intensity-as-projection",
    window: str = "ramlak",
    threads: int = 1,
) -> np.ndarray:
    """Filtered back-projection that trusts the projection approximation.

    ``mode="true-phase"`` expects line-integral images (volt*A) and returns
    the potential in volts: the artefact-free control, limited only by FBP
    discretization.  ``mode="intensity-as-projection"`` backprojects contrast
    images as-is, reproducing what conventional CT does to defocus-corrected
    micrographs; its output is in contrast units and only defined up to
    scale.
    """
    if mode not in CT_MODES:
        raise ValueError(f"unknown CT mode {mode!r}, expected one of {CT_MODES}")
    sinos = np.stack([img.values for img in ps.images])
    return fbp_volume_on_grid(sinos, ps.angles, grid, window=window, threads=threads)
