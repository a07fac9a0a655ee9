"""Free-space Fresnel propagation and full multislice wave simulation.

The propagator acts on the slowly varying envelope of a forward-travelling
wave ``sqrt(I_in) exp(i 2 pi k z)``: a step of length d multiplies the
spectrum by ``exp(-i pi lambda d q^2)``.  That sign, together with the
positive phase grating ``exp(+i pi / (lambda E) * projected potential)``,
reproduces the weak-phase contrast transfer ``+2 sin(pi lambda z q^2)`` of
the intensity spectrum downstream, which the Born module depends on.

Plane coordinates are center-relative: z = 0 is the plane of the rotation
axis, the object slab occupies ``[-T/2, +T/2]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .numerics import Beam, Grid2, Grid3
from .phantom import Phantom, line_projection, rotate_y, slab_weights

__all__ = [
    "Wavefield",
    "plane_wave",
    "propagate",
    "refocus",
    "phase_grating",
    "projection_exit_wave",
    "multislice",
]

# Aperture radius of the multislice anti-aliasing mask, as a fraction of the
# Nyquist frequency (standard practice for phase-grating multislice).
BAND_LIMIT_FRACTION = 2.0 / 3.0


@dataclass(frozen=True)
class Wavefield:
    """Complex scalar wave envelope on a plane at center-relative ``z``."""

    values: np.ndarray
    grid: Grid2
    beam: Beam
    z: float

    def __post_init__(self) -> None:
        self.grid.check_field(self.values)

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def plane_wave(grid: Grid2, beam: Beam, z: float = 0.0) -> Wavefield:
    values = np.full(grid.shape, math.sqrt(beam.i_in), dtype=complex)
    return Wavefield(values=values, grid=grid, beam=beam, z=z)


def _propagator(grid: Grid2, beam: Beam, distance: float, exact: bool) -> np.ndarray:
    if exact:
        # Full angular-spectrum phase relative to the carrier.  Evanescent
        # components cannot occur below Nyquist at TEM wavelengths, but are
        # clipped for safety.
        kz2 = np.maximum(beam.k**2 - grid.q2, 0.0)
        return np.exp(2j * np.pi * distance * (np.sqrt(kz2) - beam.k))
    return np.exp(-1j * np.pi * beam.lambda_a * distance * grid.q2)


def propagate(w: Wavefield, distance: float, exact: bool = False) -> Wavefield:
    """Propagate by ``distance`` (negative values backpropagate).

    The default paraxial kernel is unitary and forms a group:
    ``propagate(d1) o propagate(d2) == propagate(d1 + d2)`` exactly.  Set
    ``exact=True`` for the square-root angular-spectrum phase (convergence
    studies only; everything downstream assumes the paraxial form).
    """
    if distance == 0.0:
        return replace(w, z=w.z)
    spec = np.fft.fft2(w.values)
    spec *= _propagator(w.grid, w.beam, distance, exact)
    return replace(w, values=np.fft.ifft2(spec), z=w.z + distance)


def refocus(w: Wavefield, to_plane: float) -> Wavefield:
    """Propagate (usually backwards) so the wave sits at ``to_plane``."""
    return propagate(w, to_plane - w.z)


def phase_grating(w: Wavefield, projected_potential: np.ndarray) -> Wavefield:
    """Transmit through a thin slice with projected potential in volt * A."""
    w.grid.check_field(projected_potential)
    phase = math.pi / (w.beam.lambda_a * w.beam.e_volts) * projected_potential
    return replace(w, values=w.values * np.exp(1j * phase))


def projection_exit_wave(
    phantom: Phantom, grid: Grid2, beam: Beam, theta: float
) -> Wavefield:
    """Exit wave of the straight-ray projection approximation, at z = 0.

    The whole projected phase is applied in the central plane with no
    propagation inside the object, so opposite orientations give exactly
    x-mirrored waves.
    """
    phi = (
        math.pi
        / (beam.lambda_a * beam.e_volts)
        * line_projection(phantom, grid, theta)
    )
    values = math.sqrt(beam.i_in) * np.exp(1j * phi)
    return Wavefield(values=values, grid=grid, beam=beam, z=0.0)


def _band_limit_mask(grid: Grid2) -> np.ndarray:
    q_max = BAND_LIMIT_FRACTION * grid.q_nyquist
    return (grid.q2 <= q_max * q_max).astype(float)


def multislice(
    phantom: Phantom,
    grid: Grid3,
    beam: Beam,
    theta: float,
    exit_defocus: float = 0.0,
    band_limit: bool = True,
    max_slice_phase: float = 0.5,
) -> Wavefield:
    """Full multislice wave through the rotated phantom.

    The rotated slab is cut into ``ceil(T / grid.dz)`` slices.  Each slice's
    projected potential is integrated analytically across the slab (erf
    differences per atom), so sub-voxel atom positions along z are exact.
    The wave alternates phase gratings and paraxial steps of ``grid.dz``,
    then free-space propagates to ``exit_defocus`` (center-relative).

    ``band_limit`` applies a 2/3-Nyquist aperture after every slice to
    suppress aliasing wrap-around; switch it off when comparing against
    unapertured analytic models.  Raises if any slice accumulates more than
    ``max_slice_phase`` radians, naming a sufficient dz.
    """
    g2 = grid.grid2
    rot = rotate_y(phantom, theta)
    x, y, zeta, v0, sigma = rot._arrays
    half = rot.thickness / 2.0
    n_slices = max(1, math.ceil(rot.thickness / grid.dz - 1e-12))
    edges = -half + grid.dz * np.arange(n_slices + 1)

    # Transverse profiles are slice-independent; only the z weights vary.
    profiles = []
    gx, gy = g2.x, g2.y
    for i in range(len(v0)):
        s2 = 2.0 * sigma[i] ** 2
        ex = np.exp(-((gx - x[i]) ** 2) / s2)
        ey = np.exp(-((gy - y[i]) ** 2) / s2)
        profiles.append(v0[i] * ey[:, None] * ex[None, :])

    phase_scale = math.pi / (beam.lambda_a * beam.e_volts)
    step_kernel = _propagator(g2, beam, grid.dz, exact=False)
    if band_limit:
        step_kernel = step_kernel * _band_limit_mask(g2)

    w = plane_wave(g2, beam, z=-half)
    values = w.values
    for m in range(n_slices):
        slice_pot = np.zeros(g2.shape)
        if len(v0):
            weights = slab_weights(zeta, sigma, edges[m], edges[m + 1])
            for i in range(len(v0)):
                if weights[i] > 1e-300:
                    slice_pot += weights[i] * profiles[i]
        phase = phase_scale * slice_pot
        peak = float(np.max(np.abs(phase))) if phase.size else 0.0
        if peak > max_slice_phase:
            needed = grid.dz * max_slice_phase / peak
            raise ValueError(
                f"slice {m} accumulates {peak:.3g} rad > {max_slice_phase} rad; "
                f"reduce dz to about {needed:.3g} A"
            )
        values = values * np.exp(1j * phase)
        values = np.fft.ifft2(np.fft.fft2(values) * step_kernel)
    exit_z = float(edges[-1])
    w = Wavefield(values=values, grid=g2, beam=beam, z=exit_z)
    return propagate(w, exit_defocus - exit_z)
