"""Simplified diffraction tomography via transport-of-intensity phase retrieval.

The small-defocus limit of the paraboloid solve collapses to a two-step
recipe per angle: average a contrast image with the x-mirrored image of the
opposite orientation (which cancels the antisymmetric part of the defocus
response), then invert a transverse Laplacian to retrieve the projected
phase.  The retrieved phases are straight-ray line integrals, so a
conventional filtered back-projection finishes the reconstruction.

The symmetrization is the step that injects Fresnel-diffraction awareness:
plain CT on the same images skips it and inherits the depth-dependent
defocus errors instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .born import ContrastImage, ProjectionSet
from .fbp import fbp_volume_on_grid
from .numerics import Beam, Grid2, Grid3, inverse_laplacian_2d
from .utils import run_indexed

__all__ = [
    "SymmetrizedContrast",
    "symmetrize",
    "tie_phase",
    "tie_line_integrals",
    "fbp_reconstruct",
    "tie_dt_pipeline",
    "default_alpha",
]

# Fraction of the image size zero-padded before the Laplacian inversion to
# suppress periodic wrap-around of the long-range 1/q^2 kernel.
PAD_FRACTION = 0.25


def default_alpha(grid: Grid2) -> float:
    """Low-frequency regularizer for the inverse Laplacian, 1e-6 of the
    band-edge symbol ``4 pi^2 q_nyquist^2``."""
    return 1e-6 * 4.0 * math.pi**2 * grid.q_nyquist**2


def mirror_x(values: np.ndarray) -> np.ndarray:
    """Real-space map ``f(x, y) -> f(-x, y)`` on the periodic centered grid.

    Index map ``i -> (-i) mod n``: the i = 0 column (x = -L/2, identified
    with +L/2 periodically) stays put, everything else reflects.  This is
    the exact real-space counterpart of the spectral qx mirror.
    """
    n = values.shape[1]
    idx = (-np.arange(n)) % n
    return values[:, idx]


@dataclass(frozen=True)
class SymmetrizedContrast:
    """Orientation-averaged contrast ``[K_theta(x,y) + K_theta_pi(-x,y)] / 2``."""

    values: np.ndarray
    grid: Grid2
    beam: Beam
    defocus: float
    theta: float

    def __post_init__(self) -> None:
        self.grid.check_field(self.values)


def symmetrize(
    k_theta: ContrastImage, k_theta_pi: ContrastImage
) -> SymmetrizedContrast:
    """Average a contrast image with the x-mirrored opposite orientation.

    Under the straight-ray projection approximation the partner is an exact
    mirror and the average returns the input unchanged; on fully refocused
    (z = 0) data the pair is antisymmetric and the average vanishes, which
    is why this method needs defocused input.
    """
    if not k_theta.matches(k_theta_pi):
        raise ValueError("angle pair disagrees in grid/beam/defocus")
    gap = (k_theta_pi.theta - k_theta.theta - np.pi) % (2.0 * np.pi)
    if min(gap, 2.0 * np.pi - gap) > 1e-9:
        raise ValueError(
            f"angles {k_theta.theta!r} and {k_theta_pi.theta!r} do not differ "
            "by 180 degrees"
        )
    values = 0.5 * (k_theta.values + mirror_x(k_theta_pi.values))
    return SymmetrizedContrast(
        values=values,
        grid=k_theta.grid,
        beam=k_theta.beam,
        defocus=k_theta.defocus,
        theta=k_theta.theta,
    )


def _padded_grid(grid: Grid2) -> tuple[Grid2, tuple[slice, slice]]:
    # Pad each side by ceil(n * PAD_FRACTION / 2); totals stay even because
    # the input sizes are even.
    def padded_size(n: int) -> tuple[int, int]:
        side = math.ceil(n * PAD_FRACTION / 2.0)
        total = n + 2 * side
        if total % 2:
            total += 1
        return total, (total - n) // 2

    nx_p, off_x = padded_size(grid.nx)
    ny_p, off_y = padded_size(grid.ny)
    big = Grid2(nx=nx_p, ny=ny_p, dx=grid.dx, dy=grid.dy)
    window = (slice(off_y, off_y + grid.ny), slice(off_x, off_x + grid.nx))
    return big, window


def tie_phase(
    ksym: SymmetrizedContrast, beam: Beam, alpha: float | None = None
) -> np.ndarray:
    """Projected phase retrieved from symmetrized contrast.

    Applies ``phi = [2 pi / (lambda z)] * inverse_laplacian(K_sym)`` on a
    zero-padded copy (25% margin) to keep the periodic Laplacian kernel from
    wrapping object tails around the field of view.  ``alpha`` defaults to
    :func:`default_alpha`; the retrieved phase is zero-mean because the DC
    component is unobservable.
    """
    if ksym.defocus == 0.0:
        raise ValueError("phase retrieval needs a nonzero defocus")
    if alpha is None:
        alpha = default_alpha(ksym.grid)
    big, window = _padded_grid(ksym.grid)
    padded = np.zeros(big.shape)
    padded[window] = ksym.values
    inv = inverse_laplacian_2d(padded, big, alpha=alpha)
    scale = 2.0 * math.pi / (beam.lambda_a * ksym.defocus)
    phi = scale * inv[window]
    # The retrieved DC is a padding artifact (the true DC is unobservable);
    # normalize to zero mean over the field of view.
    return phi - phi.mean()


def tie_line_integrals(
    ksym: SymmetrizedContrast, beam: Beam, alpha: float | None = None
) -> np.ndarray:
    """Line integrals of the potential, ``(lambda E / pi) * phi``, in volt*A."""
    phi = tie_phase(ksym, beam, alpha=alpha)
    return beam.lambda_a * beam.e_volts / math.pi * phi


def fbp_reconstruct(
    sinograms: np.ndarray,
    angles: np.ndarray,
    grid: Grid3,
    window: str = "ramlak",
    threads: int = 1,
) -> np.ndarray:
    """Filtered back-projection of per-angle line-integral images.

    Thin wrapper over the shared FBP kernel; ``sinograms`` has shape
    ``(n_angles, ny, nx)`` in volt*A and the output is the potential in
    volts on ``grid``.
    """
    return fbp_volume_on_grid(sinograms, angles, grid, window=window, threads=threads)


def tie_dt_pipeline(
    ps: ProjectionSet,
    grid: Grid3,
    alpha: float | None = None,
    window: str = "ramlak",
    threads: int = 1,
) -> np.ndarray:
    """Symmetrize, retrieve phases, back-project: the simplified DT route.

    Requires a single-defocus projection set containing every angle's
    180-degree partner; raises listing the unpaired angles otherwise.
    """
    pairs = ps.require_pairs()
    if ps.defocus == 0.0:
        raise ValueError("the TIE route needs defocused projections (z != 0)")

    def retrieve(n: int) -> np.ndarray:
        i, j = pairs[n]
        ksym = symmetrize(ps.images[i], ps.images[j])
        return tie_line_integrals(ksym, ps.beam, alpha=alpha)

    sinos = np.stack(run_indexed(retrieve, len(pairs), threads))
    return fbp_reconstruct(sinos, ps.angles, grid, window=window, threads=threads)
