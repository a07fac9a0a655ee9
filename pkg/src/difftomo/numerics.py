"""Sampling grids, physically scaled Fourier transforms and electron beam constants.

Conventions used throughout the package:

* lengths in angstroms, potentials in volts, accelerating voltage in volts,
  intensities dimensionless;
* real-space samples live on centered grids, ``x_i = (i - n/2) * d``;
* reciprocal-space samples are in standard FFT order (zero frequency at
  index 0, wrap-around negative frequencies), ``q_k = fftfreq(n, d)``;
* the continuous transform is ``(F f)(q) = int f(r) exp(-i 2 pi q r) dr``
  (no 2 pi in the measure), approximated by the DFT times the pixel area,
  so analytic Fourier pairs compare directly with discrete spectra.

Grid sizes must be even; this keeps the Nyquist row unique and makes the
centered/wrapped index maps involutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid2",
    "Grid3",
    "Beam",
    "electron_wavelength",
    "fresnel_number",
    "ft2",
    "ift2",
    "ft3",
    "ift3",
    "centered",
    "mirror_qx",
    "laplacian_2d",
    "inverse_laplacian_2d",
]

# CODATA 2018 exact/recommended values.
_PLANCK_H = 6.62607015e-34  # J s
_ELECTRON_MASS = 9.1093837015e-31  # kg
_ELEMENTARY_CHARGE = 1.602176634e-19  # C
_LIGHT_SPEED = 299792458.0  # m / s


def electron_wavelength(e_volts: float) -> float:
    """Relativistic de Broglie wavelength in angstroms.

    Parameters
    ----------
    e_volts : float
        Accelerating voltage in volts (200 kV -> 0.02508 A).

    Returns
    -------
    float
        Wavelength ``h / sqrt(2 m e U (1 + e U / (2 m c^2)))`` in angstroms.
    """
    if e_volts <= 0:
        raise ValueError(f"accelerating voltage must be positive, got {e_volts!r}")
    rest_energy = _ELECTRON_MASS * _LIGHT_SPEED**2
    momentum = np.sqrt(
        2.0
        * _ELECTRON_MASS
        * _ELEMENTARY_CHARGE
        * e_volts
        * (1.0 + _ELEMENTARY_CHARGE * e_volts / (2.0 * rest_energy))
    )
    return float(_PLANCK_H / momentum * 1e10)


def fresnel_number(feature_size: float, lambda_a: float, thickness: float) -> float:
    """Fresnel number ``a^2 / (lambda * t)`` of the finest feature over a slab.

    Values well above 1 mean the whole slab stays within the depth of focus
    of a feature of size ``feature_size``, i.e. straight-ray projection
    imaging is a good model; values near or below 1 mean in-object Fresnel
    diffraction matters.
    """
    if feature_size <= 0 or lambda_a <= 0 or thickness <= 0:
        raise ValueError(
            "fresnel_number requires positive feature size, wavelength and "
            f"thickness, got ({feature_size!r}, {lambda_a!r}, {thickness!r})"
        )
    return feature_size**2 / (lambda_a * thickness)


def _check_even(name: str, n: int) -> None:
    if n < 2 or n % 2 != 0:
        raise ValueError(f"{name} must be an even integer >= 2, got {n!r}")


def _check_positive(name: str, value: float) -> None:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class Grid2:
    """Uniform 2D sampling grid. Arrays bound to it have shape ``(ny, nx)``."""

    nx: int
    ny: int
    dx: float
    dy: float

    def __post_init__(self) -> None:
        _check_even("nx", self.nx)
        _check_even("ny", self.ny)
        _check_positive("dx", self.dx)
        _check_positive("dy", self.dy)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def dqx(self) -> float:
        return 1.0 / (self.nx * self.dx)

    @property
    def dqy(self) -> float:
        return 1.0 / (self.ny * self.dy)

    @property
    def q_nyquist(self) -> float:
        """Smaller of the two per-axis Nyquist frequencies."""
        return 0.5 / max(self.dx, self.dy)

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.dx

    @cached_property
    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.dy

    @cached_property
    def qx(self) -> np.ndarray:
        return np.fft.fftfreq(self.nx, self.dx)

    @cached_property
    def qy(self) -> np.ndarray:
        return np.fft.fftfreq(self.ny, self.dy)

    def xy_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Centered real-space coordinate meshes ``(X, Y)`` of shape (ny, nx)."""
        return np.meshgrid(self.x, self.y, indexing="xy")

    def q_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """FFT-ordered frequency meshes ``(QX, QY)`` of shape (ny, nx)."""
        return np.meshgrid(self.qx, self.qy, indexing="xy")

    @cached_property
    def q2(self) -> np.ndarray:
        """FFT-ordered ``qx^2 + qy^2`` mesh of shape (ny, nx)."""
        return self.qx[None, :] ** 2 + self.qy[:, None] ** 2

    def check_field(self, values: np.ndarray) -> None:
        if values.shape != self.shape:
            raise ValueError(
                f"field shape {values.shape} does not match grid shape {self.shape}"
            )


@dataclass(frozen=True)
class Grid3:
    """A Grid2 extended along z, tied to an object slab ``[z0, 0]``.

    ``z0 < 0`` is the upstream slab face and ``z = 0`` the exit face; the
    rotation axis is the y axis through the slab center ``z0 / 2``.  All
    physics in this package is referenced to that center: the z samples are
    ``(k - nz/2) * dz`` in center-relative coordinates, and defocus values
    are distances from the center plane.
    """

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    z0: float

    def __post_init__(self) -> None:
        _check_even("nx", self.nx)
        _check_even("ny", self.ny)
        _check_even("nz", self.nz)
        _check_positive("dx", self.dx)
        _check_positive("dy", self.dy)
        _check_positive("dz", self.dz)
        if not self.z0 < 0:
            raise ValueError(f"slab origin z0 must be negative, got {self.z0!r}")
        if self.nz * self.dz < abs(self.z0):
            raise ValueError(
                f"slab of thickness {abs(self.z0)!r} does not fit the z extent "
                f"{self.nz * self.dz!r}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nz, self.ny, self.nx)

    @property
    def grid2(self) -> Grid2:
        return Grid2(nx=self.nx, ny=self.ny, dx=self.dx, dy=self.dy)

    @property
    def dqz(self) -> float:
        return 1.0 / (self.nz * self.dz)

    @cached_property
    def z(self) -> np.ndarray:
        """Center-relative z samples."""
        return (np.arange(self.nz) - self.nz // 2) * self.dz

    @cached_property
    def qz(self) -> np.ndarray:
        return np.fft.fftfreq(self.nz, self.dz)

    def check_volume(self, values: np.ndarray) -> None:
        if values.shape != self.shape:
            raise ValueError(
                f"volume shape {values.shape} does not match grid shape {self.shape}"
            )


@dataclass(frozen=True)
class Beam:
    """Monochromatic plane-wave illumination.

    ``lambda_a`` defaults to the relativistic wavelength for ``e_volts`` and,
    when given explicitly, must agree with it to 0.1%.  The wave number
    convention is ``k = 1 / lambda``.
    """

    e_volts: float
    lambda_a: float | None = None
    i_in: float = 1.0

    def __post_init__(self) -> None:
        _check_positive("e_volts", self.e_volts)
        _check_positive("i_in", self.i_in)
        reference = electron_wavelength(self.e_volts)
        if self.lambda_a is None:
            object.__setattr__(self, "lambda_a", reference)
        elif abs(self.lambda_a - reference) > 1e-3 * reference:
            raise ValueError(
                f"lambda_a={self.lambda_a!r} A is inconsistent with "
                f"e_volts={self.e_volts!r} V (expected {reference:.6g} A)"
            )

    @property
    def k(self) -> float:
        return 1.0 / self.lambda_a


def ft2(values: np.ndarray, grid: Grid2) -> np.ndarray:
    """Forward 2D transform of a centered field, scaled by the pixel area.

    Output is FFT-ordered; ``ift2(ft2(f)) == f`` to machine precision.
    """
    grid.check_field(values)
    return np.fft.fft2(np.fft.ifftshift(values)) * (grid.dx * grid.dy)


def ift2(spectrum: np.ndarray, grid: Grid2) -> np.ndarray:
    """Inverse of :func:`ft2`; returns a centered field."""
    grid.check_field(spectrum)
    return np.fft.fftshift(np.fft.ifft2(spectrum)) / (grid.dx * grid.dy)


def ft3(values: np.ndarray, grid: Grid3) -> np.ndarray:
    """Forward 3D transform of a centered ``(nz, ny, nx)`` volume."""
    grid.check_volume(values)
    return np.fft.fftn(np.fft.ifftshift(values)) * (grid.dx * grid.dy * grid.dz)


def ift3(spectrum: np.ndarray, grid: Grid3) -> np.ndarray:
    """Inverse of :func:`ft3`."""
    grid.check_volume(spectrum)
    return np.fft.fftshift(np.fft.ifftn(spectrum)) / (grid.dx * grid.dy * grid.dz)


def centered(spectrum: np.ndarray) -> np.ndarray:
    """Centered (fftshifted) view of an FFT-ordered spectrum, for display."""
    return np.fft.fftshift(spectrum)


def mirror_qx(spectrum: np.ndarray) -> np.ndarray:
    """Evaluate an FFT-ordered 2D spectrum at ``(-qx, qy)``.

    On the periodic grid the map ``q -> -q`` is index ``i -> (-i) mod n``,
    which fixes both the zero and the Nyquist row.
    """
    n = spectrum.shape[1]
    idx = (-np.arange(n)) % n
    return spectrum[:, idx]


def laplacian_2d(values: np.ndarray, grid: Grid2) -> np.ndarray:
    """Transverse Laplacian applied in Fourier space (symbol ``-4 pi^2 q^2``)."""
    spec = ft2(values, grid)
    return ift2(-4.0 * np.pi**2 * grid.q2 * spec, grid).real


def inverse_laplacian_2d(
    values: np.ndarray, grid: Grid2, alpha: float = 0.0
) -> np.ndarray:
    """Regularized inverse transverse Laplacian.

    Applies the Fourier filter ``-1 / (4 pi^2 q^2 + alpha)`` and forces the
    zero-frequency output to 0.  With ``alpha = 0`` this is the exact inverse
    of :func:`laplacian_2d` on zero-mean fields; the lost DC component is the
    documented null space, not an error.

    Parameters
    ----------
    values : ndarray
        Real field of shape ``grid.shape``.
    grid : Grid2
    alpha : float
        Tikhonov offset in the denominator, in units of ``4 pi^2 q^2``
        (i.e. 1/length^2).  Must be >= 0.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha!r}")
    spec = ft2(values, grid)
    denom = 4.0 * np.pi**2 * grid.q2 + alpha
    denom[0, 0] = 1.0  # DC forced to zero below
    out = -spec / denom
    out[0, 0] = 0.0
    return ift2(out, grid).real
