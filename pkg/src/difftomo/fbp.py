"""Parallel-beam filtered back-projection about the y axis.

One FBP kernel serves both the conventional-CT arm and the phase-retrieval
pipeline, so any difference between reconstructions comes from how their
inputs were prepared, never from the inversion itself.

Geometry: the object rotates by theta about +y (right handed); a projection
at theta is a line integral along z of the rotated object, sampled on the
image x axis.  A point at object coordinates (x, z) therefore projects to
detector coordinate ``s = x cos(theta) + z sin(theta)``, which is the
classic Radon parametrization per fixed-y slice.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.fft import next_fast_len

from .numerics import Grid3
from .utils import fixed_chunks, run_chunked

__all__ = ["ramp_response", "filter_sinogram", "fbp_slice", "fbp_volume"]

FILTERS = ("ramlak", "hann")


def ramp_response(n: int, spacing: float, window: str = "ramlak") -> np.ndarray:
    """Frequency response of the band-limited ramp filter on ``n`` samples.

    Built by transforming the exact discrete-space ramp kernel
    (1/(4 d^2) at 0, -1/(pi m d)^2 at odd lags) rather than sampling |q|,
    which keeps the DC term of the reconstruction unbiased.  ``window``
    optionally apodizes with a Hann taper.
    """
    if window not in FILTERS:
        raise ValueError(f"unknown filter window {window!r}, expected one of {FILTERS}")
    m = np.fft.fftfreq(n, 1.0 / n)  # integer lags in FFT order
    kernel = np.zeros(n)
    kernel[0] = 1.0 / (4.0 * spacing**2)
    odd = (np.abs(m) % 2) == 1
    kernel[odd] = -1.0 / (np.pi * m[odd] * spacing) ** 2
    response = np.real(np.fft.fft(kernel)) * spacing
    if window == "hann":
        q = np.fft.fftfreq(n, spacing)
        response *= 0.5 * (1.0 + np.cos(np.pi * q / (0.5 / spacing)))
    return response


def filter_sinogram(
    sino: np.ndarray, spacing: float, window: str = "ramlak"
) -> np.ndarray:
    """Ramp-filter along the last (detector) axis with 2x zero padding."""
    n = sino.shape[-1]
    n_pad = next_fast_len(2 * n)
    response = ramp_response(n_pad, spacing, window)
    padded = np.zeros(sino.shape[:-1] + (n_pad,))
    padded[..., :n] = sino
    filtered = np.fft.ifft(np.fft.fft(padded, axis=-1) * response, axis=-1).real
    return filtered[..., :n]


def _backproject_angle(
    filtered: np.ndarray, theta: float, x_out: np.ndarray, z_out: np.ndarray,
    det_x: np.ndarray,
) -> np.ndarray:
    """Smear one filtered projection ``(ny, ndet)`` over the (z, x) plane.

    Returns ``(nz, nx, ny)``; linear interpolation in the detector
    coordinate, zero outside the detector.
    """
    s = z_out[:, None] * math.sin(theta) + x_out[None, :] * math.cos(theta)
    pos = (s - det_x[0]) / (det_x[1] - det_x[0])
    i0 = np.floor(pos).astype(np.intp)
    frac = pos - i0
    ndet = det_x.size
    valid0 = (i0 >= 0) & (i0 < ndet)
    valid1 = (i0 + 1 >= 0) & (i0 + 1 < ndet)
    i0c = np.clip(i0, 0, ndet - 1)
    i1c = np.clip(i0 + 1, 0, ndet - 1)
    proj = filtered.T  # (ndet, ny)
    w0 = np.where(valid0, 1.0 - frac, 0.0)[..., None]
    w1 = np.where(valid1, frac, 0.0)[..., None]
    return w0 * proj[i0c] + w1 * proj[i1c]


def fbp_slice(
    sino: np.ndarray,
    angles: np.ndarray,
    spacing: float,
    x_out: np.ndarray,
    z_out: np.ndarray,
    window: str = "ramlak",
) -> np.ndarray:
    """2D FBP of a single sinogram ``(n_angles, ndet)`` onto a (z, x) grid."""
    vol = fbp_volume(sino[:, None, :], angles, spacing, x_out, z_out, window=window)
    return vol[:, 0, :]


def fbp_volume(
    sinos: np.ndarray,
    angles: np.ndarray,
    spacing: float,
    x_out: np.ndarray,
    z_out: np.ndarray,
    window: str = "ramlak",
    threads: int = 1,
) -> np.ndarray:
    """Slice-by-slice FBP of a stack of projections.

    Parameters
    ----------
    sinos : ndarray, shape (n_angles, ny, ndet)
        Line-integral images; the detector coordinate is the image x axis.
    angles : ndarray
        Uniformly spaced rotation angles covering [0, 2 pi) (or [0, pi)).
    spacing : float
        Detector pixel size (same for the output grid axes).
    x_out, z_out : ndarray
        Output grid coordinates in the rotation-center frame.
    window : str
        "ramlak" or "hann".
    threads : int
        Worker threads.  Results are reduced in a fixed chunk order, so the
        output is bit-identical for any thread count.

    Returns
    -------
    ndarray, shape (len(z_out), ny, len(x_out))
    """
    sinos = np.asarray(sinos, dtype=float)
    if sinos.ndim != 3:
        raise ValueError(f"expected (n_angles, ny, ndet) sinograms, got {sinos.shape}")
    angles = np.asarray(angles, dtype=float)
    if angles.size != sinos.shape[0]:
        raise ValueError("angle count does not match the sinogram stack")
    if angles.size > 1:
        steps = np.diff(angles)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=0, atol=1e-9):
            raise ValueError("angles must be strictly increasing with uniform step")
        dtheta = float(steps[0])
    else:
        dtheta = math.pi
    span = dtheta * angles.size
    # Full-circle data covers every ray twice; average the two half turns.
    scale = dtheta / 2.0 if span > math.pi * 1.5 else dtheta

    filtered = filter_sinogram(sinos, spacing, window)
    det_x = (np.arange(sinos.shape[-1]) - sinos.shape[-1] // 2) * spacing

    def do_chunk(chunk: range) -> np.ndarray:
        part = np.zeros((z_out.size, x_out.size, sinos.shape[1]))
        for a in chunk:
            part += _backproject_angle(filtered[a], angles[a], x_out, z_out, det_x)
        return part

    chunks = fixed_chunks(angles.size, 16)
    partials = run_chunked(do_chunk, chunks, threads)
    acc = partials[0]
    for part in partials[1:]:
        acc += part
    return np.ascontiguousarray(np.transpose(acc * scale, (0, 2, 1)))


def fbp_volume_on_grid(
    sinos: np.ndarray,
    angles: np.ndarray,
    grid: Grid3,
    window: str = "ramlak",
    threads: int = 1,
) -> np.ndarray:
    """:func:`fbp_volume` targeting a Grid3's (z, y, x) sampling."""
    if grid.dx != grid.dy:
        raise ValueError("FBP output grids must have dx == dy")
    return fbp_volume(
        sinos, angles, grid.dx, grid.grid2.x, grid.z, window=window, threads=threads
    )
