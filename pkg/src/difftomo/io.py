"""Flat-binary array formats with text metadata sidecars, and PGM images.

Volumes are written little-endian float64, C order with z as the slowest
axis, next to a ``key = value`` sidecar describing the grid, units and
provenance.  Floats in sidecars are serialized with ``repr`` so round trips
are bit exact.
"""

from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np

from .numerics import Grid3

__all__ = [
    "write_volume",
    "read_volume",
    "write_mask",
    "read_mask",
    "write_pgm",
]


def write_volume(
    volume: np.ndarray,
    grid: Grid3,
    path: str | Path,
    units: str = "volts",
    provenance: str = "",
) -> None:
    """Write ``<path>.f64`` and ``<path>.meta`` describing a (nz, ny, nx) volume."""
    grid.check_volume(volume)
    path = Path(path)
    np.ascontiguousarray(volume, dtype="<f8").tofile(path.with_suffix(".f64"))
    lines = [
        "[grid]",
        f"nx = {grid.nx}",
        f"ny = {grid.ny}",
        f"nz = {grid.nz}",
        f"dx = {grid.dx!r}",
        f"dy = {grid.dy!r}",
        f"dz = {grid.dz!r}",
        f"z0 = {grid.z0!r}",
        "",
        "[volume]",
        f"units = {units}",
        "order = z-major row-major little-endian float64",
        f"provenance = {provenance}",
        "",
    ]
    path.with_suffix(".meta").write_text("\n".join(lines))


def read_volume(path: str | Path) -> tuple[np.ndarray, Grid3]:
    """Read a volume written by :func:`write_volume`."""
    path = Path(path)
    cfg = configparser.ConfigParser()
    cfg.read_string(path.with_suffix(".meta").read_text())
    grid = Grid3(
        nx=cfg.getint("grid", "nx"),
        ny=cfg.getint("grid", "ny"),
        nz=cfg.getint("grid", "nz"),
        dx=cfg.getfloat("grid", "dx"),
        dy=cfg.getfloat("grid", "dy"),
        dz=cfg.getfloat("grid", "dz"),
        z0=cfg.getfloat("grid", "z0"),
    )
    volume = np.fromfile(path.with_suffix(".f64"), dtype="<f8").reshape(grid.shape)
    return volume, grid


def write_mask(mask: np.ndarray, path: str | Path) -> None:
    """Write a boolean array as packed uint8 (1 byte per voxel)."""
    np.ascontiguousarray(mask.astype(np.uint8)).tofile(Path(path))


def read_mask(path: str | Path, shape: tuple[int, ...]) -> np.ndarray:
    return np.fromfile(Path(path), dtype=np.uint8).reshape(shape).astype(bool)


def write_pgm(
    values: np.ndarray, path: str | Path, symmetric: bool = False
) -> None:
    """8-bit binary PGM (P5) of a real 2D array.

    ``symmetric=True`` maps zero to mid-gray with a range of +-max|values|,
    appropriate for signed contrast or error maps; the default stretches
    min..max to 0..255.
    """
    if values.ndim != 2:
        raise ValueError(f"PGM output needs a 2D array, got shape {values.shape}")
    v = np.asarray(values, dtype=float)
    if symmetric:
        span = np.abs(v).max()
        lo, hi = -span, span
    else:
        lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        scaled = np.zeros_like(v)
    else:
        scaled = (v - lo) / (hi - lo) * 255.0
    data = np.clip(np.round(scaled), 0, 255).astype(np.uint8)
    header = f"P5\n{v.shape[1]} {v.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())
