"""Error maps and summary statistics for image and volume comparisons.

Relative image errors are normalized by the incident intensity (contrast
percent on a unit background), not by the pointwise reference, so the
aggregates of weak-contrast images stay meaningful.  Volume comparisons can
optionally fit an affine gain/offset first, for reconstructions that are
only defined up to scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Grid3
from .phantom import Phantom

__all__ = [
    "ErrorReport",
    "image_error",
    "volume_error",
    "atom_peak_values",
    "report_text",
    "report_keyvalues",
]


@dataclass
class ErrorReport:
    """Aggregate comparison of a test array against a reference."""

    mean_rel_pct: float
    max_rel_pct: float
    rms: float
    correlation: float
    mean_rel_object_pct: float | None = None
    atom_peaks: tuple[float, ...] | None = None
    error_map: np.ndarray | None = field(default=None, repr=False)
    thresholded_map: np.ndarray | None = field(default=None, repr=False)


def _correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = a.ravel() - a.mean()
    b = b.ravel() - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float(np.dot(a, b) / denom)


def image_error(
    test: np.ndarray,
    reference: np.ndarray,
    i_in: float = 1.0,
    display_threshold_pct: float | None = None,
) -> ErrorReport:
    """Per-pixel relative intensity error ``|test - ref| / i_in``.

    ``mean_rel_object_pct`` restricts the average to pixels where the
    reference deviates visibly from the background (over 1e-3 of the peak
    deviation); both flavors of the mean are reported since conventions
    differ.  ``display_threshold_pct`` additionally emits a copy of the
    error map with everything below the threshold blanked, for figures.
    """
    if test.shape != reference.shape:
        raise ValueError(f"shape mismatch: {test.shape} vs {reference.shape}")
    err = np.abs(test - reference) / i_in
    dev = np.abs(reference - reference.mean())
    obj = dev > 1e-3 * dev.max() if dev.max() > 0 else np.zeros_like(dev, dtype=bool)
    thresholded = None
    if display_threshold_pct is not None:
        thresholded = np.where(err * 100.0 >= display_threshold_pct, err * 100.0, 0.0)
    return ErrorReport(
        mean_rel_pct=float(err.mean() * 100.0),
        max_rel_pct=float(err.max() * 100.0),
        rms=float(np.sqrt(np.mean((test - reference) ** 2))),
        correlation=_correlation(test, reference),
        mean_rel_object_pct=float(err[obj].mean() * 100.0) if obj.any() else None,
        error_map=err,
        thresholded_map=thresholded,
    )


def fit_affine(test: np.ndarray, reference: np.ndarray) -> tuple[float, float]:
    """Least-squares (gain, offset) mapping test onto reference."""
    t = test.ravel()
    r = reference.ravel()
    var = np.var(t)
    if var == 0.0:
        return 0.0, float(r.mean())
    gain = float(np.cov(t, r, bias=True)[0, 1] / var)
    return gain, float(r.mean() - gain * t.mean())


def volume_error(
    test: np.ndarray,
    reference: np.ndarray,
    atom_sites: np.ndarray | None = None,
    fit: str = "none",
) -> ErrorReport:
    """Volume comparison with optional affine prefit.

    ``fit="affine"`` rescales the test volume by the least-squares gain and
    offset before computing the error, for outputs in arbitrary units.
    ``atom_sites`` is an (n, 3) integer array of (iz, iy, ix) voxels; the
    report then carries each site's signed peak (the extremum of largest
    magnitude within the surrounding 3x3x3 neighborhood, taken from the
    unfitted test volume).
    """
    if test.shape != reference.shape:
        raise ValueError(f"shape mismatch: {test.shape} vs {reference.shape}")
    if fit not in ("none", "affine"):
        raise ValueError(f"unknown fit mode {fit!r}")
    peaks = None
    if atom_sites is not None:
        peaks = atom_peak_values(test, np.asarray(atom_sites))
    fitted = test
    if fit == "affine":
        gain, offset = fit_affine(test, reference)
        fitted = gain * test + offset
    err = np.abs(fitted - reference)
    scale = np.abs(reference).max()
    rel = err / scale if scale > 0 else err
    return ErrorReport(
        mean_rel_pct=float(rel.mean() * 100.0),
        max_rel_pct=float(rel.max() * 100.0),
        rms=float(np.sqrt(np.mean((fitted - reference) ** 2))),
        correlation=_correlation(test, reference),
        atom_peaks=tuple(peaks) if peaks is not None else None,
    )


def atom_peak_values(volume: np.ndarray, sites: np.ndarray) -> list[float]:
    """Signed extremum within 3x3x3 of each (iz, iy, ix) site."""
    out = []
    nz, ny, nx = volume.shape
    for iz, iy, ix in sites:
        block = volume[
            max(iz - 1, 0) : min(iz + 2, nz),
            max(iy - 1, 0) : min(iy + 2, ny),
            max(ix - 1, 0) : min(ix + 2, nx),
        ]
        flat = block.ravel()
        out.append(float(flat[np.argmax(np.abs(flat))]))
    return out


def atom_sites_on_grid(phantom: Phantom, grid: Grid3) -> np.ndarray:
    """Nearest (iz, iy, ix) voxel of every atom, in the rotation-center frame."""
    sites = []
    x, y, zeta, _, _ = phantom._arrays
    for i in range(len(x)):
        ix = int(round(x[i] / grid.dx)) + grid.nx // 2
        iy = int(round(y[i] / grid.dy)) + grid.ny // 2
        iz = int(round(zeta[i] / grid.dz)) + grid.nz // 2
        sites.append((iz, iy, ix))
    return np.array(sites, dtype=int)


def report_text(report: ErrorReport, title: str = "comparison") -> str:
    """Human-readable multi-line rendering."""
    lines = [
        f"{title}:",
        f"  mean relative error : {report.mean_rel_pct:.4g} %",
        f"  max relative error  : {report.max_rel_pct:.4g} %",
        f"  rms error           : {report.rms:.6g}",
        f"  correlation         : {report.correlation:.6f}",
    ]
    if report.mean_rel_object_pct is not None:
        lines.append(f"  mean error (object) : {report.mean_rel_object_pct:.4g} %")
    if report.atom_peaks is not None:
        peaks = ", ".join(f"{p:+.4g}" for p in report.atom_peaks)
        lines.append(f"  atom peaks          : {peaks}")
    return "\n".join(lines) + "\n"


def report_keyvalues(report: ErrorReport, prefix: str = "") -> str:
    """Machine-readable ``key = value`` rendering."""
    kv = [
        (f"{prefix}mean_rel_pct", repr(report.mean_rel_pct)),
        (f"{prefix}max_rel_pct", repr(report.max_rel_pct)),
        (f"{prefix}rms", repr(report.rms)),
        (f"{prefix}correlation", repr(report.correlation)),
    ]
    if report.mean_rel_object_pct is not None:
        kv.append((f"{prefix}mean_rel_object_pct", repr(report.mean_rel_object_pct)))
    if report.atom_peaks is not None:
        kv.append(
            (f"{prefix}atom_peaks", ", ".join(repr(p) for p in report.atom_peaks))
        )
    return "\n".join(f"{k} = {v}" for k, v in kv) + "\n"
