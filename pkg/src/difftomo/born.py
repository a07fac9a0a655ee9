"""Single-scattering (first Born) defocus contrast models.

All models here are linear in the potential and produce the contrast
function ``K = 1 - I / I_in``.  Because K is a deficit, the weak-phase
spectral response carries one global sign relative to the intensity form:

    F K (q, z) = WEAK_PHASE_SIGN * 2 sin(pi lambda z q^2) * F phi (q)

with ``phi`` the projected phase.  :data:`WEAK_PHASE_SIGN` owns that sign;
the tomographic solvers import it rather than restating it.

Three granularities of the same physics are provided, plus a composite
mode that isolates multiple scattering:

* :func:`forward_thin`: the whole object in one plane (thin object);
* :func:`sliced_contrast`: incoherent ("kinematical") sum over M slices,
  each diffracting from its own depth;
* :func:`born_contrast`: the continuum limit of the slice sum, evaluated
  per atom in closed form (a Gaussian z profile against the Fresnel sine
  kernel integrates exactly);
* :func:`per_atom_composite`: full multislice per atom, contrasts added
  incoherently, so Fresnel diffraction is kept but atom-to-atom multiple
  scattering is discarded.

Defocus is always the distance from the rotation-center plane.
"""

from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import Beam, Grid2, Grid3, ft2, ift2
from .phantom import Atom, Phantom, rotate_y, slab_weights
from .propagation import multislice

__all__ = [
    "WEAK_PHASE_SIGN",
    "ContrastImage",
    "ProjectionSet",
    "contrast_from_wavefield",
    "forward_thin",
    "sliced_contrast",
    "born_contrast",
    "per_atom_composite",
    "save_projection_set",
    "load_projection_set",
]

# K = 1 - I/I_in flips the sign of the intensity-spectrum response once.
WEAK_PHASE_SIGN = -1.0

# |phi| above this is outside the weak-phase regime (second-order terms
# reach several percent); linear models warn but still evaluate.
WEAK_PHASE_WARN = 0.5


@dataclass(frozen=True)
class ContrastImage:
    """Real contrast image ``K(r, z) = 1 - I / I_in`` with its provenance."""

    values: np.ndarray
    grid: Grid2
    beam: Beam
    defocus: float
    theta: float
    model: str

    def __post_init__(self) -> None:
        self.grid.check_field(self.values)
        if np.iscomplexobj(self.values):
            raise ValueError("contrast images are real valued")

    def spectrum(self) -> np.ndarray:
        return ft2(self.values, self.grid)

    def matches(self, other: "ContrastImage") -> bool:
        return (
            self.grid == other.grid
            and self.beam == other.beam
            and self.defocus == other.defocus
        )


def contrast_from_wavefield(w, model: str) -> ContrastImage:
    """``K = 1 - |U|^2 / I_in`` of a wavefield at its current plane."""
    values = 1.0 - w.intensity / w.beam.i_in
    return ContrastImage(
        values=values, grid=w.grid, beam=w.beam, defocus=w.z, theta=0.0, model=model
    )


def forward_thin(
    phi: np.ndarray, grid: Grid2, beam: Beam, defocus: float
) -> ContrastImage:
    """Weak-phase thin-object contrast at ``defocus`` from the object plane.

    ``phi`` is the projected phase map (radians).  At ``defocus = 0`` a pure
    phase object is invisible and K vanishes identically.
    """
    grid.check_field(phi)
    peak = float(np.max(np.abs(phi))) if phi.size else 0.0
    if peak > WEAK_PHASE_WARN:
        warnings.warn(
            f"peak phase {peak:.3g} rad exceeds the weak-phase regime "
            f"(> {WEAK_PHASE_WARN} rad); the linear model is inaccurate",
            stacklevel=2,
        )
    ctf = np.sin(np.pi * beam.lambda_a * defocus * grid.q2)
    spec = WEAK_PHASE_SIGN * 2.0 * ctf * ft2(phi, grid)
    return ContrastImage(
        values=ift2(spec, grid).real,
        grid=grid,
        beam=beam,
        defocus=defocus,
        theta=0.0,
        model="thin",
    )


def _transverse_spectra(
    grid: Grid2, x: np.ndarray, y: np.ndarray, v0: np.ndarray, sigma: np.ndarray
) -> list[np.ndarray]:
    """Per-atom ``F2`` of the transverse Gaussian, ``v0 2 pi s^2 e^{-2 pi^2 s^2 q^2} e^{-i2pi q.r}``."""
    qx = grid.qx[None, :]
    qy = grid.qy[:, None]
    q2 = grid.q2
    out = []
    for i in range(len(v0)):
        amp = v0[i] * 2.0 * np.pi * sigma[i] ** 2
        out.append(
            amp
            * np.exp(-2.0 * np.pi**2 * sigma[i] ** 2 * q2)
            * np.exp(-2j * np.pi * (qx * x[i] + qy * y[i]))
        )
    return out


def born_contrast(
    phantom: Phantom,
    grid: Grid3,
    beam: Beam,
    theta: float,
    defocus: float,
    method: str = "closed",
) -> ContrastImage:
    """Continuum first-Born contrast of the rotated phantom.

    Each atom's Gaussian depth profile is integrated against the Fresnel
    sine kernel in closed form,

        int sin(pi lambda (z - z') q^2) g_atom(z') dz'
            = sigma sqrt(2 pi) e^{-(pi lambda q^2 sigma)^2 / 2}
              sin(pi lambda (z - z_atom) q^2),

    so the result is the exact M -> infinity limit of
    :func:`sliced_contrast`.  ``method="quadrature"`` evaluates the same
    integral by Gauss-Hermite quadrature instead, as an independent check.
    """
    if method not in ("closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    g2 = grid.grid2
    rot = rotate_y(phantom, theta)
    x, y, zeta, v0, sigma = rot._arrays
    lam, e_volts = beam.lambda_a, beam.e_volts
    q2 = g2.q2
    spec = np.zeros(g2.shape, dtype=complex)
    trans = _transverse_spectra(g2, x, y, v0, sigma)
    if method == "quadrature":
        nodes, weights = np.polynomial.hermite.hermgauss(48)
    for i in range(len(v0)):
        if method == "closed":
            depth = (
                sigma[i]
                * math.sqrt(2.0 * math.pi)
                * np.exp(-0.5 * (np.pi * lam * q2 * sigma[i]) ** 2)
                * np.sin(np.pi * lam * (defocus - zeta[i]) * q2)
            )
        else:
            depth = np.zeros_like(q2)
            for u, wgt in zip(nodes, weights):
                zp = zeta[i] + math.sqrt(2.0) * sigma[i] * u
                depth += wgt * np.sin(np.pi * lam * (defocus - zp) * q2)
            depth *= math.sqrt(2.0) * sigma[i]
        spec += trans[i] * depth
    spec *= WEAK_PHASE_SIGN * 2.0 * np.pi / (lam * e_volts)
    return ContrastImage(
        values=ift2(spec, g2).real,
        grid=g2,
        beam=beam,
        defocus=defocus,
        theta=theta,
        model="born",
    )


def sliced_contrast(
    phantom: Phantom,
    grid: Grid3,
    beam: Beam,
    theta: float,
    defocus: float,
    m_slices: int,
) -> ContrastImage:
    """Incoherent sum of thin-slice contrasts over ``m_slices`` slabs.

    The slab is split uniformly; each slice's projected phase (exact per
    atom) diffracts from the slice's upstream edge.  ``m_slices = 1``
    degenerates to :func:`forward_thin` of the full projected phase
    referenced to the upstream slab face.
    """
    if m_slices < 1:
        raise ValueError(f"m_slices must be >= 1, got {m_slices!r}")
    g2 = grid.grid2
    rot = rotate_y(phantom, theta)
    x, y, zeta, v0, sigma = rot._arrays
    lam, e_volts = beam.lambda_a, beam.e_volts
    half = rot.thickness / 2.0
    edges = np.linspace(-half, half, m_slices + 1)
    q2 = g2.q2
    trans = _transverse_spectra(g2, x, y, v0, sigma)
    phase_scale = np.pi / (lam * e_volts)
    spec = np.zeros(g2.shape, dtype=complex)
    for m in range(m_slices):
        ctf = np.sin(np.pi * lam * (defocus - edges[m]) * q2)
        phi_m = np.zeros(g2.shape, dtype=complex)
        if len(v0):
            weights = slab_weights(zeta, sigma, edges[m], edges[m + 1])
            for i in range(len(v0)):
                if weights[i] > 1e-300:
                    phi_m += weights[i] * trans[i]
        spec += ctf * (phase_scale * phi_m)
    spec *= WEAK_PHASE_SIGN * 2.0
    return ContrastImage(
        values=ift2(spec, g2).real,
        grid=g2,
        beam=beam,
        defocus=defocus,
        theta=theta,
        model="sliced",
    )


def per_atom_composite(
    phantom: Phantom,
    grid: Grid3,
    beam: Beam,
    theta: float,
    defocus: float,
    band_limit: bool = True,
) -> ContrastImage:
    """Sum of single-atom multislice contrasts (no atom-to-atom scattering).

    Each atom is imaged alone with the full multislice model in the shared
    slab geometry and the contrast deviations are added.  Compared with the
    full multislice image of the same phantom, the difference is a direct
    measurement of multiple scattering between atoms.
    """
    g2 = grid.grid2
    values = np.zeros(g2.shape)
    for atom in phantom.atoms:
        single = Phantom(atoms=(atom,), z0=phantom.z0)
        w = multislice(
            single, grid, beam, theta, exit_defocus=defocus, band_limit=band_limit
        )
        values += 1.0 - w.intensity / beam.i_in
    return ContrastImage(
        values=values,
        grid=g2,
        beam=beam,
        defocus=defocus,
        theta=theta,
        model="per_atom",
    )


@dataclass(frozen=True)
class ProjectionSet:
    """Contrast images over a uniform angle sweep at one defocus."""

    images: tuple[ContrastImage, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "images", tuple(self.images))
        if not self.images:
            raise ValueError("projection set must contain at least one image")
        first = self.images[0]
        for img in self.images[1:]:
            if not img.matches(first) or img.model != first.model:
                raise ValueError("projection set images disagree in grid/beam/defocus/model")
        angles = self.angles
        if len(angles) > 1:
            steps = np.diff(angles)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=0, atol=1e-9):
                raise ValueError("angles must be strictly increasing with uniform step")

    @property
    def angles(self) -> np.ndarray:
        return np.array([img.theta for img in self.images])

    @property
    def grid(self) -> Grid2:
        return self.images[0].grid

    @property
    def beam(self) -> Beam:
        return self.images[0].beam

    @property
    def defocus(self) -> float:
        return self.images[0].defocus

    @property
    def model(self) -> str:
        return self.images[0].model

    def partner_index(self, i: int, tol: float = 1e-9) -> int | None:
        """Index of the image at ``theta + pi (mod 2 pi)``, if present."""
        target = (self.images[i].theta + np.pi) % (2.0 * np.pi)
        angles = self.angles % (2.0 * np.pi)
        delta = np.abs((angles - target + np.pi) % (2.0 * np.pi) - np.pi)
        j = int(np.argmin(delta))
        return j if delta[j] <= tol else None

    def require_pairs(self) -> list[tuple[int, int]]:
        """All (i, partner) pairs; raises listing the angles without one."""
        pairs = []
        missing = []
        for i in range(len(self.images)):
            j = self.partner_index(i)
            if j is None:
                missing.append(self.images[i].theta)
            else:
                pairs.append((i, j))
        if missing:
            listed = ", ".join(f"{a:.6g}" for a in missing[:8])
            more = "" if len(missing) <= 8 else f" (+{len(missing) - 8} more)"
            raise ValueError(
                f"projection set lacks the 180 degree partner of angles: {listed}{more}"
            )
        return pairs


def save_projection_set(ps: ProjectionSet, directory: str | Path) -> None:
    """Write a directory of flat float64 images plus a text metadata file.

    Layout: ``meta.txt`` (key = value sections) and one little-endian
    row-major ``img_NNNNN.f64`` per angle.  The round trip through
    :func:`load_projection_set` is bit exact.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    g = ps.grid
    b = ps.beam
    lines = [
        "[grid]",
        f"nx = {g.nx}",
        f"ny = {g.ny}",
        f"dx = {g.dx!r}",
        f"dy = {g.dy!r}",
        "",
        "[beam]",
        f"e_volts = {b.e_volts!r}",
        f"lambda_a = {b.lambda_a!r}",
        f"i_in = {b.i_in!r}",
        "",
        "[set]",
        f"defocus = {ps.defocus!r}",
        f"model = {ps.model}",
        f"n_angles = {len(ps.images)}",
        "",
        "[angles]",
        "values = " + ", ".join(repr(img.theta) for img in ps.images),
        "",
    ]
    (directory / "meta.txt").write_text("\n".join(lines))
    for i, img in enumerate(ps.images):
        np.ascontiguousarray(img.values, dtype="<f8").tofile(
            directory / f"img_{i:05d}.f64"
        )


def load_projection_set(directory: str | Path) -> ProjectionSet:
    """Read a directory written by :func:`save_projection_set`."""
    directory = Path(directory)
    meta_path = directory / "meta.txt"
    if not meta_path.is_file():
        raise FileNotFoundError(f"no projection-set metadata at {meta_path}")
    cfg = configparser.ConfigParser()
    cfg.read_string(meta_path.read_text())
    grid = Grid2(
        nx=cfg.getint("grid", "nx"),
        ny=cfg.getint("grid", "ny"),
        dx=cfg.getfloat("grid", "dx"),
        dy=cfg.getfloat("grid", "dy"),
    )
    beam = Beam(
        e_volts=cfg.getfloat("beam", "e_volts"),
        lambda_a=cfg.getfloat("beam", "lambda_a"),
        i_in=cfg.getfloat("beam", "i_in"),
    )
    defocus = cfg.getfloat("set", "defocus")
    model = cfg.get("set", "model")
    n = cfg.getint("set", "n_angles")
    angles = [float(v) for v in cfg.get("angles", "values").split(",")]
    if len(angles) != n:
        raise ValueError(f"{meta_path}: angle list length {len(angles)} != {n}")
    images = []
    for i, theta in enumerate(angles):
        raw = np.fromfile(directory / f"img_{i:05d}.f64", dtype="<f8")
        images.append(
            ContrastImage(
                values=raw.reshape(grid.shape),
                grid=grid,
                beam=beam,
                defocus=defocus,
                theta=theta,
                model=model,
            )
        )
    return ProjectionSet(images=tuple(images))
