"""Synthetic electrostatic potentials built from isotropic Gaussian scatterers.

A phantom is a list of Gaussian blobs inside a slab ``[z0, 0]``.  Gaussian
atoms keep every quantity analytic in both real and reciprocal space, which
is what makes the reconstruction oracles in this package exact.  They are a
deliberate surrogate: per-species scattering physics is out of scope, so the
amplitudes in volts are tunable knobs, not tabulated form factors.

All rotations are about the y axis through the slab center ``z0 / 2``, and
all phases of the analytic transforms are referenced to that center, so a
phantom, its rotations and its reconstructions share one coordinate frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import erf

from .numerics import Grid2, Grid3

__all__ = [
    "Atom",
    "Phantom",
    "potential_on_grid",
    "analytic_ft3",
    "rotate_y",
    "line_projection",
    "load_phantom",
    "save_phantom",
    "random_phantom",
    "DEFAULT_SPECIES",
]

# z margin (in sigmas) kept between every atom and the slab faces.
SLAB_MARGIN_SIGMAS = 3.0

# Surrogate (amplitude [V], width [A]) pairs for species files.  These are
# plausibility-scaled placeholders, not physical scattering factors.
DEFAULT_SPECIES: dict[str, tuple[float, float]] = {
    "H": (20.0, 0.5),
    "C": (50.0, 0.8),
    "N": (55.0, 0.8),
    "O": (60.0, 0.8),
    "P": (90.0, 0.9),
    "S": (95.0, 0.9),
}


@dataclass(frozen=True)
class Atom:
    """One Gaussian blob: ``V(r) = v0 * exp(-|r - pos|^2 / (2 sigma^2))``."""

    x: float
    y: float
    z: float
    v0: float
    sigma: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z", "v0", "sigma"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.v0 <= 0:
            raise ValueError(f"atom amplitude must be positive, got {self.v0!r}")
        if self.sigma <= 0:
            raise ValueError(f"atom width must be positive, got {self.sigma!r}")


@dataclass(frozen=True)
class Phantom:
    """Gaussian atoms inside the slab ``[z0, 0]``.

    Every atom must keep a 3 sigma margin to both slab faces; the margin is
    what lets forward models treat the potential as exactly zero outside the
    slab.
    """

    atoms: tuple[Atom, ...]
    z0: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if not self.z0 < 0:
            raise ValueError(f"slab origin z0 must be negative, got {self.z0!r}")
        for i, atom in enumerate(self.atoms):
            margin = SLAB_MARGIN_SIGMAS * atom.sigma
            if atom.z - margin < self.z0 or atom.z + margin > 0.0:
                raise ValueError(
                    f"atom {i} at z={atom.z!r} violates the {margin!r} A margin "
                    f"to the slab [{self.z0!r}, 0]"
                )

    @property
    def thickness(self) -> float:
        return -self.z0

    @property
    def center_z(self) -> float:
        """Rotation-center plane, halfway through the slab."""
        return 0.5 * self.z0

    @cached_property
    def _arrays(self) -> tuple[np.ndarray, ...]:
        """(x, y, zeta, v0, sigma) with zeta measured from the slab center."""
        if not self.atoms:
            empty = np.empty(0)
            return (empty,) * 5
        x = np.array([a.x for a in self.atoms])
        y = np.array([a.y for a in self.atoms])
        zeta = np.array([a.z for a in self.atoms]) - self.center_z
        v0 = np.array([a.v0 for a in self.atoms])
        sigma = np.array([a.sigma for a in self.atoms])
        return x, y, zeta, v0, sigma


def potential_on_grid(phantom: Phantom, grid: Grid3) -> np.ndarray:
    """Sample the potential on a grid centered on the rotation axis.

    Returns a real ``(nz, ny, nx)`` array in volts.  Raises if any atom
    (including its 3 sigma support) does not fit the grid.
    """
    x, y, zeta, v0, sigma = phantom._arrays
    vol = np.zeros(grid.shape)
    if len(v0) == 0:
        return vol
    gx, gy, gz = grid.grid2.x, grid.grid2.y, grid.z
    for i in range(len(v0)):
        m = SLAB_MARGIN_SIGMAS * sigma[i]
        if (
            x[i] - m < gx[0]
            or x[i] + m > gx[-1]
            or y[i] - m < gy[0]
            or y[i] + m > gy[-1]
            or zeta[i] - m < gz[0]
            or zeta[i] + m > gz[-1]
        ):
            raise ValueError(
                f"atom {i} at (x={x[i]!r}, y={y[i]!r}, z-center={zeta[i]!r}) does "
                "not fit the grid with a 3 sigma margin"
            )
        s2 = 2.0 * sigma[i] ** 2
        ex = np.exp(-((gx - x[i]) ** 2) / s2)
        ey = np.exp(-((gy - y[i]) ** 2) / s2)
        ez = np.exp(-((gz - zeta[i]) ** 2) / s2)
        vol += v0[i] * ez[:, None, None] * ey[None, :, None] * ex[None, None, :]
    return vol


def analytic_ft3(
    phantom: Phantom, qx: np.ndarray, qy: np.ndarray, qz: np.ndarray
) -> np.ndarray:
    """Closed-form 3D Fourier transform of the potential.

    ``sum v0 (2 pi sigma^2)^{3/2} exp(-2 pi^2 sigma^2 |q|^2)
    exp(-i 2 pi q . r_atom)`` with atom positions taken relative to the
    rotation center, matching the frame of :func:`potential_on_grid` and of
    the tomographic reconstructions.  Arguments broadcast together.
    """
    qx, qy, qz = np.broadcast_arrays(qx, qy, qz)
    out = np.zeros(qx.shape, dtype=complex)
    x, y, zeta, v0, sigma = phantom._arrays
    q2 = qx**2 + qy**2 + qz**2
    for i in range(len(v0)):
        amp = v0[i] * (2.0 * np.pi * sigma[i] ** 2) ** 1.5
        out += (
            amp
            * np.exp(-2.0 * np.pi**2 * sigma[i] ** 2 * q2)
            * np.exp(-2j * np.pi * (qx * x[i] + qy * y[i] + qz * zeta[i]))
        )
    return out


def rotate_y(phantom: Phantom, theta: float) -> Phantom:
    """Rotate the phantom by ``theta`` about the y axis through the slab center.

    Right-handed about +y: ``theta = pi/2`` carries +z into +x.  The slab is
    recomputed to cover the rotated atoms (never shrinking below the original
    thickness, so ``theta = 0`` is an exact identity) and re-anchored to
    ``[z0', 0]``.
    """
    if not phantom.atoms:
        return Phantom(atoms=(), z0=phantom.z0)
    c, s = math.cos(theta), math.sin(theta)
    x, y, zeta, v0, sigma = phantom._arrays
    xr = c * x + s * zeta
    zr = -s * x + c * zeta
    half = max(phantom.thickness / 2.0, np.max(np.abs(zr) + SLAB_MARGIN_SIGMAS * sigma))
    z0_new = -2.0 * half
    atoms = tuple(
        Atom(x=xr[i], y=y[i], z=zr[i] - half, v0=v0[i], sigma=sigma[i])
        for i in range(len(v0))
    )
    return Phantom(atoms=atoms, z0=z0_new)


def line_projection(phantom: Phantom, grid: Grid2, theta: float) -> np.ndarray:
    """Straight-line integral of the rotated potential along z, in volt * A.

    This is the analytic sinogram generator for the conventional-CT ground
    truth: ``sum v0 sigma sqrt(2 pi) exp(-|r_t - r_t,atom|^2 / (2 sigma^2))``
    evaluated on the transverse grid.
    """
    rot = rotate_y(phantom, theta)
    x, y, _, v0, sigma = rot._arrays
    out = np.zeros(grid.shape)
    gx, gy = grid.x, grid.y
    for i in range(len(v0)):
        s2 = 2.0 * sigma[i] ** 2
        ex = np.exp(-((gx - x[i]) ** 2) / s2)
        ey = np.exp(-((gy - y[i]) ** 2) / s2)
        out += v0[i] * sigma[i] * math.sqrt(2.0 * math.pi) * ey[:, None] * ex[None, :]
    return out


def slab_weights(
    atom_zeta: np.ndarray, atom_sigma: np.ndarray, z_lo: float, z_hi: float
) -> np.ndarray:
    """Per-atom ``int_{z_lo}^{z_hi} exp(-(z - zeta)^2 / (2 sigma^2)) dz``."""
    root2 = math.sqrt(2.0)
    return (
        atom_sigma
        * math.sqrt(math.pi / 2.0)
        * (
            erf((z_hi - atom_zeta) / (root2 * atom_sigma))
            - erf((z_lo - atom_zeta) / (root2 * atom_sigma))
        )
    )


def _anchor(atoms: list[Atom], z0: float | None) -> Phantom:
    """Build a phantom in the [z0, 0] convention.

    A pinned ``z0`` means the coordinates are already slab-relative and are
    taken as-is.  Without one (raw coordinate files), atoms are shifted so
    the topmost sits at its 3 sigma margin below z = 0 and the slab is sized
    to the atom extent.
    """
    if not atoms:
        return Phantom(atoms=(), z0=z0 if z0 is not None else -1.0)
    if z0 is not None:
        return Phantom(atoms=tuple(atoms), z0=z0)
    top = max(a.z + SLAB_MARGIN_SIGMAS * a.sigma for a in atoms)
    shifted = [
        Atom(x=a.x, y=a.y, z=a.z - top, v0=a.v0, sigma=a.sigma) for a in atoms
    ]
    z0 = min(a.z - SLAB_MARGIN_SIGMAS * a.sigma for a in shifted)
    return Phantom(atoms=tuple(shifted), z0=z0)


def load_phantom(
    path: str | Path, species: dict[str, tuple[float, float]] | None = None
) -> Phantom:
    """Read an atom list from a whitespace-delimited text file.

    Two line formats are accepted (one per file):

    * ``x y z v0 sigma`` with lengths in angstroms and v0 in volts;
    * ``element x y z``, mapped to (v0, sigma) through ``species``
      (default :data:`DEFAULT_SPECIES`).

    ``#`` starts a comment.  A ``# slab_z0 = <value>`` comment pins the slab
    instead of deriving it from the atom extent; atoms are shifted so the
    slab upper face sits at z = 0.
    """
    species = DEFAULT_SPECIES if species is None else species
    atoms: list[Atom] = []
    z0: float | None = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if raw.lstrip().startswith("#") and "slab_z0" in raw:
            z0 = float(raw.split("=", 1)[1])
        if not line:
            continue
        parts = line.split()
        try:
            if len(parts) == 5:
                x, y, z, v0, sigma = (float(p) for p in parts)
            elif len(parts) == 4:
                elem = parts[0].capitalize()
                if elem not in species:
                    raise KeyError(f"unknown species {parts[0]!r}")
                v0, sigma = species[elem]
                x, y, z = (float(p) for p in parts[1:])
            else:
                raise ValueError("expected 5 numbers or element + 3 numbers")
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}:{lineno}: cannot parse {raw!r}: {exc}") from exc
        atoms.append(Atom(x=x, y=y, z=z, v0=v0, sigma=sigma))
    if not atoms:
        raise ValueError(f"{path}: no atoms found")
    return _anchor(atoms, z0)


def save_phantom(phantom: Phantom, path: str | Path) -> None:
    """Write the numeric atom-list format understood by :func:`load_phantom`."""
    lines = ["# x y z v0 sigma  (A, A, A, V, A)", f"# slab_z0 = {phantom.z0!r}"]
    for a in phantom.atoms:
        lines.append(f"{a.x!r} {a.y!r} {a.z!r} {a.v0!r} {a.sigma!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def random_phantom(
    n_atoms: int,
    thickness: float,
    r_trans: float,
    y_half: float,
    v0: float = 50.0,
    sigma: float = 0.8,
    seed: int = 0,
    min_separation: float = 0.0,
) -> Phantom:
    """Random phantom that stays inside the field of view at every angle.

    (x, z) positions are drawn uniformly from a disc around the rotation
    axis of radius ``min(r_trans, thickness/2 - 3 sigma)``, so rotations
    never widen the slab; y is uniform on ``[-y_half, y_half]``.
    """
    rng = np.random.default_rng(seed)
    radius = min(r_trans, thickness / 2.0 - SLAB_MARGIN_SIGMAS * sigma)
    if radius <= 0:
        raise ValueError("slab too thin for the requested atom width")
    placed: list[tuple[float, float, float]] = []
    attempts = 0
    while len(placed) < n_atoms:
        attempts += 1
        if attempts > 10000 * n_atoms:
            raise ValueError("could not place atoms with the requested separation")
        x, z = rng.uniform(-radius, radius, size=2)
        if x * x + z * z > radius * radius:
            continue
        y = rng.uniform(-y_half, y_half)
        if min_separation > 0 and any(
            (x - p[0]) ** 2 + (y - p[1]) ** 2 + (z - p[2]) ** 2 < min_separation**2
            for p in placed
        ):
            continue
        placed.append((x, y, z))
    atoms = tuple(
        Atom(x=p[0], y=p[1], z=p[2] - thickness / 2.0, v0=v0, sigma=sigma)
        for p in placed
    )
    return Phantom(atoms=atoms, z0=-thickness)
