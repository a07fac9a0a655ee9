"""Batch command-line front end.

Subcommands: ``simulate`` (forward sweeps to projection sets on disk),
``reconstruct`` (ct / ct-true / dt / tie_dt to volumes plus error reports),
``figures`` (PGM renderings of pairs, error maps and slice triptychs) and
``selftest`` (a quick built-in sanity run).

Configuration is a flat ``key = value`` file with sections; every output
directory receives a verbatim copy of the configuration it was produced
from, the atom list actually used, and the tool versions, so any run can be
reproduced from its own artifacts.  Identical configuration and seed give
bit-identical outputs for any thread count.

Angle convention: rotations are right-handed about +y, theta = 0 sends the
beam along +z through the unrotated phantom.  Defocus distances are
measured from the rotation-center plane.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .born import (
    ContrastImage,
    ProjectionSet,
    born_contrast,
    contrast_from_wavefield,
    load_projection_set,
    per_atom_composite,
    save_projection_set,
    sliced_contrast,
)
from .ct import ct_pipeline
from .dt import dt_pipeline
from .io import read_volume, write_mask, write_pgm, write_volume
from .metrics import (
    atom_sites_on_grid,
    image_error,
    report_keyvalues,
    report_text,
    volume_error,
)
from .numerics import Beam, Grid3
from .phantom import (
    Phantom,
    line_projection,
    load_phantom,
    potential_on_grid,
    random_phantom,
    save_phantom,
)
from .propagation import multislice, projection_exit_wave, propagate
from .tie import tie_dt_pipeline
from .utils import run_indexed

FORWARD_MODELS = ("projection", "born", "sliced", "multislice", "per_atom", "lineint")
RECON_METHODS = ("ct", "ct-true", "dt", "tie_dt")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated run parameters mirroring the configuration file."""

    phantom_path: str | None = None
    random_atoms: int = 20
    thickness: float = 80.0
    r_trans: float = 30.0
    y_half: float = 30.0
    sigma: float = 1.2
    v0: float = 50.0
    seed: int = 0
    nx: int = 128
    ny: int = 128
    nz: int = 128
    dx: float = 1.0
    dy: float = 1.0
    dz: float = 1.0
    e_volts: float = 200e3
    model: str = "multislice"
    n_angles: int = 720
    defocus: tuple[float, ...] = (45.0,)
    m_slices: int = 64
    method: str = "tie_dt"
    eps: float = 0.1
    alpha: float | None = None
    fbp_filter: str = "ramlak"
    min_coverage: float = 0.5
    threads: int = 1
    source_text: str = field(default="", repr=False)

    @classmethod
    def from_ini(
        cls, path: str | Path, overrides: list[str] | None = None
    ) -> "RunConfig":
        text = Path(path).read_text()
        cfg = configparser.ConfigParser()
        try:
            cfg.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for item in overrides or []:
            try:
                dotted, value = item.split("=", 1)
                section, key = dotted.strip().split(".", 1)
            except ValueError:
                raise ConfigError(
                    f"--set expects section.key=value, got {item!r}"
                ) from None
            if not cfg.has_section(section):
                cfg.add_section(section)
            cfg.set(section, key.strip(), value.strip())
        rc = cls(source_text=text)

        def take(section: str, key: str, conv, attr: str) -> None:
            if cfg.has_option(section, key):
                raw = cfg.get(section, key)
                if raw.strip() == "":
                    return
                try:
                    setattr(rc, attr, conv(raw))
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc

        take("phantom", "path", str, "phantom_path")
        take("phantom", "random_atoms", int, "random_atoms")
        take("phantom", "thickness", float, "thickness")
        take("phantom", "r_trans", float, "r_trans")
        take("phantom", "y_half", float, "y_half")
        take("phantom", "sigma", float, "sigma")
        take("phantom", "v0", float, "v0")
        take("phantom", "seed", int, "seed")
        for key in ("nx", "ny", "nz"):
            take("grid", key, int, key)
        for key in ("dx", "dy", "dz"):
            take("grid", key, float, key)
        take("beam", "e_volts", float, "e_volts")
        take("simulate", "model", str, "model")
        take("simulate", "n_angles", int, "n_angles")
        take(
            "simulate",
            "defocus",
            lambda raw: tuple(float(v) for v in raw.split(",")),
            "defocus",
        )
        take("simulate", "m_slices", int, "m_slices")
        take("reconstruct", "method", str, "method")
        take("reconstruct", "eps", float, "eps")
        take("reconstruct", "alpha", float, "alpha")
        take("reconstruct", "filter", str, "fbp_filter")
        take("reconstruct", "min_coverage", float, "min_coverage")
        take("run", "threads", int, "threads")
        rc.validate()
        return rc

    def validate(self) -> None:
        if self.model not in FORWARD_MODELS:
            raise ConfigError(
                f"unknown forward model {self.model!r}, expected one of {FORWARD_MODELS}"
            )
        if self.method not in RECON_METHODS:
            raise ConfigError(
                f"unknown reconstruction method {self.method!r}, "
                f"expected one of {RECON_METHODS}"
            )
        if self.n_angles < 2 or self.n_angles % 2:
            raise ConfigError(
                f"n_angles must be even and >= 2 so every angle has its 180 degree "
                f"partner, got {self.n_angles}"
            )
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if not self.defocus:
            raise ConfigError("at least one defocus distance is required")

    def grid3(self) -> Grid3:
        return Grid3(
            nx=self.nx,
            ny=self.ny,
            nz=self.nz,
            dx=self.dx,
            dy=self.dy,
            dz=self.dz,
            z0=-(self.nz * self.dz),
        )

    def beam(self) -> Beam:
        return Beam(e_volts=self.e_volts)

    def build_phantom(self) -> Phantom:
        if self.phantom_path is not None:
            return load_phantom(self.phantom_path)
        return random_phantom(
            n_atoms=self.random_atoms,
            thickness=self.thickness,
            r_trans=self.r_trans,
            y_half=self.y_half,
            v0=self.v0,
            sigma=self.sigma,
            seed=self.seed,
        )


def _write_provenance(outdir: Path, argv: list[str]) -> None:
    import numpy
    import scipy

    lines = [
        f"difftomo = {__version__}",
        f"numpy = {numpy.__version__}",
        f"scipy = {scipy.__version__}",
        "command = difftomo " + " ".join(argv),
        "",
    ]
    (outdir / "provenance.txt").write_text("\n".join(lines))


def _echo_config(rc: RunConfig, outdir: Path) -> None:
    if rc.source_text:
        (outdir / "config.ini").write_text(rc.source_text)


def _angles(n: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(n) / n


def _forward_image(
    rc: RunConfig, phantom: Phantom, grid: Grid3, beam: Beam, theta: float, z: float
) -> ContrastImage:
    if rc.model == "projection":
        w = propagate(projection_exit_wave(phantom, grid.grid2, beam, theta), z)
        img = contrast_from_wavefield(w, model="projection")
    elif rc.model == "born":
        img = born_contrast(phantom, grid, beam, theta, z)
    elif rc.model == "sliced":
        img = sliced_contrast(phantom, grid, beam, theta, z, m_slices=rc.m_slices)
    elif rc.model == "multislice":
        w = multislice(phantom, grid, beam, theta, exit_defocus=z)
        img = contrast_from_wavefield(w, model="multislice")
    elif rc.model == "per_atom":
        img = per_atom_composite(phantom, grid, beam, theta, z)
    elif rc.model == "lineint":
        img = ContrastImage(
            values=line_projection(phantom, grid.grid2, theta),
            grid=grid.grid2,
            beam=beam,
            defocus=z,
            theta=theta,
            model="lineint",
        )
    else:  # pragma: no cover - guarded by validate()
        raise ConfigError(f"unknown forward model {rc.model!r}")
    return ContrastImage(
        values=img.values,
        grid=img.grid,
        beam=img.beam,
        defocus=img.defocus,
        theta=theta,
        model=rc.model,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    rc = RunConfig.from_ini(args.config, overrides=args.set)
    if args.threads is not None:
        rc.threads = args.threads
    if args.model is not None:
        rc.model = args.model
        rc.validate()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    phantom = rc.build_phantom()
    grid, beam = rc.grid3(), rc.beam()
    angles = _angles(rc.n_angles)
    for z in rc.defocus:
        images = run_indexed(
            lambda i, z=z: _forward_image(rc, phantom, grid, beam, float(angles[i]), z),
            rc.n_angles,
            rc.threads,
        )
        ps = ProjectionSet(images=tuple(images))
        save_projection_set(ps, outdir / f"proj_z{z:g}")
    _echo_config(rc, outdir)
    save_phantom(phantom, outdir / "phantom.txt")
    _write_provenance(outdir, sys.argv[1:])
    print(f"wrote {len(rc.defocus)} projection set(s) of {rc.n_angles} angles to {outdir}")
    return 0


def cmd_reconstruct(args: argparse.Namespace) -> int:
    rc = RunConfig.from_ini(args.config, overrides=args.set)
    if args.threads is not None:
        rc.threads = args.threads
    if args.method is not None:
        rc.method = args.method
        rc.validate()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sets = [load_projection_set(p) for p in args.projections]
    grid = rc.grid3()
    for path, ps in zip(args.projections, sets):
        if ps.grid != grid.grid2:
            raise ValueError(
                f"{path}: projection grid {ps.grid} does not match the "
                "configured transverse grid"
            )
        if ps.beam.e_volts != rc.e_volts:
            raise ValueError(
                f"{path}: projection beam ({ps.beam.e_volts} V) does not match "
                f"the configured {rc.e_volts} V"
            )
    coverage_mask = None
    provenance = f"method={rc.method} from " + ", ".join(args.projections)
    if rc.method == "dt":
        result = dt_pipeline(
            sets,
            grid,
            eps=rc.eps,
            min_coverage=rc.min_coverage,
            threads=rc.threads,
        )
        volume = result.volume
        coverage_mask = result.coverage_mask
        print(
            f"dt: coverage {result.coverage:.3f}, "
            f"imaginary residual {result.imag_residual:.3g}"
        )
    elif rc.method == "tie_dt":
        if len(sets) != 1:
            raise ValueError("tie_dt uses exactly one projection set")
        volume = tie_dt_pipeline(
            sets[0], grid, alpha=rc.alpha, window=rc.fbp_filter, threads=rc.threads
        )
    elif rc.method == "ct-true":
        if len(sets) != 1:
            raise ValueError("ct-true uses exactly one projection set")
        if sets[0].model != "lineint":
            raise ValueError(
                "ct-true expects line-integral projections (simulate with "
                f"model=lineint), got model {sets[0].model!r}"
            )
        volume = ct_pipeline(
            sets[0], grid, mode="true-phase", window=rc.fbp_filter, threads=rc.threads
        )
    else:  # ct
        if len(sets) != 1:
            raise ValueError("ct uses exactly one projection set")
        volume = ct_pipeline(
            sets[0],
            grid,
            mode="intensity-as-projection",
            window=rc.fbp_filter,
            threads=rc.threads,
        )
    write_volume(volume, grid, outdir / "volume", provenance=provenance)
    if coverage_mask is not None:
        write_mask(coverage_mask, outdir / "coverage.u8")
    if args.phantom is not None:
        phantom = load_phantom(args.phantom)
        reference = potential_on_grid(phantom, grid)
        fit = "affine" if rc.method == "ct" else "none"
        report = volume_error(
            volume, reference, atom_sites=atom_sites_on_grid(phantom, grid), fit=fit
        )
        (outdir / "report.txt").write_text(report_text(report, title=rc.method))
        (outdir / "report.kv").write_text(report_keyvalues(report))
        print(report_text(report, title=rc.method), end="")
    _echo_config(rc, outdir)
    _write_provenance(outdir, sys.argv[1:])
    print(f"wrote volume to {outdir}")
    return 0


def _load_set_or_fail(path: str) -> ProjectionSet:
    if not Path(path).exists():
        raise FileNotFoundError(f"no projection set at {path}")
    return load_projection_set(path)


def cmd_figures(args: argparse.Namespace) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.kind == "pair":
        ps = _load_set_or_fail(args.projections)
        i = 0
        j = ps.partner_index(i)
        if j is None:
            raise ValueError("projection set has no 180 degree pair to show")
        from .tie import mirror_x

        write_pgm(ps.images[i].values, outdir / "orientation_0.pgm", symmetric=True)
        write_pgm(
            mirror_x(ps.images[j].values),
            outdir / "orientation_pi_mirrored.pgm",
            symmetric=True,
        )
        write_pgm(
            ps.images[i].values - mirror_x(ps.images[j].values),
            outdir / "pair_difference.pgm",
            symmetric=True,
        )
        print(f"wrote orientation pair figures to {outdir}")
    elif args.kind == "errormap":
        test = _load_set_or_fail(args.test)
        reference = _load_set_or_fail(args.reference)
        idx = args.index
        report = image_error(
            test.images[idx].values,
            reference.images[idx].values,
            i_in=reference.beam.i_in,
            display_threshold_pct=args.threshold,
        )
        write_pgm(report.thresholded_map, outdir / "errormap.pgm")
        np.ascontiguousarray(report.error_map, dtype="<f8").tofile(
            outdir / "errormap.f64"
        )
        (outdir / "errormap.txt").write_text(report_text(report, title="error map"))
        print(report_text(report, title="error map"), end="")
    elif args.kind == "triptych":
        slices = []
        for name, vol_path in zip(("a", "b", "c"), args.volumes):
            volume, grid = read_volume(vol_path)
            axial = volume[:, grid.ny // 2, :]
            write_pgm(axial, outdir / f"slice_{name}.pgm", symmetric=True)
            slices.append(axial)
        write_pgm(np.concatenate(slices, axis=1), outdir / "triptych.pgm", symmetric=True)
        print(f"wrote triptych figures to {outdir}")
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown figure kind {args.kind!r}")
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    from .numerics import Grid2, electron_wavelength, fresnel_number, ft2, ift2
    from .phantom import Atom, analytic_ft3
    from .dt import ParaboloidAccumulator

    failures = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        if not ok:
            failures.append(name)

    lam = electron_wavelength(200e3)
    check("wavelength-200kV", abs(lam - 0.025) / 0.025 < 0.01, f"{lam:.6f} A")
    check("fresnel-number", fresnel_number(1.0, 0.025, 100.0) == 0.4)

    grid = Grid2(nx=32, ny=32, dx=1.0, dy=1.0)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(grid.shape)
    check(
        "fft-round-trip",
        bool(np.allclose(ift2(ft2(f, grid), grid).real, f, atol=1e-12)),
    )

    beam = Beam(e_volts=200e3)
    g3 = Grid3(nx=32, ny=32, nz=32, dx=1.0, dy=1.0, dz=1.0, z0=-16.0)
    phantom = Phantom(
        atoms=(Atom(x=2.0, y=-1.0, z=-5.0, v0=50.0, sigma=1.0),), z0=-16.0
    )
    z = 20.0
    acc = ParaboloidAccumulator(g3, beam, z, eps=0.0)
    k = born_contrast(phantom, g3, beam, 0.0, z)
    k_pi = born_contrast(phantom, g3, beam, math.pi, z)
    values, qx, qy, qz = acc.solve_pair(k, k_pi)
    truth = analytic_ft3(phantom, qx, qy, qz)
    s = np.abs(np.sin(2.0 * np.pi * beam.lambda_a * z * (qx**2 + qy**2)))
    ok = s > 0.1
    rel = np.abs(values[ok] - truth[ok]) / np.abs(truth[ok])
    check("paraboloid-solver", bool(np.max(rel) < 1e-6), f"max rel {np.max(rel):.2e}")

    w = multislice(phantom, g3, beam, 0.3, exit_defocus=30.0)
    check(
        "multislice-unitarity",
        abs(float(np.mean(w.intensity)) - beam.i_in) < 1e-4,
        f"mean intensity {float(np.mean(w.intensity)):.8f}",
    )

    print("selftest:", "ok" if not failures else f"{len(failures)} failure(s)")
    return 0 if not failures else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="difftomo",
        description="Simulate defocused TEM projections of weak phase objects "
        "and reconstruct the 3D potential by CT, diffraction tomography or "
        "TIE-based diffraction tomography.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a forward sweep to projection sets")
    p_sim.add_argument("--config", "-c", required=True, help="INI configuration file")
    p_sim.add_argument("--outdir", "-o", required=True)
    p_sim.add_argument("--model", choices=FORWARD_MODELS, help="override [simulate] model")
    p_sim.add_argument("--threads", type=int, help="override [run] threads")
    p_sim.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override any configuration field (repeatable)",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_rec = sub.add_parser("reconstruct", help="reconstruct a volume from projections")
    p_rec.add_argument("--config", "-c", required=True)
    p_rec.add_argument(
        "--projections",
        "-p",
        nargs="+",
        required=True,
        help="projection-set directories (several for multi-defocus dt)",
    )
    p_rec.add_argument("--outdir", "-o", required=True)
    p_rec.add_argument("--method", choices=RECON_METHODS, help="override [reconstruct] method")
    p_rec.add_argument("--phantom", help="ground-truth atom list for error reports")
    p_rec.add_argument("--threads", type=int)
    p_rec.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override any configuration field (repeatable)",
    )
    p_rec.set_defaults(func=cmd_reconstruct)

    p_fig = sub.add_parser("figures", help="emit PGM figures from finished runs")
    p_fig.add_argument("--kind", choices=("pair", "errormap", "triptych"), required=True)
    p_fig.add_argument("--outdir", "-o", required=True)
    p_fig.add_argument("--projections", help="projection set for --kind pair")
    p_fig.add_argument("--test", help="projection set for --kind errormap")
    p_fig.add_argument("--reference", help="projection set for --kind errormap")
    p_fig.add_argument("--index", type=int, default=0, help="image index for errormap")
    p_fig.add_argument("--threshold", type=float, default=3.0, help="errormap display threshold (%%)")
    p_fig.add_argument("--volumes", nargs=3, help="three volume paths for --kind triptych")
    p_fig.set_defaults(func=cmd_figures)

    p_self = sub.add_parser("selftest", help="run built-in sanity checks")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: internal: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
