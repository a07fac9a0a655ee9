import math
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from difftomo.numerics import Beam, Grid2, Grid3
from difftomo.phantom import Atom, Phantom
from difftomo.propagation import (
    Wavefield,
    multislice,
    phase_grating,
    plane_wave,
    projection_exit_wave,
    propagate,
    refocus,
)

DATA_DIR = Path(__file__).parent / "data"


def mean_intensity(w):
    return float(np.mean(w.intensity))


class TestPropagate:
    def test_zero_distance_is_identity(self, grid64, beam200):
        w = plane_wave(grid64, beam200)
        out = propagate(w, 0.0)
        assert np.array_equal(out.values, w.values)
        assert out.z == w.z

    def test_plane_wave_unchanged(self, grid64, beam200):
        w = plane_wave(grid64, beam200)
        out = propagate(w, 500.0)
        assert_allclose(out.values, w.values, atol=1e-12)

    def test_gaussian_beam_width(self, beam200):
        # free-space Gaussian beam: w(d)^2 = w0^2 (1 + (d / zR)^2) with
        # zR = pi w0^2 / lambda; the intensity second moment is w^2 / 4.
        g = Grid2(nx=128, ny=128, dx=1.0, dy=1.0)
        w0 = 8.0
        X, Y = g.xy_mesh()
        field = np.exp(-(X**2 + Y**2) / w0**2).astype(complex)
        w = Wavefield(values=field, grid=g, beam=beam200, z=0.0)
        d = 4000.0
        z_r = math.pi * w0**2 / beam200.lambda_a
        expected_w2 = w0**2 * (1.0 + (d / z_r) ** 2)
        out = propagate(w, d)
        intensity = out.intensity
        second_moment = float(np.sum(X**2 * intensity) / np.sum(intensity))
        assert abs(4.0 * second_moment - expected_w2) / expected_w2 < 1e-4

    def test_group_property(self, grid64, beam200, rng):
        vals = rng.standard_normal(grid64.shape) + 1j * rng.standard_normal(grid64.shape)
        w = Wavefield(values=vals, grid=grid64, beam=beam200, z=0.0)
        there_back = propagate(propagate(w, 37.0), -37.0)
        assert np.max(np.abs(there_back.values - vals)) < 1e-12 * np.max(np.abs(vals))
        two_step = propagate(propagate(w, 10.0), 25.0)
        one_step = propagate(w, 35.0)
        assert np.max(np.abs(two_step.values - one_step.values)) < 1e-12

    def test_unitarity_random_fields(self, grid64, beam200, rng):
        for _ in range(20):
            vals = rng.standard_normal(grid64.shape) + 1j * rng.standard_normal(
                grid64.shape
            )
            w = Wavefield(values=vals, grid=grid64, beam=beam200, z=0.0)
            d = float(rng.uniform(-500.0, 500.0))
            out = propagate(w, d)
            assert abs(mean_intensity(out) - mean_intensity(w)) <= 1e-10 * mean_intensity(w)

    def test_exact_propagator_close_to_paraxial(self, grid64, beam200, rng):
        vals = rng.standard_normal(grid64.shape) + 1j * rng.standard_normal(grid64.shape)
        w = Wavefield(values=vals, grid=grid64, beam=beam200, z=0.0)
        a = propagate(w, 50.0)
        b = propagate(w, 50.0, exact=True)
        rel = np.max(np.abs(a.values - b.values)) / np.max(np.abs(vals))
        assert 0.0 < rel < 1e-2  # differs, but only at the q^4 correction level


class TestPhaseGrating:
    def test_zero_slice_is_identity(self, grid64, beam200):
        w = plane_wave(grid64, beam200)
        out = phase_grating(w, np.zeros(grid64.shape))
        assert_allclose(out.values, w.values, rtol=0, atol=0)

    def test_constant_slice_global_phase(self, grid64, beam200):
        w = plane_wave(grid64, beam200)
        c = 7.5  # volt * A
        out = phase_grating(w, np.full(grid64.shape, c))
        expected = math.pi * c / (beam200.lambda_a * beam200.e_volts)
        assert_allclose(out.values, w.values * np.exp(1j * expected), rtol=1e-12)
        assert_allclose(out.intensity, w.intensity, rtol=1e-12)

    def test_half_slices_compose(self, grid64, beam200, rng):
        w = plane_wave(grid64, beam200)
        slice_pot = rng.uniform(0.0, 5.0, size=grid64.shape)
        once = phase_grating(w, slice_pot)
        twice = phase_grating(phase_grating(w, slice_pot / 2.0), slice_pot / 2.0)
        assert np.max(np.abs(once.values - twice.values)) < 1e-12


class TestProjectionExitWave:
    def test_empty_phantom_plane_wave(self, grid64, beam200):
        w = projection_exit_wave(Phantom(atoms=(), z0=-10.0), grid64, beam200, 0.0)
        assert_allclose(w.values, math.sqrt(beam200.i_in) * np.ones(grid64.shape))

    def test_pure_phase_intensity(self, grid64, beam200, three_atom_phantom):
        w = projection_exit_wave(three_atom_phantom, grid64, beam200, 0.9)
        assert_allclose(w.intensity, beam200.i_in * np.ones(grid64.shape), rtol=1e-12)

    def test_opposite_orientations_mirror(self, grid64, beam200, three_atom_phantom):
        w0 = projection_exit_wave(three_atom_phantom, grid64, beam200, 0.4)
        w1 = projection_exit_wave(three_atom_phantom, grid64, beam200, 0.4 + math.pi)
        assert np.max(np.abs(w1.values[:, :0:-1] - w0.values[:, 1:])) < 1e-12


class TestMultislice:
    def test_empty_phantom(self, grid3_small, beam200):
        w = multislice(Phantom(atoms=(), z0=-40.0), grid3_small, beam200, 0.0, 30.0)
        assert_allclose(w.intensity, beam200.i_in * np.ones(w.grid.shape), atol=1e-12)
        assert w.z == 30.0

    def test_energy_conservation(self, grid3_small, beam200, three_atom_phantom):
        w = multislice(three_atom_phantom, grid3_small, beam200, 0.7, 45.0)
        assert abs(mean_intensity(w) - beam200.i_in) < 1e-6

    def test_slice_phase_guard_names_dz(self, grid3_small, beam200):
        hot = Phantom(
            atoms=(Atom(x=0.0, y=0.0, z=-20.0, v0=50000.0, sigma=2.0),), z0=-40.0
        )
        with pytest.raises(ValueError, match="reduce dz"):
            multislice(hot, grid3_small, beam200, 0.0, 0.0)

    def test_agrees_with_slice_sum_to_second_order(self, beam200):
        # the deviation from the matched single-scattering slice sum is the
        # multiple-scattering term, quadratic in the atom strength
        from difftomo.born import contrast_from_wavefield, sliced_contrast

        g = Grid3(nx=64, ny=64, nz=160, dx=1.0, dy=1.0, dz=0.25, z0=-40.0)

        def deviation(v0):
            p = Phantom(atoms=(Atom(x=0.0, y=0.0, z=-20.0, v0=v0, sigma=2.0),), z0=-40.0)
            w = multislice(p, g, beam200, 0.0, 45.0, band_limit=False)
            k_ms = contrast_from_wavefield(w, "ms").values
            k_lin = sliced_contrast(p, g, beam200, 0.0, 45.0, m_slices=160).values
            return float(np.sqrt(np.mean((k_ms - k_lin) ** 2)))

        ratio = deviation(100.0) / deviation(50.0)
        assert 3.5 < ratio < 4.5

    def test_converges_to_projection_as_thickness_shrinks(self, beam200):
        # compressing the same projected phase into half the depth halves the
        # residual against the straight-ray model (first-order convergence)
        from difftomo.born import contrast_from_wavefield

        def residual(spread):
            g = Grid3(nx=64, ny=64, nz=64, dx=1.0, dy=1.0, dz=0.5, z0=-32.0)
            p = Phantom(
                atoms=(
                    Atom(x=4.0, y=0.0, z=-16.0 + spread, v0=50.0, sigma=1.5),
                    Atom(x=-4.0, y=0.0, z=-16.0 - spread, v0=50.0, sigma=1.5),
                ),
                z0=-32.0,
            )
            w_ms = multislice(p, g, beam200, 0.0, 0.0, band_limit=False)
            w_pr = projection_exit_wave(p, g.grid2, beam200, 0.0)
            return float(np.sqrt(np.mean((w_ms.intensity - w_pr.intensity) ** 2)))

        ratio = residual(10.0) / residual(5.0)
        assert 1.5 < ratio < 2.5


class TestRefocus:
    def test_to_own_plane_is_identity(self, grid64, beam200, rng):
        vals = rng.standard_normal(grid64.shape) + 1j * rng.standard_normal(grid64.shape)
        w = Wavefield(values=vals, grid=grid64, beam=beam200, z=12.0)
        out = refocus(w, 12.0)
        assert np.array_equal(out.values, vals)

    def test_refocus_composes(self, grid64, beam200, rng):
        vals = rng.standard_normal(grid64.shape) + 1j * rng.standard_normal(grid64.shape)
        w = Wavefield(values=vals, grid=grid64, beam=beam200, z=0.0)
        direct = refocus(w, 30.0)
        staged = refocus(refocus(w, -20.0), 30.0)
        assert np.max(np.abs(direct.values - staged.values)) < 1e-12
        assert staged.z == 30.0

    def test_multislice_refocus_snapshot(self, beam200):
        # frozen output of a verified run; regenerate with
        # tests/data/make_snapshot.py if the propagation contract changes
        g = Grid3(nx=32, ny=32, nz=32, dx=1.0, dy=1.0, dz=1.0, z0=-24.0)
        p = Phantom(
            atoms=(
                Atom(x=3.0, y=-2.0, z=-6.0, v0=60.0, sigma=1.2),
                Atom(x=-4.0, y=3.0, z=-18.0, v0=45.0, sigma=1.0),
            ),
            z0=-24.0,
        )
        w = multislice(p, g, beam200, 0.4, exit_defocus=45.0)
        back = refocus(w, 0.0)
        stored = np.load(DATA_DIR / "refocus_snapshot.npy")
        assert_allclose(back.intensity, stored, rtol=0, atol=1e-12)


class TestOrientationAsymmetry:
    def test_multislice_breaks_projection_symmetry(self, beam200):
        # two atoms separated along z image differently in opposite
        # orientations under multislice, but identically (mirrored) under
        # the straight-ray model
        from difftomo.born import contrast_from_wavefield
        from difftomo.tie import mirror_x

        g = Grid3(nx=64, ny=64, nz=64, dx=1.0, dy=1.0, dz=1.0, z0=-40.0)
        p = Phantom(
            atoms=(
                Atom(x=5.0, y=0.0, z=-5.0, v0=50.0, sigma=1.2),
                Atom(x=-5.0, y=0.0, z=-35.0, v0=50.0, sigma=1.2),
            ),
            z0=-40.0,
        )

        def rel_asym(make_wave):
            k0 = contrast_from_wavefield(make_wave(0.0), "m").values
            kpi = mirror_x(contrast_from_wavefield(make_wave(math.pi), "m").values)
            return float(np.sqrt(np.mean((k0 - kpi) ** 2) / np.mean(k0**2)))

        ms = rel_asym(lambda th: multislice(p, g, beam200, th, 45.0))
        proj = rel_asym(
            lambda th: propagate(projection_exit_wave(p, g.grid2, beam200, th), 45.0)
        )
        assert proj < 1e-10
        assert ms > 10.0 * proj
        assert ms > 0.01
