import math
from pathlib import Path

import numpy as np
import pytest

from difftomo.born import load_projection_set, save_projection_set, born_contrast, ProjectionSet
from difftomo.cli import main
from difftomo.io import read_volume, write_pgm
from difftomo.numerics import Beam, Grid3
from difftomo.phantom import Phantom, Atom


BASE_CONFIG = """
[phantom]
random_atoms = 3
thickness = 24.0
r_trans = 8.0
y_half = 8.0
sigma = 1.5
v0 = 50.0
seed = 4

[grid]
nx = 32
ny = 32
nz = 32
dx = 1.0
dy = 1.0
dz = 1.0

[beam]
e_volts = 200000.0

[simulate]
model = born
n_angles = 8
defocus = 45.0

[reconstruct]
method = tie_dt

[run]
threads = 1
"""


def write_config(tmp_path, text=BASE_CONFIG, name="config.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_set_bytes(directory):
    return {
        p.name: p.read_bytes() for p in sorted(Path(directory).glob("img_*.f64"))
    }


class TestSimulate:
    def test_smoke_empty_phantom_zero_images(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path, BASE_CONFIG.replace("random_atoms = 3", "random_atoms = 0")
            .replace("n_angles = 8", "n_angles = 4")
        )
        out = tmp_path / "run"
        assert main(["simulate", "-c", str(cfg), "-o", str(out)]) == 0
        ps = load_projection_set(out / "proj_z45")
        assert len(ps.images) == 4
        assert all(np.all(img.values == 0.0) for img in ps.images)

    def test_outputs_are_self_describing(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "run"
        assert main(["simulate", "-c", str(cfg), "-o", str(out)]) == 0
        assert (out / "config.ini").read_text() == BASE_CONFIG
        assert (out / "phantom.txt").is_file()
        assert (out / "provenance.txt").is_file()

    def test_same_seed_bit_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "-c", str(cfg), "-o", str(out1)]) == 0
        assert main(["simulate", "-c", str(cfg), "-o", str(out2)]) == 0
        assert read_set_bytes(out1 / "proj_z45") == read_set_bytes(out2 / "proj_z45")

    def test_threads_bit_identical(self, tmp_path):
        cfg = write_config(
            tmp_path, BASE_CONFIG.replace("model = born", "model = multislice")
        )
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "-c", str(cfg), "-o", str(out1), "--threads", "1"]) == 0
        assert main(["simulate", "-c", str(cfg), "-o", str(out2), "--threads", "3"]) == 0
        assert read_set_bytes(out1 / "proj_z45") == read_set_bytes(out2 / "proj_z45")

    def test_dense_sweep_completes(self, tmp_path):
        # a realistic acquisition geometry: 1800 orientations in 0.2 degree
        # steps at 45 A defocus and 200 kV (single-scattering model keeps the
        # sweep quick)
        cfg = write_config(
            tmp_path, BASE_CONFIG.replace("n_angles = 8", "n_angles = 1800")
        )
        out = tmp_path / "run"
        assert main(["simulate", "-c", str(cfg), "-o", str(out)]) == 0
        ps = load_projection_set(out / "proj_z45")
        assert len(ps.images) == 1800
        steps = np.diff(ps.angles)
        assert np.allclose(steps, math.radians(0.2), atol=1e-12)

    def test_odd_angle_count_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BASE_CONFIG.replace("n_angles = 8", "n_angles = 7"))
        code = main(["simulate", "-c", str(cfg), "-o", str(tmp_path / "x")])
        assert code == 2
        assert "config" in capsys.readouterr().err

    def test_bad_model_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BASE_CONFIG.replace("model = born", "model = magic"))
        assert main(["simulate", "-c", str(cfg), "-o", str(tmp_path / "x")]) == 2

    def test_set_overrides_any_field(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "run"
        code = main(
            [
                "simulate", "-c", str(cfg), "-o", str(out),
                "--set", "simulate.n_angles=6",
                "--set", "simulate.defocus=30.0",
            ]
        )
        assert code == 0
        ps = load_projection_set(out / "proj_z30")
        assert len(ps.images) == 6

    def test_malformed_set_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        code = main(
            ["simulate", "-c", str(cfg), "-o", str(tmp_path / "x"), "--set", "oops"]
        )
        assert code == 2
        assert "section.key=value" in capsys.readouterr().err


class TestReconstruct:
    @pytest.fixture
    def simulated(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "sim"
        assert main(["simulate", "-c", str(cfg), "-o", str(out)]) == 0
        return cfg, out

    def test_tie_dt_writes_volume_and_report(self, tmp_path, simulated):
        cfg, sim = simulated
        rec = tmp_path / "rec"
        code = main(
            [
                "reconstruct", "-c", str(cfg),
                "-p", str(sim / "proj_z45"),
                "-o", str(rec),
                "--phantom", str(sim / "phantom.txt"),
            ]
        )
        assert code == 0
        vol, grid = read_volume(rec / "volume")
        assert vol.shape == (32, 32, 32)
        assert (rec / "report.txt").is_file()
        assert (rec / "report.kv").is_file()

    def test_dt_writes_coverage(self, tmp_path, simulated):
        cfg, sim = simulated
        rec = tmp_path / "rec_dt"
        cfg2 = write_config(
            tmp_path,
            BASE_CONFIG.replace("method = tie_dt", "method = dt").replace(
                "[reconstruct]", "[reconstruct]\nmin_coverage = 0.0"
            ),
            name="dtcfg.ini",
        )
        code = main(
            ["reconstruct", "-c", str(cfg2), "-p", str(sim / "proj_z45"), "-o", str(rec)]
        )
        assert code == 0
        assert (rec / "coverage.u8").is_file()

    def test_ct_true_requires_lineint_model(self, tmp_path, simulated, capsys):
        cfg, sim = simulated
        code = main(
            [
                "reconstruct", "-c", str(cfg),
                "-p", str(sim / "proj_z45"),
                "-o", str(tmp_path / "x"),
                "--method", "ct-true",
            ]
        )
        assert code == 4
        assert "validation" in capsys.readouterr().err

    def test_missing_partner_reported(self, tmp_path, capsys, beam200):
        g = Grid3(nx=32, ny=32, nz=32, dx=1.0, dy=1.0, dz=1.0, z0=-24.0)
        p = Phantom(atoms=(Atom(x=1.0, y=0.0, z=-12.0, v0=50.0, sigma=1.5),), z0=-24.0)
        angles = [0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0]
        ps = ProjectionSet(
            images=tuple(born_contrast(p, g, beam200, t, 45.0) for t in angles)
        )
        pdir = tmp_path / "odd_set"
        save_projection_set(ps, pdir)
        cfg = write_config(tmp_path)
        code = main(
            ["reconstruct", "-c", str(cfg), "-p", str(pdir), "-o", str(tmp_path / "x")]
        )
        assert code == 4
        assert "partner" in capsys.readouterr().err

    def test_determinism_across_threads(self, tmp_path, simulated):
        cfg, sim = simulated
        vols = []
        for threads, name in ((1, "r1"), (4, "r4")):
            rec = tmp_path / name
            assert (
                main(
                    [
                        "reconstruct", "-c", str(cfg),
                        "-p", str(sim / "proj_z45"),
                        "-o", str(rec),
                        "--threads", str(threads),
                    ]
                )
                == 0
            )
            vols.append((rec / "volume.f64").read_bytes())
        assert vols[0] == vols[1]

    def test_missing_projection_dir(self, tmp_path, simulated, capsys):
        cfg, _ = simulated
        code = main(
            ["reconstruct", "-c", str(cfg), "-p", str(tmp_path / "nope"), "-o", str(tmp_path / "x")]
        )
        assert code == 3
        assert "io" in capsys.readouterr().err

    def test_config_projection_mismatch_rejected(self, tmp_path, simulated, capsys):
        cfg, sim = simulated
        code = main(
            [
                "reconstruct", "-c", str(cfg),
                "-p", str(sim / "proj_z45"),
                "-o", str(tmp_path / "x"),
                "--set", "grid.nx=64", "--set", "grid.ny=64",
            ]
        )
        assert code == 4
        assert "does not match" in capsys.readouterr().err


class TestFigures:
    @pytest.fixture
    def sim_pair(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "sim"
        assert main(["simulate", "-c", str(cfg), "-o", str(out)]) == 0
        return out

    def test_pair(self, tmp_path, sim_pair):
        out = tmp_path / "figs"
        code = main(
            ["figures", "--kind", "pair", "--projections", str(sim_pair / "proj_z45"), "-o", str(out)]
        )
        assert code == 0
        for name in ("orientation_0.pgm", "orientation_pi_mirrored.pgm", "pair_difference.pgm"):
            data = (out / name).read_bytes()
            assert data.startswith(b"P5\n32 32\n255\n")

    def test_errormap(self, tmp_path, sim_pair):
        out = tmp_path / "figs"
        code = main(
            [
                "figures", "--kind", "errormap",
                "--test", str(sim_pair / "proj_z45"),
                "--reference", str(sim_pair / "proj_z45"),
                "-o", str(out),
            ]
        )
        assert code == 0
        assert (out / "errormap.pgm").is_file()
        assert (out / "errormap.f64").is_file()

    def test_triptych(self, tmp_path, sim_pair):
        cfg = write_config(tmp_path)
        rec = tmp_path / "rec"
        assert (
            main(
                ["reconstruct", "-c", str(cfg), "-p", str(sim_pair / "proj_z45"), "-o", str(rec)]
            )
            == 0
        )
        out = tmp_path / "figs"
        vol = str(rec / "volume")
        code = main(
            ["figures", "--kind", "triptych", "--volumes", vol, vol, vol, "-o", str(out)]
        )
        assert code == 0
        assert (out / "triptych.pgm").is_file()

    def test_missing_input_io_error(self, tmp_path, capsys):
        code = main(
            ["figures", "--kind", "pair", "--projections", str(tmp_path / "void"), "-o", str(tmp_path / "f")]
        )
        assert code == 3


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out


class TestIoHelpers:
    def test_pgm_rejects_3d(self, tmp_path):
        with pytest.raises(ValueError, match="2D"):
            write_pgm(np.zeros((2, 2, 2)), tmp_path / "x.pgm")

    def test_pgm_symmetric_midgray_zero(self, tmp_path):
        arr = np.array([[-1.0, 0.0], [0.5, 1.0]])
        write_pgm(arr, tmp_path / "x.pgm", symmetric=True)
        data = (tmp_path / "x.pgm").read_bytes()
        pixels = data.split(b"255\n", 1)[1]
        assert pixels[1] == 128  # zero maps to mid-gray
