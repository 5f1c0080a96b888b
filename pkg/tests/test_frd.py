"""FRD container and CSV round-trip tests."""

import numpy as np
import pytest

from frdsyn.errors import InvalidInputError, ParseError
from frdsyn.frd import FrdPlant, frd_load, frd_save


def random_frd(rng, n=5, nz=2, nw=3, ny=1, nu=2):
    omega = np.sort(rng.uniform(0.1, 100, size=n))
    def blk(r, c):
        return rng.normal(size=(n, r, c)) + 1j * rng.normal(size=(n, r, c))
    return FrdPlant(omega, blk(nz, nw), blk(nz, nu), blk(ny, nw), blk(ny, nu))


class TestContainer:
    def test_dims(self):
        plant = random_frd(np.random.default_rng(0))
        assert plant.dims == (2, 3, 1, 2)

    def test_rejects_descending_grid(self):
        rng = np.random.default_rng(1)
        p = random_frd(rng)
        with pytest.raises(InvalidInputError):
            FrdPlant(p.omega[::-1].copy(), p.p11, p.p12, p.p21, p.p22)

    def test_rejects_zero_frequency(self):
        rng = np.random.default_rng(2)
        p = random_frd(rng)
        w = p.omega.copy()
        w[0] = 0.0
        with pytest.raises(InvalidInputError):
            FrdPlant(w, p.p11, p.p12, p.p21, p.p22)

    def test_rejects_dimension_mismatch(self):
        rng = np.random.default_rng(3)
        p = random_frd(rng)
        with pytest.raises(InvalidInputError):
            FrdPlant(p.omega, p.p11, p.p12[:, :, :1], p.p21, p.p22)

    def test_interpolation_endpoints_and_midpoint(self):
        rng = np.random.default_rng(4)
        p = random_frd(rng, n=3)
        exact = p.at(p.omega[1])
        assert np.allclose(exact[0], p.p11[1], atol=1e-15)
        mid = 0.5 * (p.omega[0] + p.omega[1])
        interp = p.at(mid)
        assert np.allclose(interp[0], 0.5 * (p.p11[0] + p.p11[1]), atol=1e-12)


class TestCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        plant = random_frd(np.random.default_rng(5))
        path = tmp_path / "plant.csv"
        frd_save(plant, path)
        loaded = frd_load(path)
        assert np.array_equal(loaded.omega, plant.omega)
        for name in ("p11", "p12", "p21", "p22"):
            assert np.array_equal(getattr(loaded, name), getattr(plant, name))

    def test_header_contract(self, tmp_path):
        plant = random_frd(np.random.default_rng(6), n=2, nz=1, nw=1, ny=1, nu=1)
        path = tmp_path / "p.csv"
        frd_save(plant, path)
        first = path.read_text().splitlines()[0]
        assert first == "omega_radps,block,row,col,re,im"

    def test_hand_written_siso(self, tmp_path):
        path = tmp_path / "mini.csv"
        path.write_text(
            "omega_radps,block,row,col,re,im\n"
            "1,P11,0,0,0.5,0\n1,P12,0,0,1,0\n1,P21,0,0,1,0\n1,P22,0,0,-0.5,0\n"
            "2,P11,0,0,0.25,0.1\n2,P12,0,0,1,0\n2,P21,0,0,1,0\n2,P22,0,0,-0.25,0\n"
        )
        plant = frd_load(path)
        assert plant.dims == (1, 1, 1, 1)
        assert np.array_equal(plant.omega, [1.0, 2.0])
        assert plant.p11[1, 0, 0] == 0.25 + 0.1j

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "omega_radps,block,row,col,re,im\n"
            "1,P11,0,0,0.5,0\n"
            "oops,P11,0,0,x,0\n"
        )
        with pytest.raises(ParseError) as err:
            frd_load(path)
        assert err.value.line == 3

    def test_hz_conversion(self, tmp_path):
        path = tmp_path / "hz.csv"
        path.write_text(
            "omega_radps,block,row,col,re,im\n"
            "1,P11,0,0,1,0\n1,P12,0,0,1,0\n1,P21,0,0,1,0\n1,P22,0,0,0,0\n"
        )
        plant = frd_load(path, unit="hz")
        assert plant.omega[0] == pytest.approx(2 * np.pi)
