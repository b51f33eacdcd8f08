import numpy as np
import pytest

from bundlelab.lattice import Lattice, interior_time_mask, plane_wave, random_smooth_field


def test_constructor_validation():
    with pytest.raises(ValueError):
        Lattice(1, 8, 0.1, 0.1)
    with pytest.raises(ValueError):
        Lattice(8, 1, 0.1, 0.1)
    with pytest.raises(ValueError):
        Lattice(8, 8, -0.1, 0.1)
    with pytest.raises(ValueError):
        Lattice(8, 8, 0.1, 0.0)


def test_diff_symbol_on_plane_wave():
    lat = Lattice(16, 12, 0.07, 0.13)
    wave = plane_wave(lat, jt=3, jx=2)
    d0 = lat.diff(wave.field, 0)
    d1 = lat.diff(wave.field, 1)
    assert np.max(np.abs(d0 - (-1j * wave.energy_symbol) * wave.field)) <= 1e-12
    assert np.max(np.abs(d1 - (1j * wave.momentum_symbol) * wave.field)) <= 1e-12
    for mu in (2, 3):
        assert np.max(np.abs(lat.diff(wave.field, mu))) == 0.0


def test_diff_wraps_both_axes():
    lat = Lattice(4, 4, 0.5, 0.5)
    f = np.zeros(lat.shape, dtype=complex)
    f[0, 0] = 1.0
    d0 = lat.diff(f, 0)
    assert d0[1, 0] == pytest.approx(-1.0)   # backward neighbour of site 1
    assert d0[3, 0] == pytest.approx(1.0)    # wrap: site 0 is forward of 3
    d1 = lat.diff(f, 1)
    assert d1[0, 3] == pytest.approx(1.0)


def test_refine_keeps_box():
    lat = Lattice(8, 6, 0.2, 0.3)
    fine = lat.refine()
    assert fine.nt == 16 and fine.nx == 12
    assert fine.nt * fine.dt == pytest.approx(lat.nt * lat.dt)
    assert fine.nx * fine.dx == pytest.approx(lat.nx * lat.dx)


def test_interior_mask():
    lat = Lattice(6, 4, 0.1, 0.1)
    mask = interior_time_mask(lat)
    assert mask.tolist() == [False, True, True, True, True, False]


def test_random_smooth_field_reproducible_across_refinement():
    lat = Lattice(8, 8, 0.1, 0.1)
    a = random_smooth_field(lat, np.random.default_rng(3))
    b = random_smooth_field(lat.refine(), np.random.default_rng(3))
    # same continuum object: coarse grid points are every other fine point
    assert np.max(np.abs(a - b[::2, ::2])) <= 1e-12
