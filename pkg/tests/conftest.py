import numpy as np
import pytest

from bundlelab.clifford import build_gamma_set, slash
from bundlelab.lattice import Lattice, plane_wave, random_smooth_field
from bundlelab.matrixop import Chain, MatrixOperator

_GS = build_gamma_set()


@pytest.fixture
def lat16():
    return Lattice(nt=8, nx=16, dt=0.05, dx=0.2)


def dirac_lattice_mode(lat, jt=1, jx=1):
    """Plane-wave spinor solving the discrete free equation exactly.

    The mass is derived from the stencil symbols (so the mode sits on the
    lattice dispersion curve) and the spinor spans the null space of the
    contracted symbol matrix.
    """
    wave = plane_wave(lat, jt, jx)
    et, pt = wave.energy_symbol, wave.momentum_symbol
    msq = et * et - pt * pt
    assert msq > 0, "pick harmonics with a timelike symbol pair"
    m = np.sqrt(msq)
    sym = slash(_GS, [et, -pt, 0.0, 0.0]) - m * np.eye(4)
    _, svals, vh = np.linalg.svd(sym)
    assert svals[-1] < 1e-12
    u = vh[-1].conj()
    return u[:, None, None] * wave.field, m, wave


def kg_lattice_mode(lat, jt=1, jx=1):
    """Scalar plane wave on the composed-stencil dispersion curve."""
    wave = plane_wave(lat, jt, jx)
    msq = wave.energy_symbol ** 2 - wave.momentum_symbol ** 2
    assert msq > 0
    return wave.field.copy(), np.sqrt(msq), wave


def random_field(lat, rng):
    return rng.standard_normal(lat.shape) + 1j * rng.standard_normal(lat.shape)


def random_component_field(lat, rng, n):
    return rng.standard_normal((n,) + lat.shape) + 1j * rng.standard_normal((n,) + lat.shape)


def random_matrix_operator(lat, rng, n=4, max_terms=2):
    """Random operator inside the chain grammar: constants, smooth fields,
    first differences and their compositions."""
    entries = []
    for _ in range(n):
        row = []
        for _ in range(n):
            chains = []
            for _ in range(rng.integers(1, max_terms + 1)):
                kind = rng.integers(0, 4)
                scale = complex(rng.standard_normal(), rng.standard_normal())
                if kind == 0:
                    ops = ()
                elif kind == 1:
                    ops = (("mul", random_smooth_field(lat, rng)),)
                elif kind == 2:
                    ops = (("diff", int(rng.integers(0, 2))),)
                else:
                    ops = (("mul", random_smooth_field(lat, rng)),
                           ("diff", int(rng.integers(0, 2))))
                chains.append(Chain(scale, ops))
            row.append(tuple(chains))
        entries.append(row)
    return MatrixOperator(lat, n, entries)
