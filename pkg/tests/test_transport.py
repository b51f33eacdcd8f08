import numpy as np
import pytest

from bundlelab.clifford import build_gamma_set
from bundlelab.lattice import Lattice
from bundlelab.matrixop import frame_connection
from bundlelab.transport import (FrameField, bundle_morphism, coefficients,
                                 derivation_along, frame_from_preset,
                                 generic_transport_check, identity_frame,
                                 make_transport, phase_frame, random_smooth_frame,
                                 rotation_frame, shear_frame, slashed_gamma,
                                 transported_section)

GS = build_gamma_set()


@pytest.fixture
def lat():
    return Lattice(nt=12, nx=12, dt=0.1, dx=0.12)


def random_sites(lat, rng, count):
    return [(int(rng.integers(0, lat.nt)), int(rng.integers(0, lat.nx))) for _ in range(count)]


# -- transport laws -----------------------------------------------------------

def test_identity_frame_transport_trivial(lat):
    tr = make_transport(identity_frame(lat))
    rng = np.random.default_rng(0)
    for y, x in zip(random_sites(lat, rng, 5), random_sites(lat, rng, 5)):
        assert np.array_equal(tr(y, x), np.eye(4, dtype=complex))


def test_transport_identity_law_exact(lat):
    tr = make_transport(random_smooth_frame(lat, seed=1))
    rng = np.random.default_rng(1)
    for s in random_sites(lat, rng, 10):
        assert np.array_equal(tr(s, s), np.eye(4, dtype=complex))


def test_transport_composition_law(lat):
    tr = make_transport(random_smooth_frame(lat, seed=2))
    rng = np.random.default_rng(2)
    for _ in range(100):
        x1, x2, x3 = random_sites(lat, rng, 3)
        lhs = tr(x3, x2) @ tr(x2, x1)
        rhs = tr(x3, x1)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_unitary_frame_gives_unitary_transport(lat):
    frame = phase_frame(lat)
    assert frame.unitary
    tr = make_transport(frame)
    rng = np.random.default_rng(3)
    for _ in range(20):
        y, x = random_sites(lat, rng, 2)
        L = tr(y, x)
        assert np.max(np.abs(L.conj().T @ L - np.eye(4))) <= 1e-12


def test_path_evaluation_is_path_independent(lat):
    tr = make_transport(random_smooth_frame(lat, seed=4))
    start, end = (1, 2), (7, 9)
    path_a = [start, (1, 9), end]
    path_b = [start, (7, 2), (7, 5), end]
    la = tr.along_path(path_a)
    lb = tr.along_path(path_b)
    assert np.max(np.abs(la - lb)) <= 1e-12 * max(1.0, np.max(np.abs(la)))
    assert np.max(np.abs(la - tr(end, start))) <= 1e-12


# -- coefficients --------------------------------------------------------------

def test_coefficients_identity_frame_vanish(lat):
    coeffs = coefficients(identity_frame(lat))
    assert np.max(np.abs(coeffs.gamma)) == 0.0


def test_coefficients_match_frame_connection_bitwise(lat):
    frame = random_smooth_frame(lat, seed=5)
    coeffs = coefficients(frame)
    for mu in range(2):
        assert np.array_equal(coeffs.gamma[mu], frame_connection(frame, mu))
    assert np.max(np.abs(coeffs.gamma[2])) == 0.0
    assert np.max(np.abs(coeffs.gamma[3])) == 0.0


def test_coefficients_phase_frame_oracle():
    def residual(lat):
        lt, lx = lat.nt * lat.dt, lat.nx * lat.dx
        t = (np.arange(lat.nt) * lat.dt)[:, None]
        x = (np.arange(lat.nx) * lat.dx)[None, :]
        theta = 0.6 * np.sin(2 * np.pi * t / lt) - 0.4 * np.cos(2 * np.pi * x / lx)
        d0 = 0.6 * (2 * np.pi / lt) * np.cos(2 * np.pi * t / lt) + 0.0 * x
        d1 = 0.4 * (2 * np.pi / lx) * np.sin(2 * np.pi * x / lx) + 0.0 * t
        frame = FrameField(lat, np.exp(1j * theta)[..., None, None] * np.eye(4, dtype=complex))
        coeffs = coefficients(frame)
        worst = 0.0
        for mu, dth in ((0, d0), (1, d1)):
            expected = 1j * dth[..., None, None] * np.eye(4)
            worst = max(worst, np.max(np.abs(coeffs.gamma[mu] - expected)))
        return worst

    lat = Lattice(16, 16, 0.1, 0.1)
    assert residual(lat) / residual(lat.refine()) == pytest.approx(4.0, abs=1.5)


def coefficient_law_residual(lat, frame, x_ref=(0, 0)):
    """Both derivative laws of the two-point transport, checked over the grid."""
    tr = make_transport(frame)
    coeffs = coefficients(frame)
    field_y = tr.field_from(x_ref)  # L(., x_ref)
    worst = 0.0
    for mu in range(2):
        dl = lat.diff(field_y, mu, axes=(0, 1))
        rhs = -np.einsum("txab,txbc->txac", coeffs.gamma[mu], field_y)
        worst = max(worst, np.max(np.abs(dl - rhs)))
    # second law: derivative in the source argument at fixed field point
    y_ref = (lat.nt // 2, lat.nx // 3)
    field_x = np.einsum("ab,txbc->txac", frame.linv[y_ref], frame.l)  # L(y_ref, .)
    for mu in range(2):
        dl = lat.diff(field_x, mu, axes=(0, 1))
        rhs = np.einsum("txab,txbc->txac", field_x, coeffs.gamma[mu])
        worst = max(worst, np.max(np.abs(dl - rhs)))
    return worst


def test_coefficient_laws_second_order():
    lat = Lattice(12, 12, 0.1, 0.11)
    r1 = coefficient_law_residual(lat, random_smooth_frame(lat, seed=6))
    lat2 = lat.refine()
    r2 = coefficient_law_residual(lat2, random_smooth_frame(lat2, seed=6))
    assert r1 / r2 == pytest.approx(4.0, abs=1.5)


def test_slashed_contraction(lat):
    coeffs = coefficients(identity_frame(lat))
    assert np.max(np.abs(slashed_gamma(coeffs, GS))) == 0.0

    fine = Lattice(32, 32, 0.05, 0.05)
    lt, lx = fine.nt * fine.dt, fine.nx * fine.dx
    t = (np.arange(fine.nt) * fine.dt)[:, None]
    x = (np.arange(fine.nx) * fine.dx)[None, :]
    theta = 0.5 * np.sin(2 * np.pi * t / lt) + 0.3 * np.sin(2 * np.pi * x / lx)
    frame = FrameField(fine, np.exp(1j * theta)[..., None, None] * np.eye(4, dtype=complex))
    coeffs = coefficients(frame)
    got = slashed_gamma(coeffs, GS)
    d0 = 0.5 * (2 * np.pi / lt) * np.cos(2 * np.pi * t / lt) + 0.0 * x
    d1 = 0.3 * (2 * np.pi / lx) * np.cos(2 * np.pi * x / lx) + 0.0 * t
    expected = 1j * (d0[..., None, None] * GS.gamma[0] + d1[..., None, None] * GS.gamma[1])
    assert np.max(np.abs(got - expected)) <= 0.02 * np.max(np.abs(expected))


def test_slashed_derivative_law_residual_second_order():
    # gamma-contracted field-point derivative of L(., x) plus the contracted
    # coefficients acting on L(., x) shrinks at second order
    def residual(lat):
        frame = random_smooth_frame(lat, seed=7)
        tr = make_transport(frame)
        coeffs = coefficients(frame)
        field = tr.field_from((0, 0))
        out = np.zeros(lat.shape + (4, 4), dtype=complex)
        for mu in range(2):
            out += np.einsum("ab,txbc->txac", GS.gamma[mu], lat.diff(field, mu, axes=(0, 1)))
        out += np.einsum("txab,txbc->txac", slashed_gamma(coeffs, GS), field)
        return np.max(np.abs(out))

    lat = Lattice(12, 12, 0.1, 0.11)
    assert residual(lat) / residual(lat.refine()) == pytest.approx(4.0, abs=1.5)


# -- sections -------------------------------------------------------------------

def test_transported_section_identity_frame(lat):
    psi0 = np.array([1.0, 2.0, -1.0, 0.5], dtype=complex)
    sec = transported_section(identity_frame(lat), psi0, (0, 0))
    expected = np.broadcast_to(psi0[:, None, None], (4, lat.nt, lat.nx))
    assert np.array_equal(sec.values, expected)


def test_transported_section_round_trip_and_compatibility(lat):
    rng = np.random.default_rng(8)
    frame = random_smooth_frame(lat, seed=8)
    tr = make_transport(frame)
    psi0 = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    sec = transported_section(frame, psi0, (2, 3))
    # round trip back to the fibre vector
    rebuilt = np.einsum("txab,btx->atx", frame.l, sec.values)
    assert np.max(np.abs(rebuilt - psi0[:, None, None])) <= 1e-12 * np.max(np.abs(psi0))
    # transport compatibility between random site pairs
    for _ in range(20):
        x1, x2 = random_sites(lat, rng, 2)
        lhs = sec.values[:, x2[0], x2[1]]
        rhs = tr(x2, x1) @ sec.values[:, x1[0], x1[1]]
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_derivation_annihilates_transported_sections():
    def residual(lat):
        frame = random_smooth_frame(lat, seed=9)
        coeffs = coefficients(frame)
        sec = transported_section(frame, np.array([1.0, -0.5, 0.25j, 0.8]), (0, 0))
        worst = 0.0
        for mu in range(2):
            worst = max(worst, np.max(np.abs(derivation_along(sec, coeffs, mu).values)))
        return worst

    lat = Lattice(12, 12, 0.1, 0.11)
    assert residual(lat) / residual(lat.refine()) == pytest.approx(4.0, abs=1.5)


def test_derivation_on_transport_columns():
    # sections s(x) = L(x, x_ref) v are annihilated up to stencil error
    def residual(lat):
        frame = random_smooth_frame(lat, seed=10)
        tr = make_transport(frame)
        coeffs = coefficients(frame)
        v = np.array([0.3, -1.0, 0.7, 0.2], dtype=complex)
        from bundlelab.transport import Section
        sec = Section(lat, np.einsum("txab,b->atx", tr.field_from((1, 1)), v))
        return max(np.max(np.abs(derivation_along(sec, coeffs, mu).values)) for mu in range(2))

    lat = Lattice(12, 12, 0.1, 0.11)
    assert residual(lat) / residual(lat.refine()) == pytest.approx(4.0, abs=1.5)


def test_derivation_trivial_and_linear(lat):
    frame = identity_frame(lat)
    coeffs = coefficients(frame)
    from bundlelab.transport import Section
    const = Section(lat, np.broadcast_to(np.array([1.0, 2.0, 3.0, 4.0])[:, None, None],
                                         (4, lat.nt, lat.nx)).astype(complex))
    for mu in range(4):
        assert np.max(np.abs(derivation_along(const, coeffs, mu).values)) == 0.0

    rng = np.random.default_rng(11)
    coeffs = coefficients(random_smooth_frame(lat, seed=11))
    s1 = Section(lat, rng.standard_normal((4,) + lat.shape) + 1j * rng.standard_normal((4,) + lat.shape))
    s2 = Section(lat, rng.standard_normal((4,) + lat.shape) + 1j * rng.standard_normal((4,) + lat.shape))
    al, be = 1.3 - 0.2j, -0.7 + 0.9j
    lhs = derivation_along(Section(lat, al * s1.values + be * s2.values), coeffs, 0).values
    rhs = al * derivation_along(s1, coeffs, 0).values + be * derivation_along(s2, coeffs, 0).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))


# -- morphisms -------------------------------------------------------------------

def test_bundle_morphism_identity_frame(lat):
    rng = np.random.default_rng(12)
    op = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    got = bundle_morphism(identity_frame(lat), op)
    assert np.max(np.abs(got - op)) <= 1e-14


def test_frame_gamma_anticommutators(lat):
    frame = random_smooth_frame(lat, seed=13)
    g = [bundle_morphism(frame, GS.gamma[mu]) for mu in range(4)]
    eta = np.diag([1.0, -1.0, -1.0, -1.0])
    for mu in range(4):
        for nu in range(4):
            anti = np.einsum("txab,txbc->txac", g[mu], g[nu]) \
                 + np.einsum("txab,txbc->txac", g[nu], g[mu])
            expected = 2.0 * eta[mu, nu] * np.eye(4)
            assert np.max(np.abs(anti - expected)) <= 1e-12 * max(1.0, abs(2 * eta[mu, nu]))


def test_bundle_diracian_free_case(lat):
    from bundlelab.waveeq import PotentialField, diracian_matrix_field
    frame = random_smooth_frame(lat, seed=14)
    m = 1.7
    d = diracian_matrix_field(PotentialField.zero(lat), m)
    got = bundle_morphism(frame, d)
    assert np.max(np.abs(got - m * np.eye(4))) <= 1e-12 * m


def test_bundle_slashed_potential_matches_conjugated(lat):
    # contracting frame gammas with the potential equals conjugating the
    # contracted potential: scalars commute with the frame
    from bundlelab.lattice import random_smooth_field
    rng = np.random.default_rng(15)
    frame = random_smooth_frame(lat, seed=15)
    a = np.stack([random_smooth_field(lat, rng, real=True) for _ in range(4)])
    g = [bundle_morphism(frame, GS.gamma[mu]) for mu in range(4)]
    lhs = sum(a[mu][..., None, None] * g[mu] for mu in range(4))
    aslash = np.einsum("mab,mtx->txab", GS.gamma, a.astype(complex))
    rhs = bundle_morphism(frame, aslash)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))


# -- generic transport check -------------------------------------------------------

def test_generic_check_identity_factorization(lat):
    f = np.broadcast_to(np.eye(3, dtype=complex), lat.shape + (3, 3)).copy()
    report = generic_transport_check(f, nsamples=30, seed=0)
    assert report.max_composition == 0.0
    assert report.max_identity == 0.0
    # (x + y) - x - y rounding: the linearity probe is noise-bounded, not exact
    assert report.max_linearity <= 1e-13


def test_generic_check_random_smooth_factorization(lat):
    f = random_smooth_frame(lat, n=3, seed=16).l
    report = generic_transport_check(f, nsamples=60, seed=1)
    assert report.max_violation() <= 1e-12


def test_generic_check_detects_corrupted_inverse(lat):
    f = random_smooth_frame(lat, n=3, seed=17).l
    finv = np.linalg.inv(f)
    finv[2, 3] += 0.05 * np.eye(3)  # non-matching inverse at one site
    report = generic_transport_check(f, inverse=finv, nsamples=400, seed=2)
    assert report.max_composition > 1e-6


# -- presets ------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["identity", "phase", "rotation", "shear", "random-smooth"])
def test_presets_produce_valid_frames(lat, name):
    frame = frame_from_preset(lat, name)
    assert frame.l.shape == lat.shape + (4, 4)
    if name in ("identity", "phase", "rotation"):
        assert frame.unitary
    if name == "shear":
        assert not frame.unitary


def test_unknown_preset_rejected(lat):
    with pytest.raises(ValueError, match="unknown preset"):
        frame_from_preset(lat, "tetrad")


def test_random_smooth_unitary_variant(lat):
    frame = random_smooth_frame(lat, seed=3, unitary=True)
    assert frame.unitary
