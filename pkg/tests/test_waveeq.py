import numpy as np
import pytest

from bundlelab.lattice import Lattice, random_smooth_field
from bundlelab.transport import identity_frame, phase_frame, random_smooth_frame
from bundlelab.waveeq import (DegenerateMassError, PotentialField,
                              StepAccuracyWarning, TwoComponentField,
                              dirac_hamiltonian, dirac_residual, evolve_dirac,
                              evolve_dirac_bundle, kg5_residual, kg_charge,
                              kg_reduce_5, kg_residual, kg_two_component_matrix,
                              kg_two_component_step, schrodinger_hamiltonian)

from conftest import dirac_lattice_mode, kg_lattice_mode


@pytest.fixture
def lat():
    return Lattice(nt=16, nx=16, dt=0.08, dx=0.1)


def smooth_potential(lat, rng, e=0.5, amps=(0.4, 0.3)):
    a = np.zeros((4,) + lat.shape)
    a[0] = amps[0] * random_smooth_field(lat, rng, real=True)
    a[1] = amps[1] * random_smooth_field(lat, rng, real=True)
    return PotentialField(lat, a, e=e)


# -- first-order residual -------------------------------------------------------

def test_dirac_residual_zero_field(lat):
    A = PotentialField.zero(lat)
    zero = np.zeros((4,) + lat.shape, dtype=complex)
    assert np.array_equal(dirac_residual(zero, A, 1.0), zero)


def test_dirac_residual_free_lattice_mode(lat):
    psi, m, _ = dirac_lattice_mode(lat, jt=2, jx=1)
    res = dirac_residual(psi, PotentialField.zero(lat), m)
    assert np.max(np.abs(res)) <= 1e-10


def test_dirac_residual_of_evolved_history_second_order():
    def residual(lat):
        nx, dx = lat.nx, lat.dx
        p = 2.0 * np.pi / (nx * dx)
        m = 1.0
        A = PotentialField.zero(lat)
        h = dirac_hamiltonian(A, m)
        # continuum positive-energy spinor at momentum p
        x = np.arange(nx) * dx
        mode = np.exp(1j * p * x)
        evals, vecs = np.linalg.eigh(h)
        # pick the eigenvector overlapping the plane-wave subspace, lowest E>0
        proj = np.kron(np.eye(4), np.diag(mode / np.sqrt(nx)))
        cand = [a for a in range(len(evals)) if evals[a] > 0]
        weights = [np.abs(proj.conj().T @ vecs[:, a]).max() for a in cand]
        psi0 = vecs[:, cand[int(np.argmax(weights))]]
        hist = np.empty((4,) + lat.shape, dtype=complex)
        hist[:, 0] = psi0.reshape(4, nx)
        for t in range(1, lat.nt):
            hist[:, t] = evolve_dirac(hist[:, t - 1], A, m, t - 1, t)
        res = dirac_residual(hist, A, m)
        return np.max(np.abs(res[:, 1:-1]))

    lat = Lattice(16, 16, 0.08, 0.1)
    r1, r2 = residual(lat), residual(lat.refine())
    assert r1 / r2 == pytest.approx(4.0, abs=1.5)


def test_dirac_residual_gauge_covariant_norm():
    # A -> A + grad(chi), psi -> exp((e/(i hbar c)) chi) psi changes the
    # residual norm only at stencil order
    def deviation(lat):
        rng = np.random.default_rng(5)
        lt, lx = lat.nt * lat.dt, lat.nx * lat.dx
        t = (np.arange(lat.nt) * lat.dt)[:, None]
        x = (np.arange(lat.nx) * lat.dx)[None, :]
        chi = 0.6 * np.sin(2 * np.pi * t / lt) * np.cos(2 * np.pi * x / lx)
        dchi0 = 0.6 * (2 * np.pi / lt) * np.cos(2 * np.pi * t / lt) * np.cos(2 * np.pi * x / lx)
        dchi1 = -0.6 * (2 * np.pi / lx) * np.sin(2 * np.pi * t / lt) * np.sin(2 * np.pi * x / lx)
        A = smooth_potential(lat, rng, e=0.8)
        a2 = A.A.copy()
        a2[0] += dchi0
        a2[1] += dchi1
        A2 = PotentialField(lat, a2, e=0.8)
        psi = np.stack([random_smooth_field(lat, rng) for _ in range(4)])
        phase = np.exp(A.kappa * chi)
        m = 1.1
        res1 = dirac_residual(psi, A, m)
        res2 = dirac_residual(phase * psi, A2, m)
        # pointwise covariance res2 = phase * res1 up to stencil error; it
        # bounds the norm shift as well
        dev = np.max(np.abs(res2 - phase * res1))
        assert abs(np.max(np.abs(res2)) - np.max(np.abs(res1))) <= dev + 1e-13
        return dev

    lat = Lattice(12, 12, 0.1, 0.11)
    d1, d2 = deviation(lat), deviation(lat.refine())
    assert d1 / d2 == pytest.approx(4.0, abs=1.8)


# -- slice Hamiltonian -----------------------------------------------------------

def test_hamiltonian_hermitian_and_pm_spectrum():
    lat = Lattice(4, 4, 0.1, 0.2)
    h = dirac_hamiltonian(PotentialField.zero(lat), 0.0)
    assert np.max(np.abs(h - h.conj().T)) <= 1e-12
    evals = np.linalg.eigvalsh(h)
    assert np.max(np.abs(np.sort(evals) + np.sort(-evals)[::-1])) <= 1e-12


def test_hamiltonian_constant_a0_shifts_spectrum(lat):
    a = np.zeros((4,) + lat.shape)
    c0 = 0.37
    a[0] += c0
    e = 1.3
    h0 = dirac_hamiltonian(PotentialField.zero(lat, e=e), 1.0)
    h1 = dirac_hamiltonian(PotentialField(lat, a, e=e), 1.0)
    s0 = np.linalg.eigvalsh(h0)
    s1 = np.linalg.eigvalsh(h1)
    assert np.max(np.abs(s1 - (s0 + e * c0))) <= 1e-10


def test_hamiltonian_free_lattice_dispersion(lat):
    m, hbar, c = 0.7, 1.0, 1.0
    h = dirac_hamiltonian(PotentialField.zero(lat), m)
    evals = np.sort(np.linalg.eigvalsh(h))
    ks = 2.0 * np.pi * np.arange(lat.nx) / (lat.nx * lat.dx)
    ktil = np.sin(ks * lat.dx) / lat.dx
    ene = np.sqrt((hbar * c * ktil) ** 2 + (m * c * c) ** 2)
    expected = np.sort(np.concatenate([ene, ene, -ene, -ene]))
    assert np.max(np.abs(evals - expected)) <= 1e-10


def test_hamiltonian_rejects_complex_potential(lat):
    a = np.zeros((4,) + lat.shape, dtype=complex)
    a[0] = 1j * np.ones(lat.shape)
    with pytest.raises(ValueError, match="Hermitian"):
        dirac_hamiltonian(PotentialField(lat, a), 1.0)


# -- evolution --------------------------------------------------------------------

def test_evolve_identity_when_times_equal(lat):
    rng = np.random.default_rng(0)
    psi0 = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
    out = evolve_dirac(psi0, PotentialField.zero(lat), 1.0, 3, 3)
    assert np.max(np.abs(out - psi0)) <= 1e-14


def test_evolve_conserves_norm(lat):
    rng = np.random.default_rng(1)
    A = smooth_potential(lat, rng)
    psi = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
    n0 = np.linalg.norm(psi)
    out = evolve_dirac(psi, A, 1.0, 0, lat.nt - 1)
    assert abs(np.linalg.norm(out) - n0) <= 1e-12 * n0


def test_evolve_backward_inverts_forward(lat):
    rng = np.random.default_rng(2)
    A = smooth_potential(lat, rng)
    psi = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
    there = evolve_dirac(psi, A, 1.0, 0, 9)
    back = evolve_dirac(there, A, 1.0, 9, 0)
    assert np.max(np.abs(back - psi)) <= 1e-11 * np.max(np.abs(psi))


def test_crank_nicolson_against_exact_exponential():
    def deviation(lat):
        rng = np.random.default_rng(3)
        A = PotentialField.zero(lat)
        psi = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
        a = evolve_dirac(psi, A, 1.0, 0, lat.nt - 1, scheme="crank-nicolson")
        b = evolve_dirac(psi, A, 1.0, 0, lat.nt - 1, scheme="exact-exponential")
        return np.max(np.abs(a - b))

    lat = Lattice(51, 16, 0.05, 0.2)
    fine = Lattice(101, 16, 0.025, 0.2)  # same physical window, halved step
    assert deviation(lat) / deviation(fine) == pytest.approx(4.0, abs=1.5)


def test_exact_exponential_requires_static(lat):
    rng = np.random.default_rng(4)
    a = np.zeros((4,) + lat.shape)
    a[0] = random_smooth_field(lat, rng, real=True)
    with pytest.raises(ValueError, match="time-independent"):
        evolve_dirac(np.ones((4, lat.nx), dtype=complex),
                     PotentialField(lat, a), 1.0, 0, 2, scheme="exact-exponential")


def test_step_accuracy_warning():
    lat = Lattice(8, 8, 2.0, 0.1)  # huge time step
    with pytest.warns(StepAccuracyWarning):
        evolve_dirac(np.ones((4, lat.nx), dtype=complex),
                     PotentialField.zero(lat), 1.0, 0, 1)


def test_bundle_evolution_identity_frame(lat):
    rng = np.random.default_rng(6)
    A = smooth_potential(lat, rng)
    psi = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
    a = evolve_dirac_bundle(psi, identity_frame(lat), A, 1.0, 0, 10)
    b = evolve_dirac(psi, A, 1.0, 0, 10)
    assert np.max(np.abs(a - b)) <= 1e-13 * np.max(np.abs(b))


def test_bundle_evolution_round_trip(lat):
    rng = np.random.default_rng(7)
    A = smooth_potential(lat, rng)
    frame = random_smooth_frame(lat, seed=7)
    psi_conv = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
    # frame components of the same state at the start slice
    psi_bundle = np.einsum("xab,bx->ax", frame.linv[0], psi_conv)
    out_bundle = evolve_dirac_bundle(psi_bundle, frame, A, 1.0, 0, 12)
    lifted = np.einsum("xab,bx->ax", frame.l[12], out_bundle)
    out_conv = evolve_dirac(psi_conv, A, 1.0, 0, 12)
    assert np.max(np.abs(lifted - out_conv)) <= 1e-12 * np.max(np.abs(out_conv))


def test_bundle_evolution_unitary_frame_norm(lat):
    rng = np.random.default_rng(8)
    frame = phase_frame(lat)
    A = PotentialField.zero(lat)
    psi = rng.standard_normal((4, lat.nx)) + 1j * rng.standard_normal((4, lat.nx))
    out = evolve_dirac_bundle(psi, frame, A, 1.0, 0, lat.nt - 1)
    assert abs(np.linalg.norm(out) - np.linalg.norm(psi)) <= 1e-12 * np.linalg.norm(psi)


# -- scalar equation ----------------------------------------------------------------

def test_kg_residual_zero(lat):
    A = PotentialField.zero(lat)
    zero = np.zeros(lat.shape, dtype=complex)
    assert np.array_equal(kg_residual(zero, A, 1.0), zero)


def test_kg_residual_free_lattice_mode(lat):
    phi, m, _ = kg_lattice_mode(lat, jt=2, jx=1)
    res = kg_residual(phi, PotentialField.zero(lat), m)
    assert np.max(np.abs(res)) <= 1e-10


def _leapfrog_history(lat, phi0, chi0, m):
    """Independent second-order integrator for the free scalar equation."""
    from bundlelab.waveeq import _centered_diff_matrix
    dc = _centered_diff_matrix(lat.nx, lat.dx)
    lap = dc @ dc
    mu2 = m * m
    hist = np.empty(lat.shape, dtype=complex)
    hist[0] = phi0
    acc0 = lap @ phi0 - mu2 * phi0
    hist[1] = phi0 + lat.dt * chi0 + 0.5 * lat.dt ** 2 * acc0
    for t in range(1, lat.nt - 1):
        acc = lap @ hist[t] - mu2 * hist[t]
        hist[t + 1] = 2.0 * hist[t] - hist[t - 1] + lat.dt ** 2 * acc
    return hist


def test_kg_residual_of_leapfrog_history_second_order():
    def residual(lat):
        rng = np.random.default_rng(9)
        x = np.arange(lat.nx) * lat.dx
        lx = lat.nx * lat.dx
        phi0 = np.exp(2j * np.pi * x / lx) + 0.3 * np.exp(-2j * np.pi * x / lx)
        chi0 = 0.2j * np.exp(2j * np.pi * x / lx)
        hist = _leapfrog_history(lat, phi0, chi0, m=1.0)
        res = kg_residual(hist, PotentialField.zero(lat), 1.0)
        return np.max(np.abs(res[2:-2]))

    lat = Lattice(32, 16, 0.05, 0.15)
    fine = Lattice(64, 32, 0.025, 0.075)
    assert residual(lat) / residual(fine) == pytest.approx(4.0, abs=1.5)


def test_kg_reduction_zero_and_mass_guard(lat):
    A = PotentialField.zero(lat)
    zero = np.zeros(lat.shape, dtype=complex)
    red = kg_reduce_5(zero, A, 1.0)
    assert np.max(np.abs(red.values)) == 0.0
    assert np.max(np.abs(kg5_residual(red, A, 1.0))) == 0.0
    with pytest.raises(DegenerateMassError):
        kg_reduce_5(zero, A, 0.0)


def test_kg_reduction_solution_small_residual():
    lat = Lattice(16, 16, 0.08, 0.1)
    phi, m, _ = kg_lattice_mode(lat, jt=2, jx=1)
    A = PotentialField.zero(lat)
    res5 = kg5_residual(kg_reduce_5(phi, A, m), A, m)
    assert np.max(np.abs(res5)) <= 1e-9


def test_kg_reduction_exact_row_structure(lat):
    # rows 0..3 vanish identically, row 4 is -hbar^2 times the scalar residual,
    # for any field (solution or not) and any smooth potential
    rng = np.random.default_rng(10)
    A = smooth_potential(lat, rng, e=0.9)
    m = 1.4
    phi = random_smooth_field(lat, rng)
    res5 = kg5_residual(kg_reduce_5(phi, A, m), A, m)
    res = kg_residual(phi, A, m)
    assert np.max(np.abs(res5[:4])) <= 1e-12 * np.max(np.abs(res5))
    dev = res5[4] + A.hbar ** 2 * res
    assert np.max(np.abs(dev)) <= 1e-12 * np.max(np.abs(res))
    # norm comparison as a coarse regression of the linear relation
    ratio = np.linalg.norm(res5) / (A.hbar ** 2 * np.linalg.norm(res))
    assert 0.5 <= ratio <= 2.0


# -- two-component stepping -----------------------------------------------------------

def test_kg2_zero_state(lat):
    A = PotentialField.zero(lat)
    out = kg_two_component_step(np.zeros((2, lat.nx), dtype=complex), A, 1.0, lat.dt)
    assert np.max(np.abs(out)) == 0.0


def test_kg2_plane_wave_period():
    def error(lat, nsteps):
        A = PotentialField.zero(lat)
        m = 1.0
        x = np.arange(lat.nx) * lat.dx
        p = 2.0 * np.pi / (lat.nx * lat.dx)
        ptil = np.sin(p * lat.dx) / lat.dx
        omega = np.sqrt(ptil * ptil + m * m)
        mode = np.exp(1j * p * x)
        state = np.stack([mode, -1j * omega * mode])
        period = 2.0 * np.pi / omega
        dt = period / nsteps
        for _ in range(nsteps):
            state = kg_two_component_step(state, A, m, dt)
        return np.max(np.abs(state[0] - mode))

    lat = Lattice(8, 16, 0.05, 0.2)
    assert error(lat, 64) / error(lat, 128) == pytest.approx(4.0, abs=1.5)


def test_kg2_charge_drift_small():
    lat = Lattice(8, 16, 0.05, 0.2)
    A = PotentialField.zero(lat)
    rng = np.random.default_rng(11)
    state = rng.standard_normal((2, lat.nx)) + 1j * rng.standard_normal((2, lat.nx))
    q0 = kg_charge(state, lat.dx)
    assert abs(q0) > 1e-3
    for _ in range(100):
        state = kg_two_component_step(state, A, 1.0, 1e-3)
    drift = abs(kg_charge(state, lat.dx) - q0) / abs(q0)
    assert drift <= 1e-6


def test_two_component_field_consistency(lat):
    A = PotentialField.zero(lat)
    m = 1.0
    state = np.stack([np.exp(2j * np.pi * np.arange(lat.nx) / lat.nx),
                      np.zeros(lat.nx, dtype=complex)])
    hist = np.empty((2,) + lat.shape, dtype=complex)
    hist[:, 0] = state
    for t in range(1, lat.nt):
        state = kg_two_component_step(state, A, m, lat.dt, t - 1)
        hist[:, t] = state
    field = TwoComponentField(lat, hist, consistent=True)
    assert field.consistency_residual() <= 0.5 * lat.dt ** 2 * 10


# -- auxiliary Hamiltonian ---------------------------------------------------------

def test_schrodinger_hamiltonian_hermitian(lat):
    h = schrodinger_hamiltonian(lat, m=1.0)
    assert np.max(np.abs(h - h.conj().T)) <= 1e-12
