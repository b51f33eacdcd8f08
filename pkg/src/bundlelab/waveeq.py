"""Conventional-picture solvers and residual evaluators for the first-order
spinor equation and the scalar wave equation (plain, 5-component and
2-component forms), plus the frame-picture evolution.

Unit bookkeeping: lattice axis 0 is the scaled time coordinate x0 = c*t, so
the physical step between neighbouring slices is dt/c.  With the default
hbar = c = 1 the distinction disappears.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .clifford import GammaSet, Gamma5Set, build_gamma_set, build_gamma5_set
from .lattice import Lattice
from .transport import FrameField, Section


class DegenerateMassError(ValueError):
    """The 5-component reduction needs m > 0 (one component is m*c*phi)."""


class StepAccuracyWarning(UserWarning):
    """|H| dt / hbar exceeds 1; unitarity is kept but accuracy degrades."""


@dataclass(frozen=True)
class PotentialField:
    """Electromagnetic 4-potential A_mu(t, x) with charge and unit constants.

    ``A`` has shape (4, nt, nx), real; components 2 and 3 stay zero in
    1+1-dimensional runs.  kappa = e/(i hbar c) is the coupling that enters
    the covariant derivative d_mu - kappa A_mu.
    """

    lattice: Lattice
    A: np.ndarray
    e: float = 1.0
    hbar: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.A.shape != (4,) + self.lattice.shape:
            raise ValueError(f"potential shape {self.A.shape}, expected (4, nt, nx)")
        if self.hbar <= 0 or self.c <= 0:
            raise ValueError("hbar and c must be positive")

    @classmethod
    def zero(cls, lattice: Lattice, e: float = 1.0, hbar: float = 1.0, c: float = 1.0):
        return cls(lattice, np.zeros((4,) + lattice.shape), e=e, hbar=hbar, c=c)

    @property
    def kappa(self) -> complex:
        return self.e / (1j * self.hbar * self.c)

    @property
    def is_static(self) -> bool:
        return bool(np.all(self.A == self.A[:, :1, :]))

    def covariant_diff(self, f: np.ndarray, mu: int) -> np.ndarray:
        """(d_mu - kappa A_mu) f for a scalar or component-major field."""
        return self.lattice.diff(f, mu) - self.kappa * self.A[mu] * f


@dataclass(frozen=True)
class TwoComponentField:
    """(phi, d0 phi) pairs on the whole grid, shape (2, nt, nx)."""

    lattice: Lattice
    values: np.ndarray
    consistent: bool = False

    def consistency_residual(self) -> float:
        """Max deviation of component 1 from the centered time difference of
        component 0, interior slices only (histories are not time-periodic)."""
        d0 = self.lattice.diff(self.values[0], 0)
        dev = np.abs(self.values[1] - d0)[1:-1]
        return float(np.max(dev)) if dev.size else 0.0


@dataclass(frozen=True)
class FiveComponentField:
    """First-order reduction stack (i hbar D_mu phi, m c phi), shape (5, nt, nx)."""

    lattice: Lattice
    values: np.ndarray


_GAMMA = build_gamma_set()
_GAMMA5 = build_gamma5_set()


# -- first-order spinor equation -------------------------------------------

def dirac_residual(psi: np.ndarray, A: PotentialField, m: float,
                   gamma: GammaSet = _GAMMA) -> np.ndarray:
    """(i hbar gamma^mu D_mu - m c) psi with centered differences, (4, nt, nx)."""
    if psi.shape != (4,) + A.lattice.shape:
        raise ValueError(f"spinor shape {psi.shape}, expected (4, nt, nx)")
    out = -(m * A.c) * psi.astype(complex)
    for mu in range(4):
        cov = A.covariant_diff(psi, mu)
        out += 1j * A.hbar * np.einsum("ab,btx->atx", gamma.gamma[mu], cov)
    return out


def diracian_matrix_field(A: PotentialField, m: float,
                          gamma: GammaSet = _GAMMA) -> np.ndarray:
    """Pointwise operator m c + (e/c) slash(A) of the Schroedinger-like split,
    shape (nt, nx, 4, 4).  The residual above equals i hbar slash(d) psi minus
    this matrix acting on psi."""
    aslash = np.einsum("mab,mtx->txab", gamma.gamma, A.A.astype(complex))
    out = (A.e / A.c) * aslash
    out += (m * A.c) * np.eye(4)
    return out


def dirac_hamiltonian(A: PotentialField, m: float, t: int = 0,
                      gamma: GammaSet = _GAMMA) -> np.ndarray:
    """Time-slice Hamiltonian of the spinor equation, shape (4 nx, 4 nx).

    H = gamma^0 (-i hbar c gamma^k D_k + m c^2) + e A^0, with the slice state
    flattened component-major (index = component * nx + site).  Hermitian for
    real potentials; a non-Hermitian result signals bad input.
    """
    lat = A.lattice
    nx = lat.nx
    hbar, c, e = A.hbar, A.c, A.e
    dc = _centered_diff_matrix(nx, lat.dx)
    g0 = gamma.gamma[0]
    h = (m * c * c) * np.kron(g0, np.eye(nx))
    h = h + e * np.kron(np.eye(4), np.diag(A.A[0, t].astype(complex)))
    for k in range(1, 4):
        g0k = g0 @ gamma.gamma[k]
        if k == 1:
            h = h + (-1j * hbar * c) * np.kron(g0k, dc)
        if np.any(A.A[k, t]):
            h = h + e * np.kron(g0k, np.diag(A.A[k, t].astype(complex)))
    dev = np.max(np.abs(h - h.conj().T))
    if dev > 1e-12 * max(1.0, np.max(np.abs(h))):
        raise ValueError(f"Hamiltonian not Hermitian (deviation {dev:.3g}); check the potential")
    return h


def _centered_diff_matrix(nx: int, dx: float) -> np.ndarray:
    d = np.zeros((nx, nx))
    for i in range(nx):
        d[i, (i + 1) % nx] = 1.0 / (2.0 * dx)
        d[i, (i - 1) % nx] = -1.0 / (2.0 * dx)
    return d


def _cn_factors(h: np.ndarray, dtau: float, hbar: float):
    lam = 0.5j * dtau / hbar
    eye = np.eye(h.shape[0])
    return eye + lam * h, eye - lam * h


def crank_nicolson_step_matrix(h: np.ndarray, dtau: float, hbar: float = 1.0) -> np.ndarray:
    """(1 + i dtau H / 2 hbar)^{-1} (1 - i dtau H / 2 hbar); the Cayley step,
    exactly unitary for Hermitian H."""
    aa, bb = _cn_factors(h, dtau, hbar)
    return np.linalg.solve(aa, bb)


def _flatten_slice(psi: np.ndarray, ncomp: int, nx: int) -> tuple[np.ndarray, bool]:
    if psi.shape == (ncomp, nx):
        return psi.reshape(ncomp * nx).astype(complex), True
    if psi.shape == (ncomp * nx,):
        return psi.astype(complex), False
    raise ValueError(f"slice state shape {psi.shape}, expected ({ncomp},{nx}) or ({ncomp * nx},)")


def evolve_dirac(psi0: np.ndarray, A: PotentialField, m: float, t0: int, t1: int,
                 scheme: str = "crank-nicolson") -> np.ndarray:
    """Propagate a slice state from lattice time t0 to t1.

    ``crank-nicolson`` is exactly unitary for Hermitian slice Hamiltonians
    (midpoint average for time-dependent potentials); ``exact-exponential``
    diagonalizes a static Hamiltonian once.
    """
    vec, was2d = _flatten_slice(psi0, 4, A.lattice.nx)
    u = dirac_evolution_matrix(A, m, t0, t1, scheme)
    out = u @ vec
    return out.reshape(4, A.lattice.nx) if was2d else out


def dirac_evolution_matrix(A: PotentialField, m: float, t0: int, t1: int,
                           scheme: str = "crank-nicolson") -> np.ndarray:
    """Dense slice-to-slice evolution matrix U(t1, t0), shape (4 nx, 4 nx)."""
    lat = A.lattice
    dtau = lat.dt / A.c
    if not (0 <= t0 < lat.nt and 0 <= t1 < lat.nt):
        raise ValueError(f"times ({t0}, {t1}) outside lattice 0..{lat.nt - 1}")
    if scheme == "exact-exponential":
        if not A.is_static:
            raise ValueError("exact-exponential needs a time-independent potential")
        h = dirac_hamiltonian(A, m, 0)
        evals, vecs = np.linalg.eigh(h)
        phase = np.exp(-1j * evals * (t1 - t0) * dtau / A.hbar)
        return (vecs * phase) @ vecs.conj().T
    if scheme != "crank-nicolson":
        raise ValueError(f"unknown scheme '{scheme}'")

    static = A.is_static
    h0 = dirac_hamiltonian(A, m, 0)
    hnorm = np.max(np.abs(np.linalg.eigvalsh(h0)))
    if hnorm * dtau / A.hbar > 1.0:
        warnings.warn(f"|H| dt / hbar = {hnorm * dtau / A.hbar:.2f} > 1; "
                      "step resolves the fastest phases poorly", StepAccuracyWarning)
    u = np.eye(4 * lat.nx, dtype=complex)
    lo, hi, forward = (t0, t1, True) if t1 >= t0 else (t1, t0, False)
    steps = range(lo, hi) if forward else range(hi - 1, lo - 1, -1)
    for t in steps:
        if static:
            hmid = h0
        else:
            hmid = 0.5 * (dirac_hamiltonian(A, m, t) + dirac_hamiltonian(A, m, t + 1))
        aa, bb = _cn_factors(hmid, dtau, A.hbar)
        if forward:
            u = np.linalg.solve(aa, bb @ u)
        else:
            u = np.linalg.solve(bb, aa @ u)
    return u


def evolve_dirac_bundle(psi0_bundle: np.ndarray | Section, frame: FrameField,
                        A: PotentialField, m: float, t0: int, t1: int,
                        scheme: str = "crank-nicolson") -> np.ndarray:
    """Frame-picture propagation: lift with l at t0, evolve, project at t1.

    Accepts the frame components as a (4, nx) slice (a Section is read at its
    t0 slice) and returns the (4, nx) frame components at t1.  By
    construction this equals l^{-1} applied to the conventional evolution of
    l applied to the input.
    """
    if isinstance(psi0_bundle, Section):
        psi0_bundle = psi0_bundle.values[:, t0, :]
    vec, _ = _flatten_slice(psi0_bundle, 4, A.lattice.nx)
    comp = vec.reshape(4, A.lattice.nx)
    lifted = np.einsum("xab,bx->ax", frame.l[t0], comp)
    evolved = evolve_dirac(lifted, A, m, t0, t1, scheme=scheme)
    return np.einsum("xab,bx->ax", frame.linv[t1], evolved)


# -- scalar wave equation ---------------------------------------------------

def kg_residual(phi: np.ndarray, A: PotentialField, m: float) -> np.ndarray:
    """(D^mu D_mu + m^2 c^2 / hbar^2) phi with composed centered differences.

    The second-order operator is built by applying the covariant first
    difference twice, so the first-order reductions reproduce it exactly.
    """
    if phi.shape != A.lattice.shape:
        raise ValueError(f"field shape {phi.shape}, expected {A.lattice.shape}")
    phi = phi.astype(complex)
    out = (m * A.c / A.hbar) ** 2 * phi
    for mu in range(4):
        sign = 1.0 if mu == 0 else -1.0
        out += sign * A.covariant_diff(A.covariant_diff(phi, mu), mu)
    return out


def kg_reduce_5(phi: np.ndarray, A: PotentialField, m: float) -> FiveComponentField:
    """Stack (i hbar D_mu phi, m c phi); rejects m <= 0 (degenerate)."""
    if m <= 0:
        raise DegenerateMassError(f"5-component reduction needs m > 0, got {m}")
    phi = phi.astype(complex)
    vals = np.empty((5,) + A.lattice.shape, dtype=complex)
    for mu in range(4):
        vals[mu] = 1j * A.hbar * A.covariant_diff(phi, mu)
    vals[4] = m * A.c * phi
    return FiveComponentField(A.lattice, vals)


def kg5_residual(varphi: FiveComponentField, A: PotentialField, m: float,
                 gamma5: Gamma5Set = _GAMMA5) -> np.ndarray:
    """(i hbar Gamma^mu D_mu - m c) acting on a 5-component stack.

    For stacks produced by ``kg_reduce_5`` the first four rows vanish
    identically and the last row is -hbar^2 times the scalar residual.
    """
    vals = varphi.values if isinstance(varphi, FiveComponentField) else varphi
    if vals.shape != (5,) + A.lattice.shape:
        raise ValueError(f"stack shape {vals.shape}, expected (5, nt, nx)")
    out = -(m * A.c) * vals.astype(complex)
    for mu in range(4):
        cov = A.covariant_diff(vals, mu)
        out += 1j * A.hbar * np.einsum("ij,jtx->itx", gamma5.gamma5[mu], cov)
    return out


def _kg2_generator(A: PotentialField, m: float, t: int) -> np.ndarray:
    """First-order form of the scalar equation on a slice: d0 (phi, chi) =
    M (phi, chi), shape (2 nx, 2 nx)."""
    lat = A.lattice
    nx = lat.nx
    kappa = A.kappa
    mu2 = (m * A.c / A.hbar) ** 2
    dc = _centered_diff_matrix(nx, lat.dx).astype(complex)
    d1 = dc - np.diag(kappa * A.A[1, t])
    a0 = kappa * A.A[0, t]
    da0 = kappa * (A.A[0, (t + 1) % lat.nt] - A.A[0, (t - 1) % lat.nt]) / (2.0 * lat.dt)
    s = d1 @ d1 - mu2 * np.eye(nx) + np.diag(da0 - a0 * a0)
    m2 = np.zeros((2 * nx, 2 * nx), dtype=complex)
    m2[:nx, nx:] = np.eye(nx)
    m2[nx:, :nx] = s
    m2[nx:, nx:] = np.diag(2.0 * a0)
    return m2


def kg_two_component_matrix(A: PotentialField, m: float, dt: float, t: int = 0) -> np.ndarray:
    """One midpoint (order-2) step matrix for the (phi, d0 phi) system."""
    lat = A.lattice
    gen_t = _kg2_generator(A, m, t)
    if A.is_static:
        gen_mid = gen_t
    else:
        gen_mid = 0.5 * (gen_t + _kg2_generator(A, m, (t + 1) % lat.nt))
    eye = np.eye(gen_t.shape[0])
    return eye + dt * (gen_mid @ (eye + 0.5 * dt * gen_t))


def kg_two_component_step(state: np.ndarray, A: PotentialField, m: float,
                          dt: float, t: int = 0) -> np.ndarray:
    """Advance a (2, nx) slice of (phi, d0 phi) by one midpoint step.

    For A = 0 the flux-like charge Im sum(conj(phi) chi) dx drifts only at
    the integrator's order.
    """
    vec, was2d = _flatten_slice(state, 2, A.lattice.nx)
    out = kg_two_component_matrix(A, m, dt, t) @ vec
    return out.reshape(2, A.lattice.nx) if was2d else out


def kg_charge(state: np.ndarray, dx: float) -> float:
    """Im sum conj(phi) * (d0 phi) * dx of a two-component slice."""
    phi, chi = (state[0], state[1]) if state.ndim == 2 else np.split(state, 2)
    return float(np.imag(np.sum(np.conj(phi) * chi)) * dx)


# -- auxiliary nonrelativistic slice Hamiltonian ----------------------------

def schrodinger_hamiltonian(lat: Lattice, m: float, A: PotentialField | None = None,
                            hbar: float = 1.0) -> np.ndarray:
    """-hbar^2/(2m) times the composed centered Laplacian, plus e A^0.

    Artifact plumbing used by the kernel machinery and scenarios: any
    Hermitian (nx, nx) matrix works there; this gives a standard one.
    """
    dc = _centered_diff_matrix(lat.nx, lat.dx)
    h = -(hbar * hbar / (2.0 * m)) * (dc @ dc)
    if A is not None:
        h = h + A.e * np.diag(A.A[0, 0])
    return h
