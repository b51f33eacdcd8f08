"""Frame fields, two-point transports, connection coefficients and section
calculus.

A frame field assigns to every site an invertible matrix l(x) identifying
the fibre over x with the typical fibre.  The induced two-point transport
L(y, x) = l(y)^{-1} l(x) obeys the composition and identity laws exactly by
construction; its coefficients l^{-1} d_mu l generate the derivation
D_mu = d_mu + Gamma_mu that annihilates transported sections.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import matrixop
from .lattice import Lattice


class FrameField(matrixop.FrameMatrixField):
    """Sitewise fibre isomorphisms l(x); optionally flagged unitary.

    ``unitary=None`` auto-detects (max deviation of l^+ l from identity
    below 1e-12 at every site).
    """

    def __init__(self, lattice: Lattice, l: np.ndarray, cond_bound: float = 1e6,
                 unitary: bool | None = None):
        super().__init__(lattice, l, cond_bound)
        if unitary is None:
            dev = self.f.conj().swapaxes(-1, -2) @ self.f - np.eye(self.n)
            unitary = bool(np.max(np.abs(dev)) <= 1e-12)
        elif unitary:
            dev = self.f.conj().swapaxes(-1, -2) @ self.f - np.eye(self.n)
            if np.max(np.abs(dev)) > 1e-12:
                raise ValueError("frame flagged unitary but l^+ l deviates from identity")
        self.unitary = unitary

    @property
    def l(self) -> np.ndarray:
        return self.f

    @property
    def linv(self) -> np.ndarray:
        return self.finv


@dataclass(frozen=True)
class Transport:
    """Two-point transport L(y, x) = l(y)^{-1} l(x) between lattice sites."""

    frame: FrameField

    def __call__(self, y: tuple[int, int], x: tuple[int, int]) -> np.ndarray:
        if tuple(y) == tuple(x):
            return np.eye(self.frame.n, dtype=complex)
        return self.frame.linv[y] @ self.frame.l[x]

    def field_from(self, x: tuple[int, int]) -> np.ndarray:
        """L(., x) over the whole grid, shape (nt, nx, n, n)."""
        return self.frame.linv @ self.frame.l[x]

    def along_path(self, sites) -> np.ndarray:
        """Chain the transport along consecutive sites of a lattice path.

        Telescopes to L(end, start); the value is path independent.
        """
        sites = [tuple(s) for s in sites]
        if len(sites) < 1:
            raise ValueError("path needs at least one site")
        out = np.eye(self.frame.n, dtype=complex)
        for a, b in zip(sites[:-1], sites[1:]):
            out = self(b, a) @ out
        return out


@dataclass(frozen=True)
class TransportCoefficients:
    """Connection matrices Gamma_mu(x) = l^{-1}(x) d_mu l(x), mu = 0..3."""

    lattice: Lattice
    gamma: np.ndarray  # (4, nt, nx, n, n)

    @property
    def n(self) -> int:
        return self.gamma.shape[-1]


@dataclass(frozen=True)
class Section:
    """n-component field in the sitewise fibre bases, shape (n, nt, nx)."""

    lattice: Lattice
    values: np.ndarray


def make_transport(frame: FrameField) -> Transport:
    return Transport(frame)


def coefficients(frame: FrameField) -> TransportCoefficients:
    """Transport coefficients; axes 2 and 3 carry zero matrices (no grid extent).

    Delegates to the frame-connection formula so both callers agree bit for
    bit on the same frame data.
    """
    gam = np.zeros((4,) + frame.lattice.shape + (frame.n, frame.n), dtype=complex)
    for mu in range(2):
        gam[mu] = matrixop.frame_connection(frame, mu)
    return TransportCoefficients(frame.lattice, gam)


def slashed_gamma(coeffs: TransportCoefficients, gamma_set) -> np.ndarray:
    """Contraction sum_mu gamma^mu Gamma_mu(x), shape (nt, nx, 4, 4)."""
    if coeffs.n != 4:
        raise ValueError("slashed contraction needs 4x4 coefficients")
    return np.einsum("mab,mtxbc->txac", gamma_set.gamma, coeffs.gamma)


def transported_section(frame: FrameField, psi0: np.ndarray,
                        x0: tuple[int, int]) -> Section:
    """Section representing the fixed fibre vector psi0 taken at site x0:
    Psi(x) = l(x)^{-1} psi0 everywhere, so l(x) Psi(x) recovers psi0."""
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (frame.n,):
        raise ValueError(f"state vector shape {psi0.shape}, expected ({frame.n},)")
    vals = np.einsum("txab,b->atx", frame.linv, psi0)
    return Section(frame.lattice, vals)


def derivation_along(section: Section, coeffs: TransportCoefficients, mu: int) -> Section:
    """(D_mu s)(x) = d_mu s(x) + Gamma_mu(x) s(x) with centered differences."""
    if section.values.shape[0] != coeffs.n:
        raise ValueError("section and coefficients dimensions differ")
    lat = section.lattice
    out = lat.diff(section.values, mu) \
        + np.einsum("txab,btx->atx", coeffs.gamma[mu], section.values)
    return Section(lat, out)


def bundle_morphism(frame: FrameField, op):
    """Conjugate an operator into the frame picture: l^{-1} op l.

    Accepts a constant (n, n) matrix, a site-dependent (nt, nx, n, n) matrix
    field, or a MatrixOperator; returns the same kind.
    """
    if isinstance(op, matrixop.MatrixOperator):
        return matrixop.matrix_of(op, frame)
    op = np.asarray(op, dtype=complex)
    if op.shape == (frame.n, frame.n):
        return matrixop.frame_matrix_of_constant(frame, op)
    if op.shape == frame.lattice.shape + (frame.n, frame.n):
        return np.einsum("txab,txbc,txcd->txad", frame.linv, op, frame.l)
    raise ValueError(f"cannot interpret operand of shape {op.shape}")


@dataclass(frozen=True)
class TransportCheckReport:
    max_composition: float
    max_identity: float
    max_linearity: float

    def max_violation(self) -> float:
        return max(self.max_composition, self.max_identity, self.max_linearity)


def generic_transport_check(factorization: np.ndarray, inverse: np.ndarray | None = None,
                            nsamples: int = 50, seed: int = 0) -> TransportCheckReport:
    """Verify the transport laws for K(l->m) = F(m)^{-1} F(l).

    ``factorization`` is a sitewise invertible matrix family (nt, nx, n, n);
    ``inverse`` defaults to its computed inverse and may be supplied
    explicitly (a mismatched inverse at some site breaks the composition law,
    which this check must detect).
    """
    f = np.asarray(factorization, dtype=complex)
    finv = np.linalg.inv(f) if inverse is None else np.asarray(inverse, dtype=complex)
    nt, nx, n, _ = f.shape
    rng = np.random.default_rng(seed)

    def site():
        return rng.integers(0, nt), rng.integers(0, nx)

    def k(m, l):
        return finv[m] @ f[l]

    comp = 0.0
    lin = 0.0
    for _ in range(nsamples):
        s1, s2, s3 = site(), site(), site()
        lhs = k(s3, s2) @ k(s2, s1)
        rhs = k(s3, s1)
        comp = max(comp, np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-30))
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        a = rng.standard_normal() + 1j * rng.standard_normal()
        b = rng.standard_normal() + 1j * rng.standard_normal()
        dev = k(s2, s1) @ (a * u + b * v) - a * (k(s2, s1) @ u) - b * (k(s2, s1) @ v)
        lin = max(lin, np.max(np.abs(dev)))
    ident = 0.0
    for _ in range(nsamples):
        s = site()
        ident = max(ident, np.max(np.abs(k(s, s) - np.eye(n))))
    return TransportCheckReport(comp, ident, lin)


# -- frame presets ---------------------------------------------------------
#
# All generators are periodic functions of the box-normalized coordinates,
# so refining the lattice samples the same continuum frame (needed for
# convergence-order measurements).

def _theta(lat: Lattice, amp: float, ht: int, hx: int, phase: float = 0.0) -> np.ndarray:
    u, v = lat.fractional_grids()
    return amp * (np.sin(2 * np.pi * (ht * u + phase)) + np.cos(2 * np.pi * hx * v))


def identity_frame(lat: Lattice, n: int = 4) -> FrameField:
    l = np.broadcast_to(np.eye(n, dtype=complex), lat.shape + (n, n)).copy()
    return FrameField(lat, l, unitary=True)


def phase_frame(lat: Lattice, n: int = 4, amp: float = 0.7, ht: int = 1, hx: int = 1) -> FrameField:
    """l(x) = exp(i theta(x)) * identity; unitary."""
    th = _theta(lat, amp, ht, hx)
    l = np.exp(1j * th)[..., None, None] * np.eye(n, dtype=complex)
    return FrameField(lat, l, unitary=True)


def rotation_frame(lat: Lattice, n: int = 4, amp: float = 0.6, ht: int = 1, hx: int = 2) -> FrameField:
    """Sitewise real rotation in consecutive coordinate planes; unitary."""
    th = _theta(lat, amp, ht, hx, phase=0.25)
    j = np.zeros((n, n))
    for a in range(0, n - 1, 2):
        j[a, a + 1] = -1.0
        j[a + 1, a] = 1.0
    c, s = np.cos(th), np.sin(th)
    l = np.broadcast_to(np.eye(n), lat.shape + (n, n)).astype(complex).copy()
    l += (c[..., None, None] - 1.0) * (j @ j) * (-1.0)  # cos on the rotated planes
    l += s[..., None, None] * j
    # remaining odd coordinate (n odd) stays untouched by construction
    return FrameField(lat, l, unitary=True)


def shear_frame(lat: Lattice, n: int = 4, amp: float = 0.8, ht: int = 1, hx: int = 1) -> FrameField:
    """Unit-determinant shear l = 1 + s(x) N with N strictly upper; not unitary."""
    s = _theta(lat, amp, ht, hx, phase=0.125)
    nmat = np.zeros((n, n), dtype=complex)
    for a in range(n - 1):
        nmat[a, a + 1] = 1.0
    l = np.broadcast_to(np.eye(n, dtype=complex), lat.shape + (n, n)).copy()
    l += s[..., None, None] * nmat
    return FrameField(lat, l, unitary=False)


def random_smooth_frame(lat: Lattice, n: int = 4, seed: int = 0, amp: float = 0.4,
                        unitary: bool = False) -> FrameField:
    """exp of a random low-harmonic matrix field; invertible by construction.

    The generator matrices are drawn once from the seed, independent of the
    grid, so refinement samples the same continuum frame.
    """
    rng = np.random.default_rng(seed)
    u, v = lat.fractional_grids()
    gen = np.zeros(lat.shape + (n, n), dtype=complex)
    for _ in range(3):
        mat = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        if unitary:
            mat = 0.5j * (mat + mat.conj().T)  # i * Hermitian -> anti-Hermitian
        a = int(rng.integers(-2, 3))
        b = int(rng.integers(-2, 3))
        ph = rng.uniform(0, 2 * np.pi)
        wave = np.cos(2 * np.pi * (a * u + b * v) + ph)
        gen += (amp / np.sqrt(3)) * wave[..., None, None] * mat
    l = np.empty_like(gen)
    for it in range(lat.nt):
        for ix in range(lat.nx):
            l[it, ix] = scipy.linalg.expm(gen[it, ix])
    return FrameField(lat, l, unitary=unitary if unitary else None)


FRAME_PRESETS = {
    "identity": identity_frame,
    "phase": phase_frame,
    "rotation": rotation_frame,
    "shear": shear_frame,
    "random-smooth": random_smooth_frame,
}


def frame_from_preset(lat: Lattice, name: str, n: int = 4, **params) -> FrameField:
    try:
        builder = FRAME_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset '{name}' (frames: {sorted(FRAME_PRESETS)})") from None
    return builder(lat, n=n, **params)
