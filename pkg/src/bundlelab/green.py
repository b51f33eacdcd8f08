"""Retarded kernels for the lattice wave equations and their links to the
slice-to-slice evolution maps.

A kernel stores (lazily or fully) the blocks g(t', t): matrices of shape
(k*nx, k*nx) mapping slice data at time t to the field at t'.  Blocks with
t' < t are exactly zero; the coincidence block follows the
limit-from-above convention, so applying a kernel at t' = t is the
identity after the family weight.  Family weights:

* ``schrodinger``:  psi(t') = i hbar * g(t',t) psi(t) dx
* ``dirac``:        psi(t') = i hbar * g(t',t) W(t) psi(t) dx, W = gamma^0
  (frame-conjugated for morphed kernels)
* ``kg2``:          (phi, d0 phi)(t') = g(t',t) (phi, d0 phi)(t) dx
* ``kg-scalar``:    reconstruction needs derivative data; see
  ``kg_reconstruct``

Slice states are flattened component-major (index = component * nx + site).
"""
from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .clifford import build_gamma_set
from .lattice import Lattice
from .transport import FrameField
from .waveeq import PotentialField, dirac_hamiltonian, kg_two_component_matrix

_GAMMA = build_gamma_set()

DEFAULT_BUDGET_MB = 64.0
BUDGET_ENV_VAR = "BUNDLELAB_KERNEL_BUDGET_MB"

_MAGIC = b"BLGK0001"
_FAMILIES = ("schrodinger", "dirac", "kg2", "kg-scalar")


class KernelBudgetError(RuntimeError):
    """Materializing the full spacetime kernel would exceed the byte budget."""


class BornDivergenceWarning(UserWarning):
    """The fixed-point update norm grew between iterations."""


def resolve_budget_mb(budget_mb: float | None = None) -> float:
    if budget_mb is not None:
        return float(budget_mb)
    return float(os.environ.get(BUDGET_ENV_VAR, DEFAULT_BUDGET_MB))


def sitewise_blockdiag(mats: np.ndarray) -> np.ndarray:
    """Dense (k nx, k nx) matrix acting as the k x k site matrices mats (nx,k,k)."""
    nx, k, _ = mats.shape
    out = np.zeros((k * nx, k * nx), dtype=complex)
    idx = np.arange(nx)
    for a in range(k):
        for b in range(k):
            out[a * nx + idx, b * nx + idx] = mats[:, a, b]
    return out


@dataclass(frozen=True)
class SpectralBasis:
    """Orthonormal eigenbasis of a Hermitian slice Hamiltonian.

    Columns of ``states`` are scaled by 1/sqrt(dx) so that the discrete
    inner product sum(conj(u) v) dx is orthonormal and the mode sum
    reproduces the discrete delta delta_{x'x}/dx.
    """

    energies: np.ndarray
    states: np.ndarray  # (nx, nmodes)
    dx: float

    @classmethod
    def from_hamiltonian(cls, h: np.ndarray, dx: float, tol: float = 1e-12) -> "SpectralBasis":
        dev = np.max(np.abs(h - h.conj().T))
        if dev > tol * max(1.0, np.max(np.abs(h))):
            raise ValueError(f"Hamiltonian not Hermitian (deviation {dev:.3g})")
        evals, vecs = np.linalg.eigh(h)
        return cls(evals, vecs / np.sqrt(dx), dx)

    def orthonormality_residual(self) -> float:
        gram = self.states.conj().T @ self.states * self.dx
        return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))

    def completeness_residual(self) -> float:
        proj = self.states @ self.states.conj().T
        return float(np.max(np.abs(proj - np.eye(proj.shape[0]) / self.dx)))


class GreenKernel:
    """Retarded block kernel over one lattice.

    Blocks come from one of three sources: a direct formula, a step
    recurrence (per-slice one-step evolution matrices applied to a
    coincidence block), or a fully materialized array.
    """

    def __init__(self, lattice: Lattice, k: int, family: str, hbar: float = 1.0,
                 c: float = 1.0, block_fn=None, step_fn=None, base_fn=None,
                 storage: np.ndarray | None = None, frame: FrameField | None = None,
                 weight_fn=None):
        if family not in _FAMILIES:
            raise ValueError(f"unknown kernel family '{family}'")
        self.lattice = lattice
        self.k = k
        self.family = family
        self.hbar = hbar
        self.c = c
        self.frame = frame
        self._block_fn = block_fn
        self._step_fn = step_fn
        self._base_fn = base_fn
        self._storage = storage
        self._weight_fn = weight_fn
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    # -- block access -------------------------------------------------------

    @property
    def block_dim(self) -> int:
        return self.k * self.lattice.nx

    def block(self, tp: int, t: int) -> np.ndarray:
        nt = self.lattice.nt
        if not (0 <= tp < nt and 0 <= t < nt):
            raise ValueError(f"times ({tp}, {t}) outside lattice 0..{nt - 1}")
        if tp < t:
            return np.zeros((self.block_dim, self.block_dim), dtype=complex)
        key = (tp, t)
        if key in self._cache:
            return self._cache[key]
        if self._storage is not None:
            blk = self._storage[tp, t]
        elif self._block_fn is not None:
            blk = self._block_fn(tp, t)
        else:
            blk = self._stepped_block(tp, t)
        self._cache[key] = blk
        return blk

    def _stepped_block(self, tp: int, t: int) -> np.ndarray:
        # walk down to the highest cached level for this source slice, then
        # step forward; ``level`` tracks the slice blk currently lives on
        level = tp
        while level > t and (level - 1, t) not in self._cache:
            level -= 1
        if level == t:
            blk = self._base_fn(t)
            self._cache[(t, t)] = blk
        else:
            level -= 1
            blk = self._cache[(level, t)]
        for s in range(level, tp):
            blk = self._step_fn(s) @ blk
            self._cache[(s + 1, t)] = blk
        return blk

    # -- application ---------------------------------------------------------

    def weight_matrix(self, t: int) -> np.ndarray | None:
        """Source-side weight of the reconstruction integral, or None for 1."""
        if self._weight_fn is not None:
            return self._weight_fn(t)
        if self.family == "dirac":
            if self.frame is None:
                return np.kron(_GAMMA.gamma[0], np.eye(self.lattice.nx))
            g0site = np.einsum("xab,bc,xcd->xad", self.frame.linv[t],
                               _GAMMA.gamma[0], self.frame.l[t])
            return sitewise_blockdiag(g0site)
        return None

    def apply(self, psi: np.ndarray, t: int, tp: int) -> np.ndarray:
        """Reconstruct the field at t' from slice data at t (zero for t' < t)."""
        if self.family == "kg-scalar":
            raise ValueError("scalar kernel reconstruction needs derivative data; "
                             "use kg_reconstruct")
        vec = np.asarray(psi, dtype=complex).reshape(self.block_dim)
        w = self.weight_matrix(t)
        if w is not None:
            vec = w @ vec
        out = self.block(tp, t) @ vec
        scale = self.lattice.dx
        if self.family in ("schrodinger", "dirac"):
            scale *= 1j * self.hbar
        out = scale * out
        return out.reshape(np.asarray(psi).shape)

    # -- materialization ------------------------------------------------------

    def nbytes_full(self) -> int:
        return (self.lattice.nt * self.block_dim) ** 2 * 16

    def materialize(self, budget_mb: float | None = None) -> np.ndarray:
        """Full (nt, nt, K, K) block array; refuses beyond the byte budget."""
        budget = resolve_budget_mb(budget_mb)
        need = self.nbytes_full()
        if need > budget * 2 ** 20:
            raise KernelBudgetError(
                f"full kernel needs {need / 2 ** 20:.1f} MiB, budget is {budget:.1f} MiB "
                f"(override with {BUDGET_ENV_VAR} or budget_mb)")
        nt, kdim = self.lattice.nt, self.block_dim
        out = np.zeros((nt, nt, kdim, kdim), dtype=complex)
        for t in range(nt):
            for tp in range(t, nt):
                out[tp, t] = self.block(tp, t)
        return out

    def with_storage(self, storage: np.ndarray) -> "GreenKernel":
        return GreenKernel(self.lattice, self.k, self.family, self.hbar, self.c,
                           storage=storage, frame=self.frame, weight_fn=self._weight_fn)


def apply_kernel(g: GreenKernel, psi: np.ndarray, t: int, tp: int) -> np.ndarray:
    return g.apply(psi, t, tp)


# -- builders ----------------------------------------------------------------

def schrodinger_green(h: np.ndarray, lattice: Lattice, hbar: float = 1.0,
                      c: float = 1.0, theta_at_zero: str = "above") -> GreenKernel:
    """Spectral retarded kernel of a static Hermitian slice Hamiltonian.

    g(t',t) = (1/(i hbar)) sum_a psi_a(x') exp(-i E_a (t'-t) dtau / hbar)
    conj(psi_a(x)), dtau = dt/c.  ``theta_at_zero`` picks the coincidence
    convention: "above" keeps the identity block at t' = t, "below" zeroes it
    (the two differ by a solution of the homogeneous equation).
    """
    if theta_at_zero not in ("above", "below"):
        raise ValueError(f"unknown coincidence convention '{theta_at_zero}'")
    basis = SpectralBasis.from_hamiltonian(h, lattice.dx)
    dtau = lattice.dt / c

    def block_fn(tp, t):
        if tp == t and theta_at_zero == "below":
            return np.zeros((lattice.nx, lattice.nx), dtype=complex)
        phases = np.exp(-1j * basis.energies * (tp - t) * dtau / hbar)
        mat = (basis.states * phases) @ basis.states.conj().T
        return mat / (1j * hbar)

    kern = GreenKernel(lattice, 1, "schrodinger", hbar, c, block_fn=block_fn)
    kern.basis = basis
    return kern


def dirac_green(A: PotentialField, m: float) -> GreenKernel:
    """Retarded kernel of the spinor equation built from unitary stepping.

    Blocks are U(t',t) gamma^0 / (i hbar dx), so the reconstruction
    i hbar sum_x g(x',x) gamma^0 psi(x) dx reproduces the evolution exactly.
    """
    lat = A.lattice
    hbar, c = A.hbar, A.c
    dtau = lat.dt / c
    static = A.is_static
    hcache: dict[int, np.ndarray] = {}

    def hmat(t):
        if static:
            t = 0
        if t not in hcache:
            hcache[t] = dirac_hamiltonian(A, m, t)
        return hcache[t]

    def step_fn(t):
        hmid = hmat(0) if static else 0.5 * (hmat(t) + hmat(t + 1))
        lam = 0.5j * dtau / hbar
        eye = np.eye(4 * lat.nx)
        return np.linalg.solve(eye + lam * hmid, eye - lam * hmid)

    g0w = np.kron(_GAMMA.gamma[0], np.eye(lat.nx)) / (1j * hbar * lat.dx)

    def base_fn(t):
        return g0w.copy()

    return GreenKernel(lat, 4, "dirac", hbar, c, step_fn=step_fn, base_fn=base_fn)


def kg_green_tilde(A: PotentialField, m: float) -> GreenKernel:
    """Retarded kernel of the two-component (phi, d0 phi) system: U~(t',t)/dx."""
    lat = A.lattice

    def step_fn(t):
        return kg_two_component_matrix(A, m, lat.dt, t)

    def base_fn(t):
        return np.eye(2 * lat.nx, dtype=complex) / lat.dx

    return GreenKernel(lat, 2, "kg2", A.hbar, A.c, step_fn=step_fn, base_fn=base_fn)


def kg_green(A: PotentialField, m: float) -> GreenKernel:
    """Scalar retarded kernel, normalized against the unit spacetime source.

    Extracted as the phi-response to initial d0 phi data of the
    two-component kernel.
    """
    lat = A.lattice
    tilde = kg_green_tilde(A, m)
    nx = lat.nx

    def block_fn(tp, t):
        return tilde.block(tp, t)[:nx, nx:]

    kern = GreenKernel(lat, 1, "kg-scalar", A.hbar, A.c, block_fn=block_fn)
    kern.tilde = tilde
    return kern


def kg_pairing_row(g: GreenKernel, A: PotentialField, tp: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Reconstruction pair (coefficient of phi, coefficient of d0 phi).

    The phi coefficient is -(d/dx0 + 2 kappa A^0(x)) g taken at the source
    point, with a centered difference over source slices; the d0 phi
    coefficient is g itself.  Requires 1 <= t <= nt-2.
    """
    lat = g.lattice
    if not (1 <= t <= lat.nt - 2):
        raise ValueError(f"source slice {t} needs both neighbours on the lattice")
    gblk = g.block(tp, t)
    ddt = (g.block(tp, t + 1) - g.block(tp, t - 1)) / (2.0 * lat.dt)
    gd = -ddt - 2.0 * A.kappa * (gblk * A.A[0, t][None, :])
    return gd, gblk


def kg_reconstruct(g: GreenKernel, phi_slice: np.ndarray, dphi_slice: np.ndarray,
                   A: PotentialField, t: int, tp: int) -> np.ndarray:
    """Rebuild phi(t') from (phi, d0 phi) at slice t through the scalar kernel:

        phi(x') = sum_x [ gD(x',x) phi(x) + g(x',x) d0 phi(x) ] dx

    with gD = -(d/dx0 + 2 kappa A^0) g at the source point.  Zero for t' < t.
    """
    if g.family != "kg-scalar":
        raise ValueError("reconstruction needs the scalar kernel family")
    if tp < t:
        return np.zeros(g.lattice.nx, dtype=complex)
    if tp == t:
        return np.asarray(phi_slice, dtype=complex).copy()
    gd, gblk = kg_pairing_row(g, A, tp, t)
    return (gd @ phi_slice + gblk @ dphi_slice) * g.lattice.dx


def green_morphism(g: GreenKernel, frame: FrameField) -> GreenKernel:
    """Conjugate a kernel into the frame picture blockwise:
    g'(t',t) = l^{-1}(t'-slice) g(t',t) l(t-slice).

    Applying the result to frame components reproduces the frame image of
    the conventional reconstruction; the source weight is conjugated
    alongside (gamma^0 becomes the sitewise frame matrix of gamma^0).
    """
    if frame.n != g.k:
        raise ValueError(f"frame dimension {frame.n} does not match kernel components {g.k}")

    def conj_block(tp, t):
        left = sitewise_blockdiag(frame.linv[tp])
        right = sitewise_blockdiag(frame.l[t])
        return left @ g.block(tp, t) @ right

    return GreenKernel(g.lattice, g.k, g.family, g.hbar, g.c,
                       block_fn=conj_block, frame=frame)


# -- interacting kernel by fixed-point iteration ------------------------------

def _blocks_to_flat(arr: np.ndarray) -> np.ndarray:
    nt, _, kdim, _ = arr.shape
    return np.ascontiguousarray(arr.transpose(0, 2, 1, 3)).reshape(nt * kdim, nt * kdim)


def _flat_to_blocks(full: np.ndarray, nt: int, kdim: int) -> np.ndarray:
    return np.ascontiguousarray(full.reshape(nt, kdim, nt, kdim).transpose(0, 2, 1, 3))


def _born_propagation_matrix(g0: GreenKernel, A: PotentialField, e: float,
                             budget_mb: float | None):
    """(flat free kernel, weight * free kernel times the vertex insertion)."""
    lat = g0.lattice
    arr0 = g0.materialize(budget_mb)
    full0 = _blocks_to_flat(arr0)
    kdim = g0.block_dim
    aslash = np.einsum("mab,mtx->txab", _GAMMA.gamma, A.A.astype(complex))
    vfull = np.zeros_like(full0)
    for t in range(lat.nt):
        vfull[t * kdim:(t + 1) * kdim, t * kdim:(t + 1) * kdim] = \
            sitewise_blockdiag((e / A.c) * aslash[t])
    return full0, (lat.dt * lat.dx) * (full0 @ vfull)


def born_iterate(g0: GreenKernel, A: PotentialField, e: float, iterations: int,
                 budget_mb: float | None = None) -> GreenKernel:
    """Iterate g <- g0 + g0 * (e/c) slash(A) * g with the spacetime contraction
    sum_y dt dx.

    Starts from the free retarded kernel g0; retardation of every iterate is
    automatic.  The full spacetime kernel is materialized (budget applies)
    and the update norms are recorded on the result; a growing update norm
    triggers a divergence warning.
    """
    full0, prop = _born_propagation_matrix(g0, A, e, budget_mb)
    g = full0.copy()
    update_norms: list[float] = []
    for _ in range(iterations):
        new = full0 + prop @ g
        upd = float(np.max(np.abs(new - g)))
        if update_norms and upd > update_norms[-1] and upd > 1e-14:
            warnings.warn(f"update norm grew ({update_norms[-1]:.3g} -> {upd:.3g}); "
                          "the coupling may be too strong", BornDivergenceWarning)
        update_norms.append(upd)
        g = new
    out = g0.with_storage(_flat_to_blocks(g, g0.lattice.nt, g0.block_dim))
    out.update_norms = update_norms
    return out


def born_residual(g: GreenKernel, g0: GreenKernel, A: PotentialField, e: float,
                  budget_mb: float | None = None) -> float:
    """Max-norm defect of the fixed-point relation for a candidate kernel."""
    full0, prop = _born_propagation_matrix(g0, A, e, budget_mb)
    full = _blocks_to_flat(g.materialize(budget_mb))
    return float(np.max(np.abs(full - (full0 + prop @ full))))


# -- finite-window evolution ---------------------------------------------------

def finite_window_evolution(A: PotentialField, m: float, T: int,
                            scheme: str = "crank-nicolson") -> np.ndarray:
    """Dense evolution matrix across the window [center-T, center+T].

    Stands in for the infinite-window scattering map; no limit is claimed.
    """
    from .waveeq import dirac_evolution_matrix
    nt = A.lattice.nt
    center = nt // 2
    if T < 0 or center - T < 0 or center + T > nt - 1:
        raise ValueError(f"half-width {T} does not fit the lattice (center {center}, nt {nt})")
    return dirac_evolution_matrix(A, m, center - T, center + T, scheme)


# -- binary kernel dumps -------------------------------------------------------
#
# Layout (little-endian), documented bit-exactly:
#   bytes 0..7    magic "BLGK0001"
#   bytes 8..19   family tag, ascii padded with NUL to 12 bytes
#   3 x uint32    k, nt, nx
#   4 x float64   dt, dx, hbar, c
#   nt*nt blocks  g(t',t) as (k*nx, k*nx) complex128, C order, t' outer loop
# Zero blocks (t' < t) are stored explicitly.

_HEADER = struct.Struct("<8s12sIIIdddd")


def dump_kernel(g: GreenKernel, path, budget_mb: float | None = None) -> None:
    arr = g.materialize(budget_mb)
    lat = g.lattice
    head = _HEADER.pack(_MAGIC, g.family.encode().ljust(12, b"\0"),
                        g.k, lat.nt, lat.nx, lat.dt, lat.dx, g.hbar, g.c)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(arr, dtype="<c16").tobytes())


def load_kernel(path) -> GreenKernel:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size or head[:8] != _MAGIC:
            raise ValueError(f"not a kernel dump (bad magic in {path})")
        magic, fam, k, nt, nx, dt, dx, hbar, c = _HEADER.unpack(head)
        family = fam.rstrip(b"\0").decode()
        kdim = k * nx
        data = np.frombuffer(fh.read(), dtype="<c16").astype(complex)
    storage = data.reshape(nt, nt, kdim, kdim)
    return GreenKernel(Lattice(nt, nx, dt, dx), k, family, hbar, c, storage=storage)
