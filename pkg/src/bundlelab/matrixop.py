"""Matrices whose entries are linear operators on lattice scalar fields.

An entry is a sum of *chains*.  A chain is a constant scale times a
composition of primitive operators, each either a pointwise multiplication
by a scalar field ("mul") or a centered difference along a spacetime axis
("diff").  Every operator of interest here (derivatives, potential terms,
constant matrices, frame factors) lives in this closed grammar, so the
product of two matrix operators is again expressible symbolically and
operator equality can be tested by action on random fields.

Chains apply right-to-left: ``(scale, (op1, op2))`` acting on f is
``scale * op1(op2(f))``.  Composition is chain concatenation; nothing is
expanded by a product rule, so a derivative composed with a multiplication
acts literally on the product.
"""
from __future__ import annotations

from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .lattice import Lattice

# a primitive op is ("mul", field) or ("diff", axis)
PrimOp = tuple


class Chain(NamedTuple):
    """scale * op1(op2(...(f))); ``sig`` is the op-kind sequence used to
    batch same-shaped chains during application."""

    scale: complex
    ops: tuple[PrimOp, ...] = ()
    sig: tuple = ()


def _signature(ops) -> tuple:
    return tuple(op[0] if op[0] == "mul" else op for op in ops)


def _chain(scale: complex, ops: Sequence[PrimOp]) -> Chain | None:
    """Composition keeps chains literal: no merging, no product rule.

    Zero-field payloads are pruned where they enter the grammar (the
    constructors), so composition is plain concatenation.
    """
    if scale == 0:
        return None
    ops = tuple(ops)
    return Chain(complex(scale), ops, _signature(ops))


def _compose_chains(ca: Chain, cb: Chain) -> Chain | None:
    scale = ca.scale * cb.scale
    if scale == 0:
        return None
    return Chain(scale, ca.ops + cb.ops, ca.sig + cb.sig)


Entry = tuple  # tuple[Chain, ...]


def _entry(chains: Iterable[Chain | None]) -> Entry:
    return tuple(c for c in chains if c is not None)


class MatrixOperator:
    """n x n grid of operator entries over one lattice."""

    def __init__(self, lattice: Lattice, n: int, entries, _trusted: bool = False):
        self.lattice = lattice
        self.n = n
        if _trusted:
            self.entries = entries
        else:
            self.entries = tuple(
                tuple(tuple(self._normalized(c) for c in entries[a][b]) for b in range(n))
                for a in range(n))

    @staticmethod
    def _normalized(c: Chain) -> Chain:
        if len(c.sig) != len(c.ops):
            ops = tuple(c.ops)
            return Chain(complex(c.scale), ops, _signature(ops))
        return c

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, lattice: Lattice, n: int) -> "MatrixOperator":
        return cls(lattice, n, [[() for _ in range(n)] for _ in range(n)])

    @classmethod
    def identity(cls, lattice: Lattice, n: int) -> "MatrixOperator":
        return cls.from_constant(lattice, np.eye(n))

    @classmethod
    def from_constant(cls, lattice: Lattice, c: np.ndarray) -> "MatrixOperator":
        """Pointwise action of a constant matrix."""
        c = np.asarray(c)
        n = c.shape[0]
        ent = [[_entry([_chain(c[a, b], ())]) for b in range(n)] for a in range(n)]
        return cls(lattice, n, ent)

    @classmethod
    def from_matrix_field(cls, lattice: Lattice, m: np.ndarray) -> "MatrixOperator":
        """Pointwise action of a site-dependent matrix, shape (nt, nx, n, n)."""
        n = m.shape[-1]
        ent = [[_entry([_chain(1.0, (("mul", m[:, :, a, b]),))])
                if np.any(m[:, :, a, b]) else ()
                for b in range(n)] for a in range(n)]
        return cls(lattice, n, ent)

    @classmethod
    def derivative(cls, lattice: Lattice, n: int, mu: int, scale: complex = 1.0) -> "MatrixOperator":
        """scale * d_mu on every component (diagonal entries only)."""
        ent = [[_entry([_chain(scale, (("diff", mu),))]) if a == b else ()
                for b in range(n)] for a in range(n)]
        return cls(lattice, n, ent)

    @classmethod
    def diagonal_field(cls, lattice: Lattice, n: int, f: np.ndarray, scale: complex = 1.0) -> "MatrixOperator":
        """scale * f(x) on every component."""
        if not np.any(f):
            return cls.zero(lattice, n)
        ent = [[_entry([_chain(scale, (("mul", f),))]) if a == b else ()
                for b in range(n)] for a in range(n)]
        return cls(lattice, n, ent)

    # -- algebra -----------------------------------------------------------

    def __add__(self, other: "MatrixOperator") -> "MatrixOperator":
        self._check_compatible(other)
        ent = [[self.entries[a][b] + other.entries[a][b] for b in range(self.n)]
               for a in range(self.n)]
        return MatrixOperator(self.lattice, self.n, ent)

    def __mul__(self, scale: complex) -> "MatrixOperator":
        ent = [[_entry([_chain(scale * c.scale, c.ops) for c in self.entries[a][b]])
                for b in range(self.n)] for a in range(self.n)]
        return MatrixOperator(self.lattice, self.n, ent)

    __rmul__ = __mul__

    def __sub__(self, other: "MatrixOperator") -> "MatrixOperator":
        return self + (other * (-1.0))

    def _check_compatible(self, other: "MatrixOperator"):
        if self.n != other.n or self.lattice is not other.lattice and self.lattice != other.lattice:
            raise ValueError("matrix operators live on different spaces")

    def nchains(self) -> int:
        return sum(len(self.entries[a][b]) for a in range(self.n) for b in range(self.n))


def _apply_chain(lat: Lattice, chain: Chain, f: np.ndarray) -> np.ndarray:
    out = f
    for kind, payload in reversed(chain.ops):
        if kind == "mul":
            out = payload * out
        else:
            out = lat.diff(out, payload)
    return chain.scale * out


def _apply_batch(lat: Lattice, sig: tuple, chains: list, f: np.ndarray) -> np.ndarray:
    """Apply same-signature chains to one source field, summed."""
    g = len(chains)
    if g == 1:
        return _apply_chain(lat, chains[0], f)
    cur = np.broadcast_to(f, (g,) + f.shape)
    for pos in range(len(sig) - 1, -1, -1):
        if sig[pos] == "mul":
            payloads = np.empty((g,) + f.shape, dtype=complex)
            for i, c in enumerate(chains):
                payloads[i] = c.ops[pos][1]
            cur = payloads * cur
        else:
            cur = lat.diff(cur, sig[pos][1])
    return np.tensordot(np.array([c.scale for c in chains]), cur, axes=1)


def apply_entry(lat: Lattice, entry: Entry, f: np.ndarray) -> np.ndarray:
    """Entry action on a scalar field."""
    out = np.zeros(lat.shape, dtype=complex)
    if not entry:
        return out
    groups: dict[tuple, list] = {}
    for chain in entry:
        groups.setdefault(chain.sig, []).append(chain)
    for sig, chains in groups.items():
        out += _apply_batch(lat, sig, chains, f)
    return out


def apply(b: MatrixOperator, psi: np.ndarray) -> np.ndarray:
    """Act on an n-component field (n, nt, nx).

    Chains are batched by op signature across all destination rows of one
    source component (row-sorted, segment-summed); per-chain op order is
    literal.
    """
    if psi.shape != (b.n,) + b.lattice.shape:
        raise ValueError(f"field shape {psi.shape} does not match operator "
                         f"({b.n}, {b.lattice.nt}, {b.lattice.nx})")
    lat = b.lattice
    out = np.zeros_like(psi, dtype=complex)
    for bb in range(b.n):
        groups: dict[tuple, tuple[list, list]] = {}
        for a in range(b.n):
            for chain in b.entries[a][bb]:
                rows, chains = groups.setdefault(chain.sig, ([], []))
                rows.append(a)
                chains.append(chain)
        f = psi[bb]
        for sig, (rows, chains) in groups.items():
            g = len(chains)
            if g == 1:
                out[rows[0]] += _apply_chain(lat, chains[0], f)
                continue
            cur = np.broadcast_to(f, (g,) + f.shape)
            for pos in range(len(sig) - 1, -1, -1):
                if sig[pos] == "mul":
                    payloads = np.empty((g,) + f.shape, dtype=complex)
                    for i, c in enumerate(chains):
                        payloads[i] = c.ops[pos][1]
                    cur = payloads * cur
                else:
                    cur = lat.diff(cur, sig[pos][1])
            scaled = np.array([c.scale for c in chains])[:, None, None] * cur
            # rows arrive sorted (filled row-major); segment-sum per row
            starts = [0] + [i for i in range(1, g) if rows[i] != rows[i - 1]]
            segs = np.add.reduceat(scaled, starts, axis=0)
            out[[rows[i] for i in starts]] += segs
    return out


def odot(a: MatrixOperator, b: MatrixOperator) -> MatrixOperator:
    """Operator product: entry (alpha, beta) = sum_mu a[alpha][mu] o b[mu][beta].

    Associative; for constant matrices it reduces to the ordinary matrix
    product.
    """
    a._check_compatible(b)
    n = a.n
    ent = []
    for alpha in range(n):
        row = []
        for beta in range(n):
            chains = []
            for mu in range(n):
                for ca in a.entries[alpha][mu]:
                    for cb in b.entries[mu][beta]:
                        chains.append(_compose_chains(ca, cb))
            row.append(_entry(chains))
        ent.append(tuple(row))
    return MatrixOperator(a.lattice, n, tuple(ent), _trusted=True)


def action_distance(a: MatrixOperator, b: MatrixOperator, rng: np.random.Generator,
                    ntrials: int = 3) -> float:
    """Max relative deviation of two operators acting on random fields."""
    worst = 0.0
    for _ in range(ntrials):
        psi = rng.standard_normal((a.n,) + a.lattice.shape) \
            + 1j * rng.standard_normal((a.n,) + a.lattice.shape)
        fa = apply(a, psi)
        fb = apply(b, psi)
        denom = max(np.max(np.abs(fa)), np.max(np.abs(fb)), 1e-30)
        worst = max(worst, np.max(np.abs(fa - fb)) / denom)
    return worst


# -- frames ---------------------------------------------------------------

class FrameMatrixField:
    """Invertible basis matrix f(x) per site, shape (nt, nx, n, n).

    The inverse is cached; construction rejects frames whose worst-site
    condition number exceeds ``cond_bound`` (default 1e6, keeping the
    inverse trustworthy in double precision).
    """

    def __init__(self, lattice: Lattice, f: np.ndarray, cond_bound: float = 1e6):
        f = np.asarray(f, dtype=complex)
        if f.shape[:2] != lattice.shape or f.shape[2] != f.shape[3]:
            raise ValueError(f"frame shape {f.shape} does not match lattice {lattice.shape}")
        cond = np.linalg.cond(f)
        worst = float(np.max(cond))
        if not np.isfinite(worst) or worst > cond_bound:
            raise ValueError(f"frame condition number {worst:.3g} exceeds bound {cond_bound:.3g}")
        self.lattice = lattice
        self.f = f
        self.finv = np.linalg.inv(f)
        self.cond_bound = cond_bound

    @property
    def n(self) -> int:
        return self.f.shape[-1]


def frame_connection(frame: FrameMatrixField, mu: int) -> np.ndarray:
    """E_mu(x) = f^{-1}(x) d_mu f(x), centered differences, shape (nt,nx,n,n)."""
    df = frame.lattice.diff(frame.f, mu, axes=(0, 1))
    return np.einsum("txab,txbc->txac", frame.finv, df)


def matrix_of(b: MatrixOperator, frame: FrameMatrixField) -> MatrixOperator:
    """Frame-relative matrix of a matrix operator.

    Entry (alpha, beta) = sum_{mu,nu} f^{-1}(x)^alpha_mu b^mu_nu o (f^nu_beta(x) *).
    The composition is kept literal (multiplication inside the operator), not
    expanded by a product rule.
    """
    if frame.n != b.n:
        raise ValueError("frame and operator dimensions differ")
    n = b.n
    f, finv = frame.f, frame.finv
    ident = np.eye(n)

    def classify(mat, a, bcol):
        # returns None when the slice is identically zero, True when it is
        # the constant matching the identity entry (wrap can be skipped)
        v = mat.flat[0]
        varying = bool(np.any(mat != v))
        if not varying and v == 0:
            return None
        return (not varying) and v == ident[a, bcol]

    ent = []
    for alpha in range(n):
        row = []
        for beta in range(n):
            chains = []
            for mu in range(n):
                left = finv[:, :, alpha, mu]
                left_const = classify(left, alpha, mu)
                if left_const is None:
                    continue
                for nu in range(n):
                    right = f[:, :, nu, beta]
                    right_const = classify(right, nu, beta)
                    if right_const is None:
                        continue
                    for c in b.entries[mu][nu]:
                        ops = c.ops
                        if not right_const:
                            ops = ops + (("mul", right),)
                        if not left_const:
                            ops = (("mul", left),) + ops
                        chains.append(_chain(c.scale, ops))
            row.append(_entry(chains))
        ent.append(tuple(row))
    return MatrixOperator(b.lattice, n, tuple(ent), _trusted=True)


def frame_matrix_of_constant(frame: FrameMatrixField, c: np.ndarray) -> np.ndarray:
    """Similarity transform f^{-1}(x) c f(x) per site, shape (nt,nx,n,n)."""
    return np.einsum("txab,bc,txcd->txad", frame.finv, np.asarray(c, dtype=complex), frame.f)


def dirac_operator_matrix(gamma, frame: FrameMatrixField, A, m: float) -> MatrixOperator:
    """Frame-relative first-order Dirac operator.

    Returns i*hbar * G^mu(x) (d_mu - (e/(i hbar c)) A_mu + E_mu(x)) - m c,
    where G^mu is the frame matrix of gamma^mu and E_mu the frame
    connection.  ``A`` carries the potential components and the constants
    (e, hbar, c); with the identity frame this is the conventional operator.
    """
    lat = frame.lattice
    n = frame.n
    hbar, c, kappa = A.hbar, A.c, A.kappa
    total = MatrixOperator.zero(lat, n)
    for mu in range(4):
        gmu = frame_matrix_of_constant(frame, gamma.gamma[mu])
        inner = MatrixOperator.zero(lat, n)
        if mu < 2:
            inner = inner + MatrixOperator.derivative(lat, n, mu)
        if np.any(A.A[mu]):
            inner = inner + MatrixOperator.diagonal_field(lat, n, A.A[mu].astype(complex), -kappa)
        if mu < 2:
            e_mu = frame_connection(frame, mu)
            if np.any(e_mu):
                inner = inner + MatrixOperator.from_matrix_field(lat, e_mu)
        if inner.nchains():
            total = total + odot(MatrixOperator.from_matrix_field(lat, gmu), inner)
    return total * (1j * hbar) - MatrixOperator.identity(lat, n) * (m * c)
