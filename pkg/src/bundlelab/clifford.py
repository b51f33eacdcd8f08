"""Dirac gamma matrices, their 5x5 first-order-reduction cousins, and slash
contractions.

The 4x4 set uses the standard (Dirac-Pauli) representation: gamma^0 is
diagonal, entries are integers or +-i, so algebraic identities hold exactly
in double precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MINKOWSKI_SIGNATURE = (1, -1, -1, -1)


@dataclass(frozen=True)
class Metric:
    """diag(+1, -1, -1, -1) metric of flat spacetime."""

    signature: tuple[int, int, int, int] = MINKOWSKI_SIGNATURE

    def __post_init__(self):
        if tuple(self.signature) != MINKOWSKI_SIGNATURE:
            raise ValueError(f"unsupported metric signature {self.signature}")

    def eta(self) -> np.ndarray:
        return np.diag(np.array(self.signature, dtype=float))


@dataclass(frozen=True)
class GammaSet:
    """The four 4x4 gamma matrices, indexed mu = 0..3."""

    gamma: np.ndarray  # (4, 4, 4) complex
    metric: Metric = field(default_factory=Metric)

    @property
    def n(self) -> int:
        return 4


@dataclass(frozen=True)
class Gamma5Set:
    """The four real 5x5 matrices of the first-order scalar-wave reduction.

    Component rule: entry (mu, 4) is 1, entry (4, mu) is the metric diagonal
    eta_{mu mu}, everything else vanishes; each matrix has exactly two
    nonzero entries.  They do *not* satisfy the full Clifford relation.
    """

    gamma5: np.ndarray  # (4, 5, 5) real
    metric: Metric = field(default_factory=Metric)

    @property
    def n(self) -> int:
        return 5


_SIGMA = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


def build_gamma_set() -> GammaSet:
    """Standard-representation gamma matrices.

    gamma^0 = diag(1,1,-1,-1) is Hermitian and involutive; the spatial ones
    are anti-Hermitian, built from the Pauli blocks.
    """
    g = np.zeros((4, 4, 4), dtype=complex)
    g[0] = np.diag([1.0, 1.0, -1.0, -1.0])
    for k in range(3):
        g[k + 1, :2, 2:] = _SIGMA[k]
        g[k + 1, 2:, :2] = -_SIGMA[k]
    g.setflags(write=False)
    return GammaSet(gamma=g)


def build_gamma5_set() -> Gamma5Set:
    """5x5 matrices from the componentwise rule (overall scale fixed to 1)."""
    metric = Metric()
    eta = metric.eta()
    g5 = np.zeros((4, 5, 5), dtype=float)
    for mu in range(4):
        g5[mu, mu, 4] = 1.0
        g5[mu, 4, mu] = eta[mu, mu]
    g5.setflags(write=False)
    return Gamma5Set(gamma5=g5, metric=metric)


def _matrices(gs: GammaSet | Gamma5Set) -> np.ndarray:
    return gs.gamma if isinstance(gs, GammaSet) else gs.gamma5


def anticommutator(gs: GammaSet | Gamma5Set, mu: int, nu: int) -> np.ndarray:
    """A^mu A^nu + A^nu A^mu for either matrix set."""
    if not (0 <= mu <= 3 and 0 <= nu <= 3):
        raise IndexError(f"spacetime indices must be in 0..3, got ({mu}, {nu})")
    m = _matrices(gs)
    return m[mu] @ m[nu] + m[nu] @ m[mu]


def slash(gs: GammaSet, a) -> np.ndarray:
    """Contraction sum_mu gamma^mu a_mu for lower-index coefficients a."""
    a = np.asarray(a)
    if a.shape != (4,):
        raise ValueError(f"need 4 coefficients, got shape {a.shape}")
    return np.einsum("mab,m->ab", gs.gamma, a.astype(complex))
