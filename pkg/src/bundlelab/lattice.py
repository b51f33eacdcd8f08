"""Periodic 1+1-dimensional spacetime grid and field helpers.

Conventions used throughout the package:

* axis 0 is time (``nt`` points, step ``dt``), axis 1 is space (``nx``
  points, step ``dx``); both axes wrap periodically,
* a scalar field is a complex ``(nt, nx)`` array,
* an n-component field is ``(n, nt, nx)`` (component-major),
* a matrix field is ``(nt, nx, n, n)`` (site-major),
* derivatives are centered differences with periodic wrap; axes 2 and 3
  exist only algebraically (no grid extent), so differencing along them
  yields zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_WRAP_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _wrap_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _WRAP_CACHE:
        idx = np.arange(n)
        _WRAP_CACHE[n] = ((idx + 1) % n, (idx - 1) % n)
    return _WRAP_CACHE[n]


@dataclass(frozen=True)
class Lattice:
    nt: int
    nx: int
    dt: float
    dx: float

    def __post_init__(self):
        if self.nt < 2 or self.nx < 2:
            raise ValueError(f"lattice needs nt,nx >= 2, got ({self.nt}, {self.nx})")
        if self.dt <= 0 or self.dx <= 0:
            raise ValueError(f"lattice steps must be positive, got ({self.dt}, {self.dx})")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nt, self.nx)

    @property
    def nsites(self) -> int:
        return self.nt * self.nx

    def step(self, mu: int) -> float:
        return self.dt if mu == 0 else self.dx

    def diff(self, values: np.ndarray, mu: int, axes: tuple[int, int] = (-2, -1)) -> np.ndarray:
        """Centered difference along spacetime axis ``mu`` with periodic wrap.

        ``axes`` locates the (time, space) array axes; multi-component and
        matrix fields pass their own placement.  ``mu`` in {2, 3} returns
        zeros: the grid has no extent there.
        """
        if mu >= 2:
            return np.zeros_like(values)
        ax = axes[mu]
        n = values.shape[ax]
        plus, minus = _wrap_indices(n)
        vp = np.take(values, plus, axis=ax)
        vp -= np.take(values, minus, axis=ax)
        vp /= 2.0 * self.step(mu)
        return vp

    def refine(self) -> "Lattice":
        """Halve both steps keeping the physical box fixed."""
        return Lattice(2 * self.nt, 2 * self.nx, self.dt / 2.0, self.dx / 2.0)

    def fractional_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Box-normalized coordinates u = t/nt, v = x/nx on the full grid.

        Smooth generators are written as periodic functions of (u, v) so the
        same continuum object is sampled on refined grids.
        """
        u = np.arange(self.nt) / self.nt
        v = np.arange(self.nx) / self.nx
        return np.meshgrid(u, v, indexing="ij")

    def mode(self, j: int, mu: int) -> float:
        """Smallest-|k| momentum of integer harmonic j along axis mu."""
        n = self.nt if mu == 0 else self.nx
        return 2.0 * np.pi * j / (n * self.step(mu))

    def mode_symbol(self, j: int, mu: int) -> float:
        """Centered-difference symbol sin(k d)/d of harmonic j along axis mu."""
        k = self.mode(j, mu)
        d = self.step(mu)
        return np.sin(k * d) / d


class PlaneWave(NamedTuple):
    """exp(-i(E t - p x)) sampled on the grid, with its stencil symbols."""

    field: np.ndarray
    energy: float
    momentum: float
    energy_symbol: float
    momentum_symbol: float


def plane_wave(lat: Lattice, jt: int, jx: int) -> PlaneWave:
    """Grid-periodic plane wave at integer harmonics (jt, jx).

    A centered difference along axis 0/1 multiplies the wave by
    -i*energy_symbol / +i*momentum_symbol exactly, wrap included.
    """
    e = lat.mode(jt, 0)
    p = lat.mode(jx, 1)
    t = np.arange(lat.nt) * lat.dt
    x = np.arange(lat.nx) * lat.dx
    field = np.exp(-1j * (e * t[:, None] - p * x[None, :]))
    return PlaneWave(field, e, p, lat.mode_symbol(jt, 0), lat.mode_symbol(jx, 1))


def random_smooth_field(lat: Lattice, rng: np.random.Generator,
                        nharm: int = 3, amp: float = 1.0,
                        real: bool = False) -> np.ndarray:
    """Low-harmonic random field, smooth and periodic over the box."""
    u, v = lat.fractional_grids()
    out = np.zeros(lat.shape, dtype=complex)
    for _ in range(nharm):
        a = rng.integers(-2, 3)
        b = rng.integers(-2, 3)
        c = (rng.standard_normal() + 1j * rng.standard_normal()) * amp / np.sqrt(nharm)
        out += c * np.exp(2j * np.pi * (a * u + b * v))
    if real:
        return np.ascontiguousarray(out.real)
    return out


def interior_time_mask(lat: Lattice, margin: int = 1) -> np.ndarray:
    """Boolean (nt,) mask excluding the first/last ``margin`` time slices.

    Whole-spacetime stencils wrap in time; evolved histories are not
    time-periodic, so convergence measurements restrict to the interior.
    """
    mask = np.ones(lat.nt, dtype=bool)
    mask[:margin] = False
    mask[lat.nt - margin:] = False
    return mask
