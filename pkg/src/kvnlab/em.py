"""Source-free Maxwell equations as a six-component Schrodinger-like equation.

The field is packed as ``psi = (E_x, E_y, E_z, -B_x, -B_y, -B_z)`` and obeys

    d(psi)/dt = -sum_i beta_i d_i psi

with three real symmetric 6x6 matrices.  On a periodic grid each Fourier
mode evolves as ``exp(-i (k . beta) t)``, which is computed exactly from the
eigendecomposition of the Hermitian symbol.  Units have eps0 = mu0 = c = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import fft

from .errors import ConfigurationError, PreconditionError
from . import tables

AXES = ("x", "y", "z")
SYMBOL_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BetaMatrices:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def symbol(self, k) -> np.ndarray:
        """k . beta for one wave vector or a stack of shape (..., 3)."""
        k = np.asarray(k, float)
        return np.einsum("...i,ijk->...jk", k, np.stack([self.x, self.y, self.z]))


def build_beta() -> BetaMatrices:
    """The three 6x6 matrices that turn the first-order system into Maxwell's curl equations."""
    bx = np.zeros((6, 6))
    bx[1, 5], bx[2, 4], bx[4, 2], bx[5, 1] = -1, 1, 1, -1
    by = np.zeros((6, 6))
    by[0, 5], by[2, 3], by[3, 2], by[5, 0] = 1, -1, -1, 1
    bz = np.zeros((6, 6))
    bz[0, 4], bz[1, 3], bz[3, 1], bz[4, 0] = -1, 1, 1, -1
    beta = BetaMatrices(bx, by, bz)
    for b in beta:
        if not np.array_equal(b, b.T):
            raise ArithmeticError("beta matrix is not Hermitian")
    for k in np.eye(3):
        ev = np.linalg.eigvalsh(beta.symbol(k))
        if np.abs(ev - np.array([-1, -1, 0, 0, 1, 1])).max() > SYMBOL_TOLERANCE:
            raise ArithmeticError(f"symbol spectrum {ev} is not (-1,-1,0,0,1,1)")
    return beta


BETA = build_beta()


@dataclass(frozen=True)
class EmGrid:
    """Periodic grid in 1, 2 or 3 dimensions.

    ``axes`` names the Cartesian direction of every grid axis, so a 1-D grid
    along z is ``EmGrid((n,), (L,), ("z",))``.  Samples sit at ``j * dx``.
    """

    shape: Tuple[int, ...]
    lengths: Tuple[float, ...]
    axes: Tuple[str, ...] = ("x",)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        lengths = tuple(float(L) for L in self.lengths)
        axes = tuple(self.axes)
        if not 1 <= len(shape) <= 3:
            raise ConfigurationError("EM grid must have 1, 2 or 3 axes", field="shape")
        if len(lengths) != len(shape) or len(axes) != len(shape):
            raise ConfigurationError("shape, lengths and axes must have the same length")
        if any(n < 2 for n in shape):
            raise ConfigurationError("each EM grid axis needs >= 2 points", field="shape")
        if any(not (math.isfinite(L) and L > 0) for L in lengths):
            raise ConfigurationError("EM grid lengths must be positive", field="lengths")
        if len(set(axes)) != len(axes) or any(a not in AXES for a in axes):
            raise ConfigurationError(f"axes must be distinct names from {AXES}", field="axes")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "axes", axes)

    @classmethod
    def cube(cls, n: int, length: float, dims: int = 3):
        return cls((n,) * dims, (length,) * dims, AXES[:dims])

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def coordinates(self):
        """Cartesian (x, y, z) arrays of grid shape; unused directions are zero."""
        axes_1d = [np.arange(n) * d for n, d in zip(self.shape, self.spacing)]
        mesh = np.meshgrid(*axes_1d, indexing="ij")
        out = [np.zeros(self.shape) for _ in AXES]
        for name, m in zip(self.axes, mesh):
            out[AXES.index(name)] = m
        return tuple(out)

    def wavevectors(self) -> np.ndarray:
        """Array of shape (*shape, 3) with the Cartesian k of every FFT bin."""
        freqs = [2 * math.pi * fft.fftfreq(n, d) for n, d in zip(self.shape, self.spacing)]
        mesh = np.meshgrid(*freqs, indexing="ij")
        k = np.zeros(self.shape + (3,))
        for name, m in zip(self.axes, mesh):
            k[..., AXES.index(name)] = m
        return k


@dataclass(frozen=True, eq=False)
class EmFieldState:
    grid: EmGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.shape != (6,) + self.grid.shape:
            raise ConfigurationError(f"field needs shape {(6,) + self.grid.shape}, got {values.shape}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_fields(cls, grid: EmGrid, E, B):
        """Build from E and B of shape (3, *grid.shape); a plain 3-vector means a uniform field."""
        def expand(F):
            F = np.asarray(F, np.complex128)
            if F.shape == (3,):
                F = F.reshape((3,) + (1,) * len(grid.shape))
            return np.broadcast_to(F, (3,) + grid.shape)

        E, B = expand(E), expand(B)
        return cls(grid, np.concatenate([E, -B]))

    @property
    def E(self) -> np.ndarray:
        return self.values[:3]

    @property
    def B(self) -> np.ndarray:
        return -self.values[3:]

    def with_values(self, values):
        return EmFieldState(self.grid, values)


def _spatial_axes(grid):
    return tuple(range(1, 1 + len(grid.shape)))


def propagate_em(psi: EmFieldState, t) -> EmFieldState:
    """Exact evolution: every Fourier mode is multiplied by exp(-i (k . beta) t)."""
    if t == 0:
        return psi
    axes = _spatial_axes(psi.grid)
    spec = fft.fftn(psi.values, axes=axes)
    k = psi.grid.wavevectors().reshape(-1, 3)
    w, U = np.linalg.eigh(BETA.symbol(k))
    phase = np.exp(-1j * w * t)
    modes = spec.reshape(6, -1).T
    coeff = np.einsum("mji,mj->mi", U.conj(), modes) * phase
    modes = np.einsum("mij,mj->mi", U, coeff)
    out = fft.ifftn(modes.T.reshape(spec.shape), axes=axes)
    return psi.with_values(out)


def energy_density(psi: EmFieldState) -> np.ndarray:
    """rho = psi^dagger psi = |E|^2 + |B|^2 at every point."""
    return np.sum(np.abs(psi.values) ** 2, axis=0)


def energy(psi: EmFieldState) -> float:
    """Squared norm of the wave function, integral of |E|^2 + |B|^2."""
    return float(energy_density(psi).sum() * psi.grid.cell_volume)


def flux_density(psi: EmFieldState) -> np.ndarray:
    """psi^dagger beta_i psi, shape (3, *grid.shape).

    This is the current that closes the continuity equation for
    rho = psi^dagger psi.  For real fields it equals 2 (E x B).
    """
    v = psi.values
    return np.stack([np.real(np.einsum("i...,ij,j...->...", v.conj(), b, v)) for b in BETA])


def poynting(psi: EmFieldState) -> np.ndarray:
    """Poynting vector E x B (real fields), i.e. half of :func:`flux_density`."""
    return 0.5 * flux_density(psi)


def spectral_divergence(field: np.ndarray, grid: EmGrid) -> np.ndarray:
    """Divergence of a real vector field of shape (3, *grid.shape)."""
    axes = tuple(range(len(grid.shape)))
    k = grid.wavevectors()
    total = np.zeros(grid.shape, dtype=np.complex128)
    for i in range(3):
        if np.any(k[..., i]):
            total += 1j * k[..., i] * fft.fftn(field[i], axes=axes)
    return np.real(fft.ifftn(total, axes=axes))


def continuity_residual(trajectory: Sequence[EmFieldState], dt) -> float:
    """max |d(rho)/dt + div(psi^dagger beta psi)| over interior snapshots.

    Time derivatives are centered differences, the divergence is spectral.
    """
    if len(trajectory) < 3:
        raise PreconditionError("continuity residual needs at least 3 snapshots")
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    rho = [energy_density(s) for s in trajectory]
    worst = 0.0
    for n in range(1, len(trajectory) - 1):
        drho = (rho[n + 1] - rho[n - 1]) / (2 * dt)
        div = spectral_divergence(flux_density(trajectory[n]), trajectory[n].grid)
        worst = max(worst, float(np.abs(drho + div).max()))
    return worst


def project_divergence_free(psi: EmFieldState) -> EmFieldState:
    """Remove the longitudinal part k (k . F)/|k|^2 of E and B for every k != 0."""
    axes = _spatial_axes(psi.grid)
    spec = fft.fftn(psi.values, axes=axes)
    k = np.moveaxis(psi.grid.wavevectors(), -1, 0)
    k2 = np.sum(k * k, axis=0)
    safe = np.where(k2 > 0, k2, 1.0)
    for block in (slice(0, 3), slice(3, 6)):
        F = spec[block]
        longitudinal = k * (np.sum(k * F, axis=0) / safe)
        spec[block] = F - np.where(k2 > 0, longitudinal, 0.0)
    return psi.with_values(fft.ifftn(spec, axes=axes))


def field_divergence(psi: EmFieldState) -> Tuple[float, float]:
    """Max |k . E_hat| and |k . B_hat| over all modes."""
    axes = _spatial_axes(psi.grid)
    spec = fft.fftn(psi.values, axes=axes)
    k = np.moveaxis(psi.grid.wavevectors(), -1, 0)
    return (float(np.abs(np.sum(k * spec[:3], axis=0)).max()),
            float(np.abs(np.sum(k * spec[3:], axis=0)).max()))


FIELD_HEADER = ["x", "y", "z"] + [f"{part}{c}{a}" for c in "EB" for a in AXES for part in ("re", "im")]


def write_field_csv(path, psi: EmFieldState):
    """One row per grid point in C (row-major) order of the grid axes."""
    coords = [c.ravel() for c in psi.grid.coordinates()]
    cols = []
    for F in (psi.E, psi.B):
        for i in range(3):
            f = F[i].ravel()
            cols += [f.real, f.imag]
    tables.write_csv(path, FIELD_HEADER, coords + cols)


def read_field_csv(path, grid: EmGrid) -> EmFieldState:
    header, cols = tables.read_csv(path)
    if header != FIELD_HEADER:
        raise ConfigurationError(f"unexpected field CSV header {header}")
    data = [cols[3 + 2 * i] + 1j * cols[4 + 2 * i] for i in range(6)]
    E = np.stack(data[:3]).reshape((3,) + grid.shape)
    B = np.stack(data[3:]).reshape((3,) + grid.shape)
    return EmFieldState.from_fields(grid, E, B)


def write_energy_csv(path, times, energies, residuals):
    tables.write_csv(path, ["t", "energy", "residual"], [list(times), list(energies), list(residuals)])
