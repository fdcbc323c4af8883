"""Wigner functions, Moyal dynamics and the hbar -> 0 comparison with Liouville flow.

For H = p^2/2m + V(q) with V of degree <= 4 the Moyal bracket stops at
third order, so

    dW/dt = -(p/m) dW/dq + V'(q) dW/dp - (hbar^2/24) V'''(q) d^3W/dp^3

is exact.  Derivatives are spectral (the grid is treated as periodic) and
time stepping is classical RK4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional

import numpy as np
from scipy import fft, special

from .errors import (ConfigurationError, PreconditionError, TruncationError,
                     UnsupportedError)
from .hamiltonians import HamiltonianSpec
from .phase_space import PhaseSpaceGrid
from .propagator import advect
from . import tables

EDGE_TOLERANCE = 1e-8
NORM_TOLERANCE = 1e-10
# RK4 is stable on the imaginary axis up to 2*sqrt(2); dt * rate <= 0.25 * 2 pi keeps a margin.
STEP_SAFETY = 0.25


@dataclass(frozen=True, eq=False)
class QuantumState1D:
    """A normalized wave function sampled on the q axis of ``grid``."""

    grid: PhaseSpaceGrid
    values: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.shape != (self.grid.n_q,):
            raise ConfigurationError(f"state needs {self.grid.n_q} samples, got {values.shape}")
        if not self.hbar > 0:
            raise ConfigurationError("hbar must be positive", field="hbar")
        norm2 = float(np.sum(np.abs(values) ** 2) * self.grid.dq)
        if abs(norm2 - 1.0) > NORM_TOLERANCE:
            raise PreconditionError(f"quantum state is not normalized (norm^2 = {norm2:.12g})")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid, fn: Callable, hbar=1.0):
        values = np.asarray(fn(grid.q), dtype=np.complex128)
        norm = math.sqrt(float(np.sum(np.abs(values) ** 2) * grid.dq))
        return cls(grid, values / norm, hbar)

    def momentum_amplitude(self, p=None) -> np.ndarray:
        """(2 pi hbar)^(-1/2) * integral dq exp(-i p q / hbar) psi(q), on the grid's p axis by default."""
        p = self.grid.p if p is None else np.asarray(p, float)
        kernel = np.exp(-1j * np.outer(p, self.grid.q) / self.hbar)
        return kernel @ self.values * self.grid.dq / math.sqrt(2 * math.pi * self.hbar)


def harmonic_eigenstate(grid: PhaseSpaceGrid, n: int, m=1.0, omega=1.0, hbar=1.0) -> QuantumState1D:
    """n-th oscillator eigenfunction, sign fixed so the leading Hermite coefficient is positive."""
    a = math.sqrt(m * omega / hbar)

    def fn(q):
        x = a * q
        return special.eval_hermite(n, x) * np.exp(-x * x / 2)

    return QuantumState1D.from_function(grid, fn, hbar)


@dataclass(frozen=True, eq=False)
class WignerFunction:
    grid: PhaseSpaceGrid
    values: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ConfigurationError(f"values have shape {values.shape}, grid expects {self.grid.shape}")
        if not self.hbar > 0:
            raise ConfigurationError("hbar must be positive", field="hbar")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def with_values(self, values, hbar=None):
        return WignerFunction(self.grid, values, self.hbar if hbar is None else hbar)

    def total(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_area)

    def marginal_q(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.grid.dp

    def marginal_p(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.grid.dq


def wigner_from_psi(state: QuantumState1D) -> WignerFunction:
    """W(q,p) = (2 pi hbar)^-1 integral ds exp(-i p s/hbar) psi(q+s/2) psi*(q-s/2).

    The offset s runs over even multiples of dq so that q +- s/2 are grid
    samples; the s-sum is evaluated for every target p at once as a dense
    discrete Fourier sum (a matrix product).
    """
    grid = state.grid
    psi = state.values
    edge = max(abs(psi[0]), abs(psi[-1]))
    if edge >= EDGE_TOLERANCE:
        raise TruncationError(f"wave function is {edge:.3e} at the grid edge", edge)
    n = grid.n_q
    j = np.arange(n)[:, None]
    k = np.arange(-(n - 1), n)[None, :]
    plus, minus = j + k, j - k
    valid = (plus >= 0) & (plus < n) & (minus >= 0) & (minus < n)
    corr = np.where(valid, psi[np.clip(plus, 0, n - 1)] * np.conj(psi[np.clip(minus, 0, n - 1)]), 0.0)
    s = 2.0 * grid.dq * k.ravel()
    kernel = np.exp(-1j * np.outer(s, grid.p) / state.hbar)
    W = corr @ kernel * (2.0 * grid.dq) / (2 * math.pi * state.hbar)
    residue = np.abs(W.imag).max()
    if residue > 1e-10:
        raise ArithmeticError(f"Wigner transform left an imaginary residue of {residue:.3e}")
    return WignerFunction(grid, W.real, state.hbar)


def _derivatives(W: np.ndarray, grid: PhaseSpaceGrid, want_third: bool):
    nq, npp = W.shape
    kq = 2 * math.pi * fft.rfftfreq(nq, grid.dq)
    kp = 2 * math.pi * fft.rfftfreq(npp, grid.dp)
    Wq = fft.irfft(1j * kq[:, None] * fft.rfft(W, axis=0), n=nq, axis=0)
    Wh = fft.rfft(W, axis=1)
    Wp = fft.irfft(1j * kp * Wh, n=npp, axis=1)
    Wppp = fft.irfft((1j * kp) ** 3 * Wh, n=npp, axis=1) if want_third else None
    return Wq, Wp, Wppp


def _check_degree(H: HamiltonianSpec):
    if H.degree > 4:
        raise UnsupportedError(f"potential of degree {H.degree}: the Moyal series would not terminate")


def liouville_rhs(W: WignerFunction, H: HamiltonianSpec) -> np.ndarray:
    """Poisson-bracket part {H, W} alone."""
    Q, P = W.grid.mesh()
    Wq, Wp, _ = _derivatives(np.asarray(W.values), W.grid, False)
    return -(P / H.mass) * Wq + H.dV(Q) * Wp


def quantum_correction(W: WignerFunction, H: HamiltonianSpec) -> np.ndarray:
    """The hbar^2 term -(hbar^2/24) V'''(q) d^3W/dp^3."""
    Q, _ = W.grid.mesh()
    _, _, Wppp = _derivatives(np.asarray(W.values), W.grid, True)
    return -(W.hbar ** 2 / 24.0) * H.d3V(Q) * Wppp


def moyal_rhs(W: WignerFunction, H: HamiltonianSpec) -> np.ndarray:
    """Right-hand side of the Moyal equation, dW/dt = -{{W, H}}."""
    _check_degree(H)
    return _rhs(np.asarray(W.values), W.grid, H, W.hbar, *_coefficients(W.grid, H))


def _coefficients(grid, H):
    Q, P = grid.mesh()
    return -P / H.mass, H.dV(Q), -H.d3V(Q) / 24.0


def _rhs(W, grid, H, hbar, vq, vp, c3):
    quantum = H.degree >= 3
    Wq, Wp, Wppp = _derivatives(W, grid, quantum)
    out = vq * Wq + vp * Wp
    if quantum:
        out += hbar ** 2 * c3 * Wppp
    return out


def spectral_rate(grid: PhaseSpaceGrid, H: HamiltonianSpec, hbar: float) -> float:
    """Upper bound on |eigenvalue| of the discretized Moyal operator."""
    kq, kp = math.pi / grid.dq, math.pi / grid.dp
    pmax = max(abs(grid.p[0]), abs(grid.p[-1]))
    qs = grid.q
    rate = pmax / H.mass * kq + np.abs(H.dV(qs)).max() * kp
    if H.degree >= 3:
        rate += hbar ** 2 / 24.0 * np.abs(H.d3V(qs)).max() * kp ** 3
    return float(rate)


def max_time_step(grid: PhaseSpaceGrid, H: HamiltonianSpec, hbar: float) -> float:
    rate = spectral_rate(grid, H, hbar)
    return math.inf if rate == 0 else STEP_SAFETY * 2 * math.pi / rate


def propagate_moyal(W: WignerFunction, H: HamiltonianSpec, t, steps: Optional[int] = None) -> WignerFunction:
    """RK4 integration of the Moyal equation.

    With ``steps=None`` the smallest step count inside the stability bound is
    used; an explicit ``steps`` that violates it raises ConfigurationError.
    """
    _check_degree(H)
    if t == 0:
        return W
    dt_max = max_time_step(W.grid, H, W.hbar)
    if steps is None:
        steps = max(1, int(math.ceil(abs(t) / dt_max)))
    dt = t / steps
    if abs(dt) > dt_max * (1 + 1e-12):
        raise ConfigurationError(f"time step {abs(dt):.3e} exceeds the stability bound {dt_max:.3e}",
                                 field="steps")
    coeffs = _coefficients(W.grid, H)
    grid, hbar = W.grid, W.hbar

    def f(x):
        return _rhs(x, grid, H, hbar, *coeffs)

    x = np.array(W.values, dtype=float)
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return W.with_values(x)


def classical_propagate(W: WignerFunction, H: HamiltonianSpec, t, steps: Optional[int] = None) -> WignerFunction:
    """Carry W along the Hamiltonian flow as a KvNS amplitude.

    Zero fill outside the grid stands in for the unbounded plane, even when the
    grid is flagged periodic for the spectral solver.
    """
    return W.with_values(advect(np.asarray(W.values), W.grid, H, t, steps, check_outflow=True, wrap=False))


def l2_distance(a: np.ndarray, b: np.ndarray, grid: PhaseSpaceGrid) -> float:
    return float(np.sqrt(np.sum((np.asarray(a) - np.asarray(b)) ** 2) * grid.cell_area))


def classical_limit_gap(W0: WignerFunction, H: HamiltonianSpec, t, hbars: Iterable[float],
                        steps: Optional[int] = None) -> List[float]:
    """L2 distance between Moyal and Liouville evolution of the same W0, per hbar."""
    hbars = [float(h) for h in hbars]
    if t == 0:
        return [0.0 for _ in hbars]
    reference = classical_propagate(W0, H, t, steps)
    gaps = []
    for h in hbars:
        W = propagate_moyal(W0.with_values(W0.values, hbar=h), H, t)
        gaps.append(l2_distance(W.values, reference.values, W0.grid))
    return gaps


def write_csv(path, W: WignerFunction):
    Q, P = W.grid.mesh()
    tables.write_csv(path, ["q", "p", "w"], [Q.ravel(), P.ravel(), np.asarray(W.values).ravel()])


def write_gap_csv(path, hbars, gaps):
    tables.write_csv(path, ["hbar", "gap_l2"], [list(hbars), list(gaps)])
