"""Quantum systems read out by classical KvNS apparatus, with no collapse step.

Two scenarios:

* Stern-Gerlach: the spin label selects one of two KvN branches for the
  apparatus coordinate (q3, p3).  Branch +- feels the constant force +-m Gamma,
  so an initially resting branch follows q3 = +-Gamma t^2 / 2.  The weights
  c+- never change; the reduced spin state loses coherence only because the
  branches separate.
* Momentum meter: an oscillator coupled to a pointer through g p chi^A.
  Everything is linear, so first and second moments evolve in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import fft

from .errors import ConfigurationError, OutflowError, PreconditionError
from .hamiltonians import HamiltonianSpec
from .phase_space import (KvnWaveFunction, PhaseSpaceGrid, density, inner_product,
                          integrate)
from .propagator import OUTFLOW_TOLERANCE, lost_fraction
from . import tables

NORM_TOLERANCE = 1e-10
SEPARATION_COHERENCE = 1e-3


@dataclass(frozen=True, eq=False)
class HybridSpinKvnState:
    c_plus: complex
    c_minus: complex
    psi_plus: KvnWaveFunction
    psi_minus: KvnWaveFunction

    def __post_init__(self):
        if self.psi_plus.grid != self.psi_minus.grid:
            raise PreconditionError("both branches must share one grid")
        total = self.total_norm()
        if abs(total - 1) > NORM_TOLERANCE:
            raise PreconditionError(f"hybrid state weight is {total:.12g}, expected 1")

    @property
    def grid(self) -> PhaseSpaceGrid:
        return self.psi_plus.grid

    def total_norm(self) -> float:
        return (abs(self.c_plus) ** 2 * self.psi_plus.norm() ** 2
                + abs(self.c_minus) ** 2 * self.psi_minus.norm() ** 2)

    def with_branches(self, psi_plus, psi_minus):
        return HybridSpinKvnState(self.c_plus, self.c_minus, psi_plus, psi_minus)


def _translate(values, grid: PhaseSpaceGrid, shift_q, shift_p):
    """f(q - shift_q(p), p - shift_p) by Fourier phase ramps; exactly unitary on the grid.

    ``shift_q`` is evaluated after the p shift, so it may depend on the
    destination p through an array of length n_p.
    """
    kp = 2 * math.pi * fft.fftfreq(grid.n_p, grid.dp)
    out = fft.ifft(fft.fft(values, axis=1) * np.exp(-1j * kp * shift_p)[None, :], axis=1)
    kq = 2 * math.pi * fft.fftfreq(grid.n_q, grid.dq)
    shift_q = np.broadcast_to(np.asarray(shift_q, float), (grid.n_p,))
    return fft.ifft(fft.fft(out, axis=0) * np.exp(-1j * np.outer(kq, shift_q)), axis=0)


def branch_hamiltonian(sign: int, gamma, m) -> HamiltonianSpec:
    """H = p^2/2m - sign * m * Gamma * q, i.e. constant force sign * m * Gamma."""
    return HamiltonianSpec.polynomial([0.0, -sign * m * gamma], m)


def _branch(psi: KvnWaveFunction, sign, gamma, m, t):
    H = branch_hamiltonian(sign, gamma, m)
    lost = lost_fraction(psi.values, psi.grid, H, t, 1, wrap=False)
    if lost > OUTFLOW_TOLERANCE:
        raise OutflowError(f"Stern-Gerlach branch {'+' if sign > 0 else '-'} carries "
                           f"{lost:.3e} of its mass off the grid", lost)
    # backward characteristic: psi(q, p) = psi0(q - p t/m + s G t^2/2, p - s m G t)
    g = psi.grid
    shift_q = g.p * t / m - 0.5 * sign * gamma * t * t
    return psi.with_values(_translate(psi.values, g, shift_q, sign * m * gamma * t))


def sg_propagate(h: HybridSpinKvnState, gamma, m, t, steps: int = 1) -> HybridSpinKvnState:
    """Advect each branch along its parabola; the weights c+- are untouched.

    The flow is linear, so the result is exact in time and ``steps`` is
    accepted only for interface symmetry with the other propagators.
    """
    if not math.isfinite(gamma):
        raise ConfigurationError("Gamma must be finite", field="gamma")
    if not (math.isfinite(m) and m > 0):
        raise ConfigurationError("mass must be positive", field="m")
    if steps < 1:
        raise ConfigurationError("steps must be >= 1", field="steps")
    if t == 0:
        return h
    return h.with_branches(_branch(h.psi_plus, +1, gamma, m, t),
                           _branch(h.psi_minus, -1, gamma, m, t))


def reduced_spin_coherence(h: HybridSpinKvnState) -> float:
    """|c+ c-*| |<psi+|psi->|: the off-diagonal of the reduced spin density matrix."""
    return float(abs(h.c_plus * np.conj(h.c_minus)) * abs(inner_product(h.psi_plus, h.psi_minus)))


def total_density(h: HybridSpinKvnState) -> np.ndarray:
    """|c+|^2 |psi+|^2 + |c-|^2 |psi-|^2 (the branches are never added coherently)."""
    return abs(h.c_plus) ** 2 * density(h.psi_plus) + abs(h.c_minus) ** 2 * density(h.psi_minus)


def sg_outcome_histogram(h: HybridSpinKvnState, threshold: float = 0.0):
    """(P_up, P_down): weight of the pointer distribution above and below q3 = threshold.

    A sample lying exactly on the threshold counts half to each side.
    """
    coherence = reduced_spin_coherence(h)
    if coherence > SEPARATION_COHERENCE:
        raise PreconditionError(f"branches are not separated: coherence {coherence:.3e} > "
                                f"{SEPARATION_COHERENCE:g}")
    rho = total_density(h).sum(axis=1)
    q = h.grid.q
    w = np.where(q > threshold, 1.0, np.where(q == threshold, 0.5, 0.0))
    total = rho.sum()
    up = float((rho * w).sum() / total)
    return up, 1.0 - up


def mean_q3(psi: KvnWaveFunction) -> float:
    rho = density(psi)
    Q, _ = psi.grid.mesh()
    return integrate(Q * rho, psi.grid) / integrate(rho, psi.grid)


SG_HEADER = ["t", "mean_q3_up", "mean_q3_down", "coherence", "P_up", "P_down"]


def sg_series(h0: HybridSpinKvnState, gamma, m, times: Sequence[float], threshold=0.0):
    """Rows of SG_HEADER; histogram entries are NaN while the branches still overlap."""
    rows = []
    for t in times:
        h = sg_propagate(h0, gamma, m, t)
        coherence = reduced_spin_coherence(h)
        if coherence <= SEPARATION_COHERENCE:
            up, down = sg_outcome_histogram(h, threshold)
        else:
            up = down = float("nan")
        rows.append((float(t), mean_q3(h.psi_plus), mean_q3(h.psi_minus), coherence, up, down))
    return rows


def write_sg_csv(path, rows):
    tables.write_rows(path, SG_HEADER, rows)


# --- momentum meter ---------------------------------------------------------

METER_VARIABLES = ("q", "p", "qA", "pA", "chiA", "piA")
HIDDEN = frozenset({"chiA", "piA"})
_OBSERVABLE_INDEX = [i for i, v in enumerate(METER_VARIABLES) if v not in HIDDEN]


@dataclass(frozen=True, eq=False)
class MeterMomentState:
    """Means and covariance of (q, p, qA, pA, chiA, piA) plus the model constants."""

    mean: np.ndarray
    cov: np.ndarray
    g: float = 1.0
    m: float = 1.0
    M: float = 1.0
    omega: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (6,) or cov.shape != (6, 6):
            raise ConfigurationError("meter state needs a 6-vector mean and 6x6 covariance")
        for name in ("g", "m", "M", "omega", "t"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite", field=name)
        if not (self.m > 0 and self.M > 0):
            raise ConfigurationError("masses m and M must be positive", field="m")
        scale = max(1.0, np.abs(cov).max())
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise PreconditionError("covariance must be symmetric")
        if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-10 * scale:
            raise PreconditionError("covariance must be positive semidefinite")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def gaussian(cls, q=0.0, p=0.0, qA=0.0, pA=0.0, variances=None, chiA=0.0, piA=0.0, **constants):
        var = np.full(6, 0.0) if variances is None else np.asarray(variances, float)
        return cls(np.array([q, p, qA, pA, chiA, piA]), np.diag(var), **constants)

    def value(self, name: str) -> float:
        return float(self.mean[METER_VARIABLES.index(name)])

    def observable_report(self):
        """Means and covariance of the observable variables only."""
        idx = _OBSERVABLE_INDEX
        return {"variables": tuple(METER_VARIABLES[i] for i in idx),
                "mean": self.mean[idx].copy(), "cov": self.cov[np.ix_(idx, idx)].copy()}


def meter_generator(g, m, M, omega) -> np.ndarray:
    """A with d/dt (q, p, qA, pA, chiA, piA) = A (...).

    q' = p/m + g chiA,  p' = -m w^2 q,  qA' = 0,  pA' = chiA/M + g p,
    chiA' = 0,  piA' = -chiA/M.
    """
    A = np.zeros((6, 6))
    A[0, 1], A[0, 4] = 1 / m, g
    A[1, 0] = -m * omega ** 2
    A[3, 4], A[3, 1] = 1 / M, g
    A[5, 4] = -1 / M
    return A


def meter_propagator(g, m, M, omega, t) -> np.ndarray:
    """exp(A t) in closed form."""
    c = math.cos(omega * t)
    s = math.sin(omega * t) / omega if omega != 0 else t
    one_minus_c = 2 * math.sin(0.5 * omega * t) ** 2   # 1 - cos, without cancellation
    P = np.eye(6)
    P[0, 0], P[0, 1], P[0, 4] = c, s / m, g * s
    P[1, 0], P[1, 1], P[1, 4] = -m * omega ** 2 * s, c, -m * g * one_minus_c
    P[3, 0], P[3, 1], P[3, 4] = -g * m * one_minus_c, g * s, t / M + m * g * g * (s - t)
    P[5, 4] = -t / M
    return P


def momentum_meter_evolve(s: MeterMomentState, t) -> MeterMomentState:
    """Exact evolution of means and covariance by t (added to ``s.t``)."""
    P = meter_propagator(s.g, s.m, s.M, s.omega, t)
    cov = P @ s.cov @ P.T
    return MeterMomentState(P @ s.mean, 0.5 * (cov + cov.T), s.g, s.m, s.M, s.omega, s.t + t)


@dataclass(frozen=True)
class UnmeasurabilityReport:
    """Split of d<q>/dt into the observable part <p>/m and the hidden part g <chiA>."""

    observable: float
    hidden: float
    total: float


def position_unmeasurability_report(s: MeterMomentState) -> UnmeasurabilityReport:
    rate = meter_generator(s.g, s.m, s.M, s.omega) @ s.mean
    return UnmeasurabilityReport(s.value("p") / s.m, s.g * s.value("chiA"), float(rate[0]))


METER_HEADER = ["t", "mean_pA_observable", "mean_pA_hidden_term", "mean_p", "mean_q"]


def meter_series(s0: MeterMomentState, times: Sequence[float]):
    """Rows of METER_HEADER.

    The hidden term is the part of <pA> fed directly by chiA/M, i.e.
    <chiA>_0 t / M; the observable part is what remains, pA_0 + g * integral <p>.
    """
    rows = []
    for t in times:
        s = momentum_meter_evolve(s0, t)
        hidden = s0.value("chiA") * t / s0.M
        rows.append((float(t), s.value("pA") - hidden, hidden, s.value("p"), s.value("q")))
    return rows


def write_meter_csv(path, rows):
    tables.write_rows(path, METER_HEADER, rows)


def branch_width(psi: KvnWaveFunction) -> float:
    """Standard deviation of q3 in one branch."""
    rho = density(psi)
    Q, _ = psi.grid.mesh()
    w = integrate(rho, psi.grid)
    mu = integrate(Q * rho, psi.grid) / w
    return math.sqrt(integrate((Q - mu) ** 2 * rho, psi.grid) / w)
