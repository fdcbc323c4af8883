"""Classical flows and KvN propagation in the (q, p) representation.

The KvN equation  d(psi)/dt = (dH/dq d/dp - dH/dp d/dq) psi  is a transport
equation, so ``psi(x, t) = psi(Phi_{-t}(x), 0)`` where ``Phi`` is the
Hamiltonian flow.  :func:`propagate_qp` traces every grid point backwards
along its characteristic and interpolates the initial amplitude there with
cubic splines.  The initial data is interpolated exactly once whatever
``steps`` is, so no diffusion builds up with the number of steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import OutflowError, PreconditionError, UnsupportedError
from .hamiltonians import HamiltonianSpec, Kind
from .phase_space import (KvnWaveFunction, Observable, PhaseSpaceGrid,
                          Representation, density, expectation, integrate)

OUTFLOW_TOLERANCE = 1e-6
DEFAULT_DT = 1e-3
# Spline prefilter influence decays like 0.268**k; 24 cells puts it below 1e-13.
_WRAP_PAD = 24


def is_exact(H: HamiltonianSpec) -> bool:
    """True when the flow has a closed form (potential of degree <= 2)."""
    return H.degree <= 2


def _quadratic_flow(H, q, p, t):
    c = np.zeros(3)
    coef = np.asarray(H.potential.coef, float)[:3]
    c[:len(coef)] = coef
    m = H.mass
    c1, c2 = c[1], c[2]
    if c2 == 0.0:
        return q + p * t / m - c1 * t * t / (2 * m), p - c1 * t
    qs = -c1 / (2 * c2)
    u = q - qs
    if c2 > 0:
        w = math.sqrt(2 * c2 / m)
        cs, sn = math.cos(w * t), math.sin(w * t)
        return qs + u * cs + p * sn / (m * w), -m * w * u * sn + p * cs
    k = math.sqrt(-2 * c2 / m)
    ch, sh = math.cosh(k * t), math.sinh(k * t)
    return qs + u * ch + p * sh / (m * k), m * k * u * sh + p * ch


def verlet(H: HamiltonianSpec, q, p, dt, steps):
    """Stormer-Verlet (kick-drift-kick); time reversible and symplectic."""
    q = np.array(q, dtype=float, copy=True)
    p = np.array(p, dtype=float, copy=True)
    m = H.mass
    half = 0.5 * dt
    p -= half * H.dV(q)
    for i in range(steps):
        q += dt * p / m
        if i < steps - 1:
            p -= dt * H.dV(q)
    p -= half * H.dV(q)
    return q, p


def liouville_flow(H: HamiltonianSpec, point, t, steps: int = 1):
    """Evolve phase-space point(s) for time ``t`` (negative runs backwards).

    Free, harmonic and any potential of degree <= 2 use the closed form;
    everything else takes ``steps`` Verlet steps.
    """
    if steps < 1:
        raise PreconditionError("steps must be >= 1")
    q, p = point
    if t == 0:
        return np.array(q, dtype=float, copy=True), np.array(p, dtype=float, copy=True)
    if is_exact(H):
        return _quadratic_flow(H, np.asarray(q, float), np.asarray(p, float), t)
    return verlet(H, q, p, t / steps, steps)


@dataclass(frozen=True)
class FlowMap:
    """Fixed-step Verlet map for a Hamiltonian."""

    hamiltonian: HamiltonianSpec
    dt: float
    order: str = "verlet2"

    def step(self, q, p, n: int = 1):
        return verlet(self.hamiltonian, q, p, self.dt, n)

    def back(self, q, p, n: int = 1):
        return verlet(self.hamiltonian, q, p, -self.dt, n)


def default_steps(H: HamiltonianSpec, t, steps: Optional[int] = None) -> int:
    if steps is not None:
        return int(steps)
    if is_exact(H):
        return 1
    return max(1, int(math.ceil(abs(t) / DEFAULT_DT)))


def _wrap_flags(grid, wrap):
    if wrap is None:
        return grid.periodic_q, grid.periodic_p
    return bool(wrap), bool(wrap)


def interpolate(values: np.ndarray, grid: PhaseSpaceGrid, q, p, wrap: Optional[bool] = None) -> np.ndarray:
    """Cubic-spline interpolation of grid samples at arbitrary points.

    Periodic axes wrap; bounded axes are zero outside the sampled range.
    ``wrap`` overrides the grid's flags for both axes.
    """
    iq = (np.asarray(q) - grid.q[0]) / grid.dq
    ip = (np.asarray(p) - grid.p[0]) / grid.dp
    pq, pp = _wrap_flags(grid, wrap)
    if pq and pp:
        return ndimage.map_coordinates(values, [iq, ip], order=3, mode="grid-wrap")
    if not pq and not pp:
        return ndimage.map_coordinates(values, [iq, ip], order=3, mode="constant", cval=0.0)
    pad = [(_WRAP_PAD, _WRAP_PAD) if pq else (0, 0), (_WRAP_PAD, _WRAP_PAD) if pp else (0, 0)]
    padded = np.pad(values, pad, mode="wrap")
    # bounded axis still needs zero fill beyond its samples
    padded = np.pad(padded, [(0, 0) if pq else (_WRAP_PAD, _WRAP_PAD),
                             (0, 0) if pp else (_WRAP_PAD, _WRAP_PAD)])
    if pq:
        iq = np.mod(iq, grid.n_q)
    if pp:
        ip = np.mod(ip, grid.n_p)
    return ndimage.map_coordinates(padded, [iq + _WRAP_PAD, ip + _WRAP_PAD],
                                   order=3, mode="constant", cval=0.0)


def lost_fraction(values: np.ndarray, grid: PhaseSpaceGrid, H: HamiltonianSpec, t, steps,
                  wrap: Optional[bool] = None) -> float:
    """Fraction of |values|^2 whose forward characteristic leaves a bounded axis."""
    pq, pp = _wrap_flags(grid, wrap)
    if pq and pp:
        return 0.0
    weight = np.abs(values) ** 2
    total = weight.sum()
    if total == 0:
        return 0.0
    Q, P = grid.mesh()
    qf, pf = liouville_flow(H, (Q, P), t, steps)
    inside = np.ones(Q.shape, dtype=bool)
    if not pq:
        inside &= (qf >= grid.q_min) & (qf <= grid.q_max)
    if not pp:
        inside &= (pf >= grid.p_min) & (pf <= grid.p_max)
    return float(weight[~inside].sum() / total)


def advect(values: np.ndarray, grid: PhaseSpaceGrid, H: HamiltonianSpec, t, steps=None,
           check_outflow: bool = True, wrap: Optional[bool] = None) -> np.ndarray:
    """Transport an array (complex amplitude or real W) along the flow for time ``t``."""
    if t == 0:
        return np.array(values, copy=True)
    steps = default_steps(H, t, steps)
    if check_outflow:
        lost = lost_fraction(values, grid, H, t, steps, wrap)
        if lost > OUTFLOW_TOLERANCE:
            raise OutflowError(f"characteristics carry {lost:.3e} of the mass off the grid", lost)
    Q, P = grid.mesh()
    qb, pb = liouville_flow(H, (Q, P), -t, steps)
    return interpolate(values, grid, qb, pb, wrap)


def propagate_qp(psi: KvnWaveFunction, H: HamiltonianSpec, t, steps: Optional[int] = None,
                 check_outflow: bool = True) -> KvnWaveFunction:
    """KvN evolution ``psi(t) = exp(-i L t) psi`` by backward characteristics."""
    if psi.representation is not Representation.QP:
        raise PreconditionError("propagate_qp needs a wave function in the (q, p) representation")
    return psi.with_values(advect(psi.values, psi.grid, H, t, steps, check_outflow))


def superselection_check(psi: KvnWaveFunction, phase_field, H: HamiltonianSpec, t,
                         steps: Optional[int] = None) -> float:
    """Max-norm distance between the densities evolved from psi and psi*exp(i phase)."""
    phase_field = np.asarray(phase_field, float)
    if phase_field.shape != psi.grid.shape:
        raise PreconditionError("phase field must be sampled on the wave function's grid")
    a = propagate_qp(psi, H, t, steps)
    b = propagate_qp(psi.with_values(psi.values * np.exp(1j * phase_field)), H, t, steps)
    return float(np.max(np.abs(density(a) - density(b))))


MOMENT_HEADER = ["t", "norm", "mean_q", "mean_p", "mean_q2", "mean_p2"]


def moments(psi: KvnWaveFunction):
    q, p = Observable.q(), Observable.p()
    return (psi.norm(), expectation(psi, q), expectation(psi, p),
            expectation(psi, q * q), expectation(psi, p * p))


def moment_series(psi0: KvnWaveFunction, H: HamiltonianSpec, times: Sequence[float],
                  steps_per_unit: Optional[int] = None):
    """Rows ``(t, norm, <q>, <p>, <q^2>, <p^2>)``; each time propagated from ``psi0``."""
    rows = []
    for t in times:
        steps = None if steps_per_unit is None else max(1, int(math.ceil(abs(t) * steps_per_unit)))
        psi = propagate_qp(psi0, H, t, steps)
        rows.append((float(t),) + moments(psi))
    return rows


@dataclass(frozen=True)
class HiddenPairState:
    """Sudarshan's doubled variables; ``chi`` and ``pi`` are never observable."""

    q: float
    p: float
    chi: float
    pi: float
    hidden: frozenset = frozenset({"chi", "pi"})

    def observable(self):
        return (self.q, self.p)

    def as_tuple(self):
        return (self.q, self.p, self.chi, self.pi)


def hidden_pair_generator(H: HamiltonianSpec) -> np.ndarray:
    """Matrix A with d/dt (q, p, chi, pi) = A (q, p, chi, pi) for a quadratic H.

    From the operator H = V'(q) chi + p pi / m with chi = i d/dp,
    pi = -i d/dq, and Heisenberg motion d(X)/dt = i[H, X]:
    q' = p/m, p' = -V'(q), chi' = pi/m, pi' = -V''(q) chi.
    """
    if H.kind not in (Kind.FREE, Kind.HARMONIC):
        raise UnsupportedError(f"hidden-pair dynamics is linear only for free/harmonic, not {H.kind.value}")
    m = H.mass
    k = m * H.omega ** 2 if H.kind is Kind.HARMONIC else 0.0
    return np.array([[0.0, 1 / m, 0.0, 0.0],
                     [-k, 0.0, 0.0, 0.0],
                     [0.0, 0.0, 0.0, 1 / m],
                     [0.0, 0.0, -k, 0.0]])


def hidden_pair_eom(H: HamiltonianSpec, state, t) -> HiddenPairState:
    """Closed-form evolution of (q, p, chi, pi) for free and harmonic H."""
    hidden_pair_generator(H)  # kind check
    q, p, chi, pi = (float(x) for x in state)
    q1, p1 = _quadratic_flow(H, q, p, t)
    # (chi, pi) obey the same linear equations as (q, p) with V'(q) -> V'' chi
    chi1, pi1 = _quadratic_flow(H, chi, pi, t)
    return HiddenPairState(float(q1), float(p1), float(chi1), float(pi1))


def random_phase_field(grid: PhaseSpaceGrid, rng: np.random.Generator, bumps: int = 5,
                       width: float = 1.0) -> np.ndarray:
    """Smooth real field: a sum of Gaussian bumps with random centers and heights."""
    Q, P = grid.mesh()
    field = np.zeros(grid.shape)
    for _ in range(bumps):
        height = rng.normal()
        qc = rng.uniform(grid.q_min, grid.q_max)
        pc = rng.uniform(grid.p_min, grid.p_max)
        field += height * np.exp(-((Q - qc) ** 2 + (P - pc) ** 2) / (2 * width ** 2))
    return field
