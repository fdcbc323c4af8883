"""The mixed (q, lambda_p) representation of KvN wave functions.

    psi(q, lam) = (2 pi)^(-1/2) * integral dp exp(+i p lam) psi(q, p)

realized as a discrete Fourier transform along p.  The lambda samples are
``2 pi k / (n_p dp)`` for centered integer ``k``, so the transform is exactly
unitary with respect to the Riemann-sum inner products on both grids.

With this kernel, multiplying by p becomes ``-i d/dlam`` and ``d/dp`` becomes
``-i lam``, so the unit-mass KvN equation reads

    i d(psi)/dt = -(d/dq d/dlam - V'(q) lam) psi .
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy import fft

from .errors import PreconditionError, UnsupportedError
from .hamiltonians import HamiltonianSpec
from .phase_space import KvnWaveFunction, PhaseSpaceGrid, Representation

DEFAULT_DT = 5e-3


def dual_grid(grid: PhaseSpaceGrid) -> PhaseSpaceGrid:
    """(q, lambda_p) grid dual to the p axis of ``grid``."""
    n = grid.n_p
    dlam = 2 * math.pi / (n * grid.dp)
    lam_min = float(fft.fftshift(fft.fftfreq(n))[0]) * n * dlam
    return PhaseSpaceGrid(grid.q_min, grid.q_max, grid.n_q,
                          lam_min, lam_min + n * dlam, n, grid.periodic_q, True)


def _lambda_axis(src: PhaseSpaceGrid):
    lam = dual_grid(src).p
    return lam, src.p[0]


def _forward(values, src: PhaseSpaceGrid):
    lam, p0 = _lambda_axis(src)
    spectrum = fft.fftshift(fft.ifft(values, axis=1, norm="forward"), axes=1)
    return spectrum * (src.dp / math.sqrt(2 * math.pi)) * np.exp(1j * p0 * lam)


def _inverse(values, src: PhaseSpaceGrid):
    lam, p0 = _lambda_axis(src)
    spectrum = values * np.exp(-1j * p0 * lam) * (math.sqrt(2 * math.pi) / src.dp)
    return fft.fft(fft.ifftshift(spectrum, axes=1), axis=1, norm="forward")


def to_lambda_rep(psi: KvnWaveFunction) -> KvnWaveFunction:
    if psi.representation is not Representation.QP:
        raise PreconditionError("to_lambda_rep expects a (q, p) wave function")
    return KvnWaveFunction(dual_grid(psi.grid), _forward(psi.values, psi.grid),
                           Representation.Q_LAMBDA_P, source_grid=psi.grid)


def from_lambda_rep(psi: KvnWaveFunction) -> KvnWaveFunction:
    if psi.representation is not Representation.Q_LAMBDA_P:
        raise PreconditionError("from_lambda_rep expects a (q, lambda_p) wave function")
    if psi.source_grid is None:
        raise UnsupportedError("lambda-representation state does not record its (q, p) grid")
    return KvnWaveFunction(psi.source_grid, _inverse(psi.values, psi.source_grid))


def _q_wavenumbers(grid: PhaseSpaceGrid):
    return 2 * math.pi * fft.fftfreq(grid.n_q, grid.dq)


def _kinetic(values, src, dt, m):
    """exp(-i k_q p dt / m): exact free streaming, applied in the (k_q, p) domain."""
    psi_p = _inverse(values, src)
    kq = _q_wavenumbers(src)[:, None]
    phase = np.exp(-1j * kq * src.p[None, :] * dt / m)
    psi_p = fft.ifft(fft.fft(psi_p, axis=0) * phase, axis=0)
    return _forward(psi_p, src)


def propagate_lambda(psi: KvnWaveFunction, H: HamiltonianSpec, t, steps: Optional[int] = None) -> KvnWaveFunction:
    """Strang-split (potential / kinetic / potential) evolution in (q, lambda_p).

    The potential factor exp(-i V'(q) lam dt) is diagonal on the grid; the
    kinetic factor is diagonal after Fourier transforming both axes.  Each
    factor is unitary, so the norm is preserved to rounding.
    """
    if psi.representation is not Representation.Q_LAMBDA_P:
        raise PreconditionError("propagate_lambda expects a (q, lambda_p) wave function")
    if H.mass != 1.0:
        raise UnsupportedError("the lambda-representation equation is only stated for unit mass")
    if t == 0:
        return psi
    src = psi.source_grid
    if src is None:
        raise UnsupportedError("lambda-representation state does not record its (q, p) grid")
    if steps is None:
        steps = max(1, int(math.ceil(abs(t) / DEFAULT_DT)))
    dt = t / steps
    Q, LAM = psi.grid.mesh()
    force_term = H.dV(Q) * LAM
    half = np.exp(-0.5j * dt * force_term)
    full = half * half
    values = psi.values * half
    for i in range(steps):
        values = _kinetic(values, src, dt, H.mass)
        values = values * (full if i < steps - 1 else half)
    return psi.with_values(values)


def mixed_derivative(psi: KvnWaveFunction) -> np.ndarray:
    """Spectral d/dq d/dlam of a (q, lambda_p) wave function."""
    src = psi.source_grid
    psi_p = _inverse(psi.values, src) * (1j * src.p[None, :])
    kq = _q_wavenumbers(src)[:, None]
    psi_p = fft.ifft(1j * kq * fft.fft(psi_p, axis=0), axis=0)
    return _forward(psi_p, src)


def probability_current(psi: KvnWaveFunction) -> np.ndarray:
    """J with d(rho)/dt = -J along :func:`propagate_lambda` trajectories.

    J = 2 Im(psi* d/dq d/dlam psi); the potential term drops out because
    it only multiplies psi by a real factor times i.
    """
    if psi.representation is not Representation.Q_LAMBDA_P:
        raise PreconditionError("probability_current expects a (q, lambda_p) wave function")
    return 2.0 * np.imag(np.conj(psi.values) * mixed_derivative(psi))


def field_mode_lambda(components: Sequence[KvnWaveFunction], t, steps: Optional[int] = None):
    """Evolve a single field mode in the (B, lambda_E) representation.

    For one spatial point the three Cartesian components decouple; each is a
    unit oscillator with B as coordinate and E as momentum, so its wave
    function follows :func:`propagate_lambda` with V = B^2 / 2.
    """
    if len(components) != 3:
        raise PreconditionError("a field mode has exactly three components")
    H = HamiltonianSpec.harmonic(1.0, 1.0)
    return [propagate_lambda(c, H, t, steps) for c in components]
