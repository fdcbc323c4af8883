"""Phase-space grids, KvN wave functions and the quadratures built on them.

All integrals are plain Riemann sums on uniform grids.  A periodic axis is
sampled at ``min + i*d`` (the endpoint is the wrap of the first sample); a
bounded axis is sampled at cell midpoints ``min + (i + 1/2)*d``.  Either way
``d = (max - min) / n``.
"""
from __future__ import annotations

import enum
import numbers
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (ConfigurationError, DegenerateStateError,
                     GridMismatchError, NumericDomainError)
from . import tables

PHASE_MASK_RATIO = 1e-12
MIN_POINTS = 4


class Representation(enum.Enum):
    QP = "qp"
    Q_LAMBDA_P = "q_lambda_p"


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Uniform tensor-product grid over (q, p).

    The second axis doubles as the lambda_p axis for wave functions in the
    mixed (q, lambda_p) representation.
    """

    q_min: float
    q_max: float
    n_q: int
    p_min: float
    p_max: float
    n_p: int
    periodic_q: bool = False
    periodic_p: bool = False

    def __post_init__(self):
        for name in ("q_min", "q_max", "p_min", "p_max"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite", field=name)
        if not self.q_max > self.q_min:
            raise ConfigurationError("q bounds inverted: need q_max > q_min", field="q_max")
        if not self.p_max > self.p_min:
            raise ConfigurationError("p bounds inverted: need p_max > p_min", field="p_max")
        for name in ("n_q", "n_p"):
            n = getattr(self, name)
            if not isinstance(n, numbers.Integral) or n < MIN_POINTS:
                raise ConfigurationError(f"{name} >= {MIN_POINTS} required, got {n!r}", field=name)

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.n_q

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def cell_area(self) -> float:
        return self.dq * self.dp

    @property
    def area(self) -> float:
        return (self.q_max - self.q_min) * (self.p_max - self.p_min)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_q, self.n_p)

    @property
    def q(self) -> np.ndarray:
        return _samples(self.q_min, self.dq, self.n_q, self.periodic_q)

    @property
    def p(self) -> np.ndarray:
        return _samples(self.p_min, self.dp, self.n_p, self.periodic_p)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays ``(Q, P)`` of shape ``(n_q, n_p)``, q varying along axis 0."""
        return np.meshgrid(self.q, self.p, indexing="ij")

    def contains(self, q, p) -> np.ndarray:
        """Mask of points lying inside the bounded part of the domain.

        A periodic axis never excludes a point.
        """
        q = np.asarray(q)
        p = np.asarray(p)
        inside = np.ones(np.broadcast(q, p).shape, dtype=bool)
        if not self.periodic_q:
            inside &= (q >= self.q_min) & (q <= self.q_max)
        if not self.periodic_p:
            inside &= (p >= self.p_min) & (p <= self.p_max)
        return inside


def _samples(lo, d, n, periodic):
    offset = 0.0 if periodic else 0.5
    return lo + (np.arange(n) + offset) * d


def make_grid(q_min, q_max, n_q, p_min, p_max, n_p,
              periodic: Union[bool, Tuple[bool, bool]] = False) -> PhaseSpaceGrid:
    """Build a validated :class:`PhaseSpaceGrid`.

    ``periodic`` is either one flag for both axes or a ``(q, p)`` pair.
    """
    if isinstance(periodic, (tuple, list)):
        periodic_q, periodic_p = (bool(f) for f in periodic)
    else:
        periodic_q = periodic_p = bool(periodic)
    return PhaseSpaceGrid(float(q_min), float(q_max), n_q,
                          float(p_min), float(p_max), n_p, periodic_q, periodic_p)


@dataclass(frozen=True, eq=False)
class KvnWaveFunction:
    """Complex amplitude sampled on a phase-space grid.

    ``source_grid`` is only set for the (q, lambda_p) representation and
    records the (q, p) grid the state was transformed from, so the inverse
    transform can land back on the same samples.
    """

    grid: PhaseSpaceGrid
    values: np.ndarray
    representation: Representation = Representation.QP
    source_grid: Optional[PhaseSpaceGrid] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            raise GridMismatchError(
                f"values have shape {values.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericDomainError("wave function contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def with_values(self, values) -> "KvnWaveFunction":
        return KvnWaveFunction(self.grid, values, self.representation, self.source_grid)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_area))


def from_function(grid: PhaseSpaceGrid, fn: Callable, normalized: bool = True) -> KvnWaveFunction:
    """Sample ``fn(Q, P)`` on ``grid``; normalize unless told otherwise."""
    Q, P = grid.mesh()
    psi = KvnWaveFunction(grid, fn(Q, P))
    return normalize(psi) if normalized else psi


def gaussian(grid: PhaseSpaceGrid, q0=0.0, p0=0.0, sigma_q=1.0, sigma_p=1.0) -> KvnWaveFunction:
    """Normalized real Gaussian whose density has standard deviations ``sigma_q``, ``sigma_p``."""
    return from_function(grid, lambda Q, P: np.exp(
        -(Q - q0) ** 2 / (4 * sigma_q ** 2) - (P - p0) ** 2 / (4 * sigma_p ** 2)))


def _check_same(phi: KvnWaveFunction, psi: KvnWaveFunction):
    if phi.grid != psi.grid or phi.representation != psi.representation:
        raise GridMismatchError("wave functions live on different grids or representations")


def normalize(psi: KvnWaveFunction) -> KvnWaveFunction:
    n = psi.norm()
    if n == 0.0:
        raise DegenerateStateError("cannot normalize the zero wave function")
    return psi.with_values(psi.values / n)


def inner_product(phi: KvnWaveFunction, psi: KvnWaveFunction) -> complex:
    """<phi|psi>, antilinear in the first slot."""
    _check_same(phi, psi)
    return complex(np.sum(np.conj(phi.values) * psi.values) * phi.grid.cell_area)


def density(psi: KvnWaveFunction) -> np.ndarray:
    return np.abs(psi.values) ** 2


def integrate(values: np.ndarray, grid: PhaseSpaceGrid) -> float:
    return float(np.sum(values) * grid.cell_area)


class Observable:
    """Real function of (q, p).

    Polynomials are held as ``{(i, j): coeff}`` for ``coeff * q**i * p**j`` and
    support ``+``, ``*`` and partial derivatives.  An arbitrary callable can be
    wrapped with :meth:`from_callable`; such observables cannot be
    differentiated.
    """

    def __init__(self, terms: Optional[Mapping[Tuple[int, int], float]] = None,
                 fn: Optional[Callable] = None, label: str = ""):
        self.terms = {k: float(v) for k, v in (terms or {}).items() if v != 0}
        self.fn = fn
        self.label = label

    @classmethod
    def q(cls):
        return cls({(1, 0): 1.0}, label="q")

    @classmethod
    def p(cls):
        return cls({(0, 1): 1.0}, label="p")

    @classmethod
    def constant(cls, c=1.0):
        return cls({(0, 0): c}, label=repr(c))

    @classmethod
    def monomial(cls, i, j, c=1.0):
        return cls({(i, j): c})

    @classmethod
    def from_callable(cls, fn, label="f"):
        return cls(fn=fn, label=label)

    @property
    def is_polynomial(self):
        return self.fn is None

    def _coerce(self, other):
        if isinstance(other, Observable):
            return other
        if isinstance(other, numbers.Real):
            return Observable.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_polynomial and other.is_polynomial:
            out = dict(self.terms)
            for k, v in other.terms.items():
                out[k] = out.get(k, 0.0) + v
            return Observable(out)
        return Observable(fn=lambda Q, P: self(Q, P) + other(Q, P))

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_polynomial and other.is_polynomial:
            out = {}
            for (i1, j1), a in self.terms.items():
                for (i2, j2), b in other.terms.items():
                    key = (i1 + i2, j1 + j2)
                    out[key] = out.get(key, 0.0) + a * b
            return Observable(out)
        return Observable(fn=lambda Q, P: self(Q, P) * other(Q, P))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Observable.constant(1.0)
        for _ in range(k):
            out = out * self
        return out

    def d_dq(self):
        self._require_polynomial()
        return Observable({(i - 1, j): c * i for (i, j), c in self.terms.items() if i > 0})

    def d_dp(self):
        self._require_polynomial()
        return Observable({(i, j - 1): c * j for (i, j), c in self.terms.items() if j > 0})

    def _require_polynomial(self):
        if not self.is_polynomial:
            raise TypeError("only polynomial observables can be differentiated")

    def __call__(self, Q, P):
        if self.fn is not None:
            return np.asarray(self.fn(Q, P), dtype=float)
        Q = np.asarray(Q, dtype=float)
        P = np.asarray(P, dtype=float)
        out = np.zeros(np.broadcast(Q, P).shape)
        for (i, j), c in self.terms.items():
            out = out + c * Q ** i * P ** j
        return out

    def __repr__(self):
        if self.fn is not None:
            return f"Observable({self.label or 'callable'})"
        body = " + ".join(f"{c:g}*q^{i}*p^{j}" for (i, j), c in sorted(self.terms.items()))
        return f"Observable({body or '0'})"


def expectation(psi: KvnWaveFunction, f: Union[Observable, Callable]) -> float:
    """Integral of ``f * |psi|^2`` over the grid; ``psi`` is assumed normalized."""
    Q, P = psi.grid.mesh()
    values = f(Q, P)
    if not np.all(np.isfinite(values)):
        raise NumericDomainError("observable is not finite on the grid")
    return integrate(values * density(psi), psi.grid)


def amplitude_phase_split(psi: KvnWaveFunction) -> Tuple[np.ndarray, np.ma.MaskedArray]:
    """Return ``(sqrt(rho), S)`` with ``psi = sqrt(rho) * exp(iS)``.

    ``S`` lies in (-pi, pi] and is masked wherever rho is below
    ``1e-12 * max(rho)``.
    """
    rho = density(psi)
    amp = np.sqrt(rho)
    phase = np.angle(psi.values)
    phase = np.where(phase <= -np.pi, phase + 2 * np.pi, phase)
    undefined = rho < PHASE_MASK_RATIO * rho.max() if rho.max() > 0 else np.ones_like(rho, bool)
    return amp, np.ma.MaskedArray(phase, mask=undefined)


def write_csv(path, psi: KvnWaveFunction):
    """Snapshot as ``q,p,re,im`` (or ``q,lambda_p,re,im``), row-major over q then p."""
    second = "p" if psi.representation is Representation.QP else "lambda_p"
    Q, P = psi.grid.mesh()
    tables.write_csv(path, ["q", second, "re", "im"],
                     [Q.ravel(), P.ravel(), psi.values.real.ravel(), psi.values.imag.ravel()])


def read_csv(path, grid: PhaseSpaceGrid) -> KvnWaveFunction:
    header, cols = tables.read_csv(path)
    rep = Representation.QP if header[1] == "p" else Representation.Q_LAMBDA_P
    values = (cols[2] + 1j * cols[3]).reshape(grid.shape)
    return KvnWaveFunction(grid, values, rep)
