"""Polarization x path states of one classical light beam.

The basis order is (H a, H b, V a, V b): polarization is the first tensor
factor, path the second.  An analyzer at angle theta measures
``cos(2 theta) Z + sin(2 theta) X`` on its factor, which is +1 on the mode
``(cos theta, sin theta)`` and -1 on the orthogonal one.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .errors import ConfigurationError, PreconditionError
from . import tables

NORM_TOLERANCE = 1e-12
TSIRELSON = 2 * math.sqrt(2)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}

# rows and columns of the Mermin-Peres square; labels are (polarization, path)
MERMIN_PERES = (("XI", "IX", "XX"),
                ("IZ", "ZI", "ZZ"),
                ("XZ", "ZX", "YY"))
# sign of the product of each column (rows are all +1)
COLUMN_SIGNS = (1, 1, -1)


@dataclass(frozen=True, eq=False)
class BeamState:
    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=np.complex128).ravel()
        if c.shape != (4,):
            raise ConfigurationError(f"beam state needs 4 amplitudes, got {c.size}")
        norm2 = float(np.sum(np.abs(c) ** 2))
        if abs(norm2 - 1) > NORM_TOLERANCE:
            raise PreconditionError(f"beam state is not normalized (sum |c|^2 = {norm2:.15g})")
        c.flags.writeable = False
        object.__setattr__(self, "c", c)

    @classmethod
    def normalized(cls, c):
        c = np.asarray(c, dtype=np.complex128)
        n = np.linalg.norm(c)
        if n == 0:
            raise PreconditionError("zero beam state cannot be normalized")
        return cls(c / n)

    @classmethod
    def product(cls, pol, path):
        """Separable state pol (x) path from two 2-vectors."""
        return cls.normalized(np.kron(np.asarray(pol, complex), np.asarray(path, complex)))

    @classmethod
    def schmidt(cls, l1: float, l2: float):
        """l1 H(x)a + l2 V(x)b (renormalized)."""
        return cls.normalized([l1, 0, 0, l2])

    @classmethod
    def bell(cls):
        return cls.schmidt(1.0, 1.0)

    def matrix(self) -> np.ndarray:
        """2x2 coefficients M[pol, path]."""
        return self.c.reshape(2, 2)


@dataclass(frozen=True)
class AnalyzerSetting:
    theta_pol: float
    theta_path: float

    def __post_init__(self):
        for name in ("theta_pol", "theta_path"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ConfigurationError(f"{name} must be finite", field=name)
            object.__setattr__(self, name, v)

    def canonical(self) -> "AnalyzerSetting":
        """Same measurement with both angles reduced to [0, pi)."""
        return AnalyzerSetting(self.theta_pol % math.pi, self.theta_path % math.pi)


@dataclass(frozen=True)
class SchmidtDecomposition:
    l1: float
    l2: float
    pol_modes: np.ndarray
    path_modes: np.ndarray

    @property
    def concurrence(self) -> float:
        return 2 * self.l1 * self.l2


def schmidt_decompose(psi: BeamState) -> SchmidtDecomposition:
    """psi = l1 u1 (x) v1 + l2 u2 (x) v2 with l1 >= l2 >= 0 from the SVD of M."""
    U, s, Vh = np.linalg.svd(psi.matrix())
    return SchmidtDecomposition(float(s[0]), float(s[1]), U.T.copy(), Vh.copy())


def analyzer(theta) -> np.ndarray:
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    return c * Z + s * X


def expectation(psi: BeamState, op: np.ndarray) -> float:
    return float(np.real(np.vdot(psi.c, op @ psi.c)))


def correlation(psi: BeamState, s: AnalyzerSetting) -> float:
    """E = sum over outcomes of (+-)(+-) times the projected intensity."""
    return expectation(psi, np.kron(analyzer(s.theta_pol), analyzer(s.theta_path)))


def _correlation_table(psi: BeamState, angles_pol, angles_path) -> np.ndarray:
    """E[i, j] for every pair of analyzer angles, vectorized."""
    M = psi.matrix()
    ops_a = np.stack([analyzer(t) for t in angles_pol])
    ops_b = np.stack([analyzer(t) for t in angles_path])
    # <psi| A (x) B |psi> = tr(M^dagger A M B^T)
    AM = np.einsum("iab,bc->iac", ops_a, M)
    return np.real(np.einsum("ad,iac,jdc->ij", M.conj(), AM, ops_b))


def chsh(psi: BeamState, a, a_prime, b, b_prime) -> float:
    """S = E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
    E = lambda x, y: correlation(psi, AnalyzerSetting(x, y))
    S = E(a, b) - E(a, b_prime) + E(a_prime, b) + E(a_prime, b_prime)
    if abs(S) > TSIRELSON + 1e-9:
        raise ArithmeticError(f"|S| = {abs(S)} exceeds the Tsirelson bound")
    return S


def _scan_one(psi: BeamState, n: int):
    angles = np.arange(n) * math.pi / n
    E = _correlation_table(psi, angles, angles)
    best = (-1.0, None)
    for sign in (1.0, -1.0):
        F = sign * E
        plus = F[:, None, :] + F[None, :, :]      # [a, a', b]
        minus = F[None, :, :] - F[:, None, :]     # [a, a', b']
        ib, ibp = plus.argmax(axis=2), minus.argmax(axis=2)
        total = plus.max(axis=2) + minus.max(axis=2)
        ia, iap = np.unravel_index(np.argmax(total), total.shape)
        if total[ia, iap] > best[0]:
            best = (float(total[ia, iap]),
                    tuple(float(angles[i]) for i in (ia, iap, ib[ia, iap], ibp[ia, iap])))
    return best


def chsh_max_scan(psi: BeamState, grid_n: int) -> Tuple[float, Tuple[float, float, float, float]]:
    """Largest |S| over analyzer angles k pi / m for every resolution m <= grid_n.

    All four angles of a quadruple share the resolution m.  Taking the union
    over m makes the result non-decreasing in ``grid_n``.
    """
    if int(grid_n) != grid_n or grid_n < 8:
        raise ConfigurationError("grid_n must be an integer >= 8", field="grid_n")
    best = (-1.0, None)
    for m in range(1, int(grid_n) + 1):
        cand = _scan_one(psi, m)
        if cand[0] > best[0]:
            best = cand
    return best


def chsh_max_closed_form(psi: BeamState) -> float:
    """2 sqrt(1 + C^2): the optimum with analyzers in the X-Z plane for real Schmidt-diagonal states."""
    C = schmidt_decompose(psi).concurrence
    return 2 * math.sqrt(1 + C * C)


def pauli_product(label: str) -> np.ndarray:
    return np.kron(PAULI[label[0]], PAULI[label[1]])


@dataclass(frozen=True)
class MerminPeresReport:
    expectations: np.ndarray       # 3x3, <A_ij>
    row_products: Tuple[int, ...]  # each row multiplies to sign * identity
    column_products: Tuple[int, ...]
    witness: float                 # sum of row products + c1 + c2 - c3
    noncontextual_bound: int
    quantum_value: int


def _product_sign(ops) -> int:
    P = ops[0] @ ops[1] @ ops[2]
    for sign in (1, -1):
        if np.array_equal(P, sign * np.eye(4)):
            return sign
    raise ArithmeticError("Mermin-Peres product is not +-identity")


def _commute(ops) -> bool:
    return all(np.array_equal(A @ B, B @ A) for A, B in itertools.combinations(ops, 2))


def noncontextual_bound() -> int:
    """Best value of the witness over all 2^9 assignments of +-1 to the nine observables."""
    best = -10
    for bits in itertools.product((1, -1), repeat=9):
        v = np.array(bits).reshape(3, 3)
        value = v.prod(axis=1).sum() + sum(s * v[:, j].prod() for j, s in enumerate(COLUMN_SIGNS))
        best = max(best, int(value))
    return best


def mermin_peres_witness(psi: BeamState) -> MerminPeresReport:
    ops = [[pauli_product(lbl) for lbl in row] for row in MERMIN_PERES]
    cols = [[ops[i][j] for i in range(3)] for j in range(3)]
    for group in ops + cols:
        if not _commute(group):
            raise ArithmeticError("Mermin-Peres context contains non-commuting observables")
    rows = tuple(_product_sign(r) for r in ops)
    columns = tuple(_product_sign(c) for c in cols)
    expect = np.array([[expectation(psi, A) for A in row] for row in ops])
    witness = sum(expectation(psi, r[0] @ r[1] @ r[2]) for r in ops)
    witness += sum(s * expectation(psi, c[0] @ c[1] @ c[2]) for s, c in zip(COLUMN_SIGNS, cols))
    return MerminPeresReport(expect, rows, columns, float(witness), noncontextual_bound(), 6)


CHSH_HEADER = ["a", "a_prime", "b", "b_prime", "S"]


def write_chsh_csv(path, rows: List[Tuple[float, float, float, float, float]]):
    tables.write_rows(path, CHSH_HEADER, rows)


def write_witness_csv(path, report: MerminPeresReport):
    rows = [(f"E_{MERMIN_PERES[i][j]}", report.expectations[i, j]) for i in range(3) for j in range(3)]
    rows += [("witness", report.witness), ("noncontextual_bound", report.noncontextual_bound),
             ("quantum_value", report.quantum_value)]
    tables.write_rows(path, ["name", "value"], rows)
