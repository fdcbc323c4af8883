import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kvnlab import errors
from kvnlab.phase_space import (Observable, Representation, KvnWaveFunction, amplitude_phase_split,
                                density, expectation, from_function, gaussian, inner_product,
                                integrate, make_grid, normalize, read_csv, write_csv)


def test_make_grid_examples():
    g = make_grid(-5, 5, 128, -5, 5, 128)
    assert g.shape == (128, 128)
    assert math.isclose(g.cell_area, (10 / 128) ** 2)
    # bounded axes sample cell midpoints
    assert math.isclose(g.q[0], -5 + 5 / 128)
    assert math.isclose(g.q[-1], 5 - 5 / 128)
    gp = make_grid(0, 2 * math.pi, 64, -1, 1, 16, periodic=(True, False))
    assert gp.periodic_q and not gp.periodic_p
    assert gp.q[0] == 0.0
    assert math.isclose(gp.q[-1], 2 * math.pi - 2 * math.pi / 64)


@pytest.mark.parametrize("args, field", [
    ((5, -5, 128, -5, 5, 128), "q_max"),
    ((-5, 5, 128, 5, 5, 128), "p_max"),
    ((-5, 5, 3, -5, 5, 128), "n_q"),
    ((-5, 5, 128, -5, 5, 2), "n_p"),
    ((-5, float("inf"), 128, -5, 5, 128), "q_max"),
])
def test_make_grid_rejects(args, field):
    with pytest.raises(errors.ConfigurationError) as info:
        make_grid(*args)
    assert info.value.field == field


def test_inverted_bounds_message():
    with pytest.raises(errors.ConfigurationError, match="q bounds inverted"):
        make_grid(5, -5, 128, -5, 5, 128)


def test_values_shape_checked():
    g = make_grid(-1, 1, 8, -1, 1, 8)
    with pytest.raises(errors.GridMismatchError):
        KvnWaveFunction(g, np.ones((8, 9)))
    with pytest.raises(errors.NumericDomainError):
        KvnWaveFunction(g, np.full((8, 8), np.nan))


def test_normalize_constant():
    g = make_grid(-2, 2, 16, -3, 3, 24)
    psi = normalize(KvnWaveFunction(g, np.ones(g.shape)))
    assert np.allclose(psi.values, 1 / math.sqrt(g.area))
    assert math.isclose(psi.norm(), 1.0, abs_tol=1e-14)


def test_gaussian_norm_matches_quadrature():
    # integral of exp(-2 q^2 - 2 p^2) over the plane is pi/2
    g = make_grid(-6, 6, 128, -6, 6, 128)
    raw = from_function(g, lambda Q, P: np.exp(-Q ** 2 - P ** 2), normalized=False)
    assert math.isclose(raw.norm() ** 2, math.pi / 2, rel_tol=1e-12)


def test_normalize_zero_fails():
    g = make_grid(-1, 1, 8, -1, 1, 8)
    with pytest.raises(errors.DegenerateStateError):
        normalize(KvnWaveFunction(g, np.zeros(g.shape)))


def test_inner_product_offset_gaussians():
    # unit-variance density Gaussians offset by d in q overlap as exp(-d^2/8)
    g = make_grid(-10, 10, 200, -6, 6, 60)
    d = 1.5
    a = gaussian(g, 0.0, 0.0, 1.0, 1.0)
    b = gaussian(g, d, 0.0, 1.0, 1.0)
    assert math.isclose(inner_product(a, b).real, math.exp(-d * d / 8), rel_tol=1e-10)


def test_inner_product_grid_mismatch():
    a = gaussian(make_grid(-5, 5, 32, -5, 5, 32))
    b = gaussian(make_grid(-5, 5, 32, -5, 5, 16))
    with pytest.raises(errors.GridMismatchError):
        inner_product(a, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_inner_product_properties(seed):
    rng = np.random.default_rng(seed)
    g = make_grid(-1, 1, 6, -2, 2, 5)
    z = lambda: KvnWaveFunction(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
    a, b, c = z(), z(), z()
    alpha = complex(*rng.normal(size=2))
    assert np.isclose(inner_product(a, b), np.conj(inner_product(b, a)))
    lin = inner_product(a, b.with_values(alpha * b.values + c.values))
    assert np.isclose(lin, alpha * inner_product(a, b) + inner_product(a, c))
    assert inner_product(a, a).real > 0
    assert abs(inner_product(a, a).imag) < 1e-14
    assert math.isclose(inner_product(a, a).real, a.norm() ** 2, rel_tol=1e-12)


def test_density_and_integrate():
    g = make_grid(-6, 6, 96, -6, 6, 96)
    psi = gaussian(g, 0.5, -1.0, 0.8, 0.6)
    assert math.isclose(integrate(density(psi), g), 1.0, rel_tol=1e-12)
    assert np.all(density(psi) >= 0)


def test_gaussian_moments():
    g = make_grid(-8, 8, 160, -8, 8, 160)
    sq, sp = 0.9, 0.6
    psi = gaussian(g, 0.4, -0.3, sq, sp)
    q, p = Observable.q(), Observable.p()
    assert math.isclose(expectation(psi, q), 0.4, abs_tol=1e-12)
    assert math.isclose(expectation(psi, p), -0.3, abs_tol=1e-12)
    assert math.isclose(expectation(psi, (q - 0.4) ** 2), sq ** 2, rel_tol=1e-10)
    assert math.isclose(expectation(psi, (p + 0.3) ** 2), sp ** 2, rel_tol=1e-10)


def test_expectation_rejects_nonfinite():
    g = make_grid(-1, 1, 8, -1, 1, 8)
    psi = gaussian(g)
    with pytest.raises(errors.NumericDomainError):
        expectation(psi, Observable.from_callable(lambda Q, P: np.where(Q > 0, np.inf, 0.0)))


def test_observable_algebra():
    q, p = Observable.q(), Observable.p()
    f = 3 * q * q * p + p - 2
    Q, P = np.array([1.5, -0.5]), np.array([2.0, 0.25])
    assert np.allclose(f(Q, P), 3 * Q * Q * P + P - 2)
    assert np.allclose(f.d_dq()(Q, P), 6 * Q * P)
    assert np.allclose(f.d_dp()(Q, P), 3 * Q * Q + 1)
    with pytest.raises(TypeError):
        Observable.from_callable(np.sin).d_dq()


def test_amplitude_phase_split_examples():
    g = make_grid(-3, 3, 24, -3, 3, 24)
    real = gaussian(g)
    amp, S = amplitude_phase_split(real)
    assert np.allclose(S.filled(0.0), 0.0)
    assert np.allclose(amp ** 2, density(real))

    amp, S = amplitude_phase_split(real.with_values(1j * real.values))
    assert np.allclose(S.compressed(), math.pi / 2)

    Q, P = g.mesh()
    psi = real.with_values(real.values * np.exp(1j * Q * P))
    amp, S = amplitude_phase_split(psi)
    wrapped = np.angle(np.exp(1j * Q * P))
    assert np.allclose(S.filled(0.0), np.ma.MaskedArray(wrapped, S.mask).filled(0.0))
    assert np.all(S.compressed() > -math.pi) and np.all(S.compressed() <= math.pi)


def test_amplitude_phase_split_masks_zeros():
    g = make_grid(-1, 1, 4, -1, 1, 4)
    values = np.zeros(g.shape, complex)
    values[1, 2] = 2.0
    amp, S = amplitude_phase_split(KvnWaveFunction(g, values))
    assert S.count() == 1
    assert amp[1, 2] == 2.0


def test_csv_round_trip(tmp_path):
    g = make_grid(-3, 3, 12, -2, 2, 10)
    Q, P = g.mesh()
    psi = gaussian(g, 0.3, 0.1).with_values(gaussian(g, 0.3, 0.1).values * np.exp(1j * Q))
    path = tmp_path / "psi.csv"
    write_csv(path, psi)
    text = path.read_bytes()
    assert text.startswith(b"q,p,re,im\n")
    assert b"\r" not in text
    back = read_csv(path, g)
    assert back.representation is Representation.QP
    assert np.array_equal(back.values, psi.values)
