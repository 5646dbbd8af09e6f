import numpy as np
import pytest

from oracles import bessel_i_series, kummer_mp
from hestonbarrier.errors import NumericalOverflow, SeriesDivergence
from hestonbarrier.specfun import (
    bessel_i, bessel_i_reduced, gamma_fn, kummer_m, kummer_m_approx, kummer_m_series, log_bessel_i_reduced,
)


@pytest.mark.parametrize("nu", [0.5, 1.0, 2.5])
@pytest.mark.parametrize("z", [0.3, 2.0 + 1.0j, -1.5 + 4.0j, 12.0 - 3.0j])
def test_bessel_matches_series(nu, z):
    assert bessel_i(nu, z) == pytest.approx(bessel_i_series(nu, z), rel=1e-12)


def test_bessel_overflow_guard():
    with pytest.raises(NumericalOverflow):
        bessel_i(1.0, 800.0)


@pytest.mark.parametrize("w", [0.0, 1.0 + 2.0j, 25.0 - 10.0j, 80.0 + 5.0j, -90.0 + 1.0j])
def test_reduced_bessel_is_even_and_consistent(w):
    nu = 1.5
    assert log_bessel_i_reduced(nu, w) == pytest.approx(log_bessel_i_reduced(nu, -w), rel=1e-12, abs=1e-12)
    if abs(w) < 30 and w != 0:
        ref = bessel_i_series(nu, w) / (0.5 * w) ** nu
        assert bessel_i_reduced(nu, w) == pytest.approx(ref, rel=1e-12)


def test_gamma_domain():
    assert gamma_fn(5.0) == pytest.approx(24.0)
    with pytest.raises(ValueError):
        gamma_fn(0.0)


@pytest.mark.parametrize("b", [0.5, 1.5, 3.0])
@pytest.mark.parametrize("x", [0.2, -3.0 + 2.0j, 10.0 - 7.0j])
def test_kummer_approx_is_exact_special_case(b, x):
    assert kummer_m_approx(b, x) == pytest.approx(kummer_mp(b + 1.5, b + 0.5, x), rel=1e-12)


@pytest.mark.parametrize("a, b, z", [
    (0.7, 2.0, 3.0), (-2.3, 2.0, -20.0 + 5.0j), (5.5, 2.5, 40.0 - 10.0j), (1.2, 1.5, -45.0), (3.0, 2.0, 0.0),
])
def test_kummer_series_reference(a, b, z):
    assert kummer_m_series(a, b, z) == pytest.approx(kummer_mp(a, b, z), rel=1e-12)


def test_kummer_series_range():
    with pytest.raises(SeriesDivergence):
        kummer_m_series(1.0, 2.0, 60.0)


@pytest.mark.parametrize("a, b, z", [
    (0.7, 2.0, 3.0), (-2.3, 2.0, -20.0 + 5.0j), (5.5, 2.5, 40.0 - 10.0j), (-1.0, 2.5, -300.0 + 80.0j),
    (2.0, 2.5, 150.0j), (-4.0, 2.0, -100.0 - 20.0j), (3.3, 1.5, 90.0 + 1.0j),
])
def test_vectorised_kummer(a, b, z):
    assert kummer_m(a, b, z) == pytest.approx(kummer_mp(a, b, z), rel=1e-9)


def test_vectorised_kummer_broadcasts_a():
    z = np.array([1.0, -30.0 + 4.0j, 70.0j])
    a = np.array([0.5, -1.5, 2.0])
    out = kummer_m(a, 2.0, z)
    assert out.shape == (3,)
    for ai, zi, oi in zip(a, z, out):
        assert oi == pytest.approx(kummer_mp(ai, 2.0, zi), rel=1e-9)
