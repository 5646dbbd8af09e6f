import numpy as np
import pytest

from conftest import ref_model
from hestonbarrier.errors import ConfigError, UnsupportedBranch
from hestonbarrier.model import (
    BarrierContract, CoefficientCurve, HestonModel, MarketState, as_curve, build_model, flat_barrier, log_barrier,
)


def test_kappa_keeps_bessel_ratio_on_every_segment():
    m = ref_model(1.0)
    for t in np.linspace(0.0, 0.99, 17):
        kappa, theta, sigma, *_ = m.coeffs(t)
        assert kappa * theta / sigma**2 == pytest.approx(1.0, rel=1e-14)


def test_constant_model_has_kappa_09():
    m = ref_model(1.0, constant=True)
    assert m.is_constant()
    assert m.coeffs(0.3)[0] == pytest.approx(0.9)


def test_curve_is_right_continuous():
    c = CoefficientCurve((0.0, 0.5), (1.0, 2.0))
    assert c(0.4999) == 1.0 and c(0.5) == 2.0 and c(7.0) == 2.0
    assert np.array_equal(c(np.array([0.0, 0.5])), [1.0, 2.0])


@pytest.mark.parametrize("bps, vals", [((0.5,), (1.0,)), ((0.0, 0.0), (1.0, 2.0)), ((0.0,), (1.0, 2.0))])
def test_bad_curves_rejected(bps, vals):
    with pytest.raises(ConfigError):
        CoefficientCurve(bps, vals)


def test_branch_below_one_rejected():
    with pytest.raises(UnsupportedBranch):
        build_model(0.5, 0.1, 0.3, -0.7)
    C = CoefficientCurve.constant
    with pytest.raises(UnsupportedBranch):
        HestonModel(0.9, C(0.3), C(0.1), C(0.0), C(0.0), C(0.0))


def test_breakpoints_union_and_frozen():
    m = ref_model(2.0, segments=4)
    assert np.allclose(m.breakpoints(), [0.0, 0.5, 1.0, 1.5])
    f = m.frozen_at(0.75)
    assert f.is_constant()
    assert f.coeffs(0.0) == pytest.approx(m.coeffs(0.75))


def test_contract_validation():
    L = flat_barrier(40.0)
    with pytest.raises(ConfigError):
        BarrierContract(35.0, 1.0, L)  # barrier above strike
    with pytest.raises(ConfigError):
        BarrierContract(60.0, 0.0, L)
    with pytest.raises(ConfigError):
        MarketState(60.0, 0.0)
    c = BarrierContract(80.0, 1.0, L)
    assert log_barrier(c, 0.3) == pytest.approx(np.log(0.5))


def test_as_curve_inputs():
    assert as_curve(3.0)(1.0) == 3.0
    assert as_curve({"breakpoints": [0, 1], "values": [1, 2]})(1.5) == 2.0
    with pytest.raises(ConfigError):
        as_curve([1, 2])
