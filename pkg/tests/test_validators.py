import numpy as np
import pytest

from conftest import BARRIER, SPOT, V0, ref_model
from oracles import heston_put_gil_pelaez
from hestonbarrier.model import BarrierContract, MarketState, flat_barrier
from hestonbarrier.pricer import PriceTable
from hestonbarrier.validators import (
    FdGrid, HestonParams, cross_validate, fd_price, fd_solve, fd_vanilla_put, fft_vanilla_put, heston_cf,
    spot_grid,
)

P = HestonParams(0.9, 0.1, 0.3, -0.7, 0.5, 0.02, 0.01)


@pytest.mark.parametrize("K, T", [(45.0, 0.25), (60.0, 1.0), (80.0, 0.6272709144462391), (90.0, 2.0)])
def test_fft_matches_gil_pelaez(K, T):
    ref = heston_put_gil_pelaez(0.9, 0.1, 0.3, -0.7, 0.5, 0.02, 0.01, SPOT, K, T)
    assert fft_vanilla_put(P, SPOT, K, T) == pytest.approx(ref, rel=1e-6, abs=1e-6)


def test_characteristic_function_basics():
    assert heston_cf(0.0, P, 1.0) == pytest.approx(1.0)
    # martingale: E[S_T/S_0] = e^{(r - q) T}
    assert heston_cf(-1j, P, 1.0) == pytest.approx(np.exp(0.01), rel=1e-12)


def test_fd_vanilla_close_to_fft():
    m = ref_model(1.0, constant=True)
    fd = fd_vanilla_put(m, MarketState(SPOT, V0), 70.0, 1.0)
    assert fd == pytest.approx(fft_vanilla_put(P, SPOT, 70.0, 1.0), rel=2e-3)


def test_fd_barrier_column_is_zero_and_history():
    T = 0.1
    c = BarrierContract(70.0, T, flat_barrier(BARRIER))
    sol = fd_solve(ref_model(T), c, MarketState(SPOT, V0), grid=FdGrid(dt=0.02), keep_history=True)
    assert sol.s[0] == pytest.approx(BARRIER)
    for U in sol.history.values():
        assert np.all(U[0] == 0.0)
    assert len(sol.history) == 6


def test_fd_barrier_below_vanilla():
    T = 0.25
    m = ref_model(T)
    mk = MarketState(SPOT, V0)
    out = fd_price(m, BarrierContract(70.0, T, flat_barrier(BARRIER)), mk)
    van = fd_vanilla_put(m, mk, 70.0, T)
    assert 0.0 < out < van


def test_spot_grid_concentrates_at_spot():
    s = spot_grid(40.0, 480.0, 60.0, 76)
    assert s[0] == 40.0 and s[-1] == pytest.approx(480.0)
    assert np.sum(np.abs(s - 60.0) <= 6.0) >= 10


def test_cross_validate_tables_and_arrays():
    g, f = PriceTable(), PriceTable()
    g.add(80, 1.0, 3.3, "git", 0)
    g.add(90, 1.0, 5.0, "git", 0)
    f.add(90, 1.0, 5.5, "fd", 0)
    f.add(80, 1.0, 3.0, "fd", 0)
    err, summary = cross_validate(g, f)
    assert np.allclose(err, [10.0, -100 * 0.5 / 5.5])
    assert summary["max_abs"] == pytest.approx(10.0)
    with pytest.raises(ValueError):
        cross_validate([1.0, 2.0], [1.0])
