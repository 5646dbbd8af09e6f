import math
import warnings

import numpy as np
import pytest

from conftest import BARRIER, SPOT, V0, ref_model
from hestonbarrier.errors import ConfigError, PricingError
from hestonbarrier.model import BarrierContract, MarketState, OptionKind, flat_barrier
from hestonbarrier.pricer import (
    GitConfig, PriceTable, _check_price, batch_price, price_down_in_put, price_down_out_put, sine_roundtrip,
    vanilla_put,
)
from hestonbarrier.validators import HestonParams, fft_vanilla_put

FAST = GitConfig(n_t=4, n_v=4, upsilon=300.0, rel_tol=1e-6, simpson_nodes=9)


def test_config_defaults():
    cfg = GitConfig()
    assert cfg.half_width(0.5) == 0.3 and cfg.half_width(0.2) == pytest.approx(0.12)
    assert cfg.eps_for(45.0) == 3.0 and cfg.eps_for(70.0) == 4.0
    assert cfg.quad(1.0).upsilon == 5000.0


def test_price_vanishes_at_the_barrier():
    T = 0.25
    res = price_down_out_put(ref_model(T), BarrierContract(80.0, T, flat_barrier(BARRIER)),
                             MarketState(BARRIER, V0), FAST)
    assert abs(res.price) < 1e-8 * 80.0


def test_spot_below_barrier_rejected():
    T = 0.25
    with pytest.raises(ConfigError):
        price_down_out_put(ref_model(T), BarrierContract(80.0, T, flat_barrier(BARRIER)), MarketState(39.0, V0), FAST)


def test_in_out_parity_is_exact():
    T = 0.25
    m = ref_model(T)
    c = BarrierContract(80.0, T, flat_barrier(BARRIER))
    mk = MarketState(SPOT, V0)
    out = price_down_out_put(m, c, mk, FAST)
    van = 21.5
    din = price_down_in_put(m, c, mk, FAST, vanilla=van)
    assert out.price + din.price == pytest.approx(van, abs=1e-12 * 80.0)
    assert din.diagnostics["vanilla"] == van


def test_batch_matches_single_and_is_monotone():
    T = 0.25
    m = ref_model(T)
    mk = MarketState(SPOT, V0)
    strikes = [60.0, 70.0, 80.0, 90.0]
    table, phis = batch_price(m, flat_barrier(BARRIER), mk, strikes, [T], FAST)
    prices = [table.lookup(k, T) for k in strikes]
    assert np.all(np.diff(prices) > 0)
    single = price_down_out_put(m, BarrierContract(80.0, T, flat_barrier(BARRIER)), mk, FAST)
    assert single.price == pytest.approx(table.lookup(80.0, T), rel=1e-10)
    assert set(phis) == {(k, T) for k in strikes}
    # FD reference 16.6467; the coarse settings here only need the right ballpark
    assert prices[-1] == pytest.approx(16.6467, rel=0.1)


def test_down_in_batch_uses_vanilla():
    T = 0.25
    m = ref_model(T, constant=True)
    mk = MarketState(SPOT, V0)
    out, _ = batch_price(m, flat_barrier(BARRIER), mk, [80.0], [T], FAST)
    din, _ = batch_price(m, flat_barrier(BARRIER), mk, [80.0], [T], FAST, kind=OptionKind.DOWN_IN_PUT)
    van = fft_vanilla_put(HestonParams.from_model(m, V0), SPOT, 80.0, T)
    assert out.lookup(80.0, T) + din.lookup(80.0, T) == pytest.approx(van, rel=1e-12)


def test_vanilla_dispatch_constant_model():
    m = ref_model(0.5, constant=True)
    mk = MarketState(SPOT, V0)
    assert vanilla_put(m, mk, 70.0, 0.5) == fft_vanilla_put(HestonParams.from_model(m, V0), SPOT, 70.0, 0.5)


def test_price_sanity_checks():
    assert _check_price(1.5, 80.0) == 1.5
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        assert _check_price(-0.1, 80.0) == 0.0
    assert rec
    with pytest.raises(PricingError):
        _check_price(-5.0, 80.0)
    with pytest.raises(PricingError):
        _check_price(math.nan, 80.0)


def test_table_csv_roundtrip(tmp_path):
    t = PriceTable()
    t.add(80, 1 / 24, 19.74801234, "git", 1.23456)
    t.add(90, 2.0, 3.2025, "git", 0.5)
    path = tmp_path / "p.csv"
    t.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "strike,maturity,price,method,seconds"
    back = PriceTable.from_csv(path)
    assert back.lookup(80.0, 1 / 24) == pytest.approx(19.748, rel=1e-6)
    with pytest.raises(KeyError):
        back.lookup(70.0, 2.0)


def test_sine_transform_roundtrip():
    y = -0.4
    f = lambda x: (x - y) * np.exp(-((x - y) ** 2))  # noqa: E731
    xs = np.array([-0.2, 0.3, 1.0])
    assert np.allclose(sine_roundtrip(f, y, xs, upsilon=60.0, n=6001), f(xs), atol=1e-6)
