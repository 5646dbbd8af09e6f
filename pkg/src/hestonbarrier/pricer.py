"""Barrier Put prices from the boundary gradient.

The Down-and-Out Put is recovered by the inverse sine transform

    P(x) = 2/pi int_0^U sin(xi (x - y)) Im[(P1 - P2)(-i xi) e^{-i xi y}] d xi,

where P1 is the image of the payoff propagated without the barrier and
P2 = 1/2 int_t^T ds int dv' Phi(s, v') Kf(s, v', t, v) is the barrier
correction.  x - y = log(S / L) does not depend on the strike, so a single
pass over xi prices every strike of a maturity.
"""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, PricingError
from .lmvf import (
    BoundaryGradient,
    _row_integrals,
    assemble,
    collocation_grid,
    default_epsilon,
    p1_image,
    solve,
)
from .model import BarrierContract, HestonModel, MarketState, OptionKind, log_barrier
from .oscquad import QuadConfig, choose_upsilon, simpson_rule
from .transform import SqrtP, build_cache
from .validators import HestonParams, fd_vanilla_put, fft_vanilla_put

log = logging.getLogger(__name__)

NEGATIVE_TOL = 0.01  # fraction of strike


@dataclass(frozen=True)
class GitConfig:
    n_t: int = 10
    n_v: int = 8
    v_m: float | None = None  # None: min(0.3, 0.6 v0)
    epsilon: float | dict | None = None  # scalar, {strike: eps}, or None for the per-strike default
    upsilon: float | None = None  # None: maturity-dependent default
    rel_tol: float = 1e-7
    abs_tol: float = 1e-10
    max_subdivisions: int = 2000
    simpson_nodes: int = 21
    exact_kummer: bool = True
    solver: str = "tsvd"
    rcond: float = 1e-10
    minres_tol: float = 1e-8

    def quad(self, maturity: float) -> QuadConfig:
        ups = self.upsilon if self.upsilon is not None else choose_upsilon(maturity)
        return QuadConfig(ups, self.rel_tol, self.abs_tol, self.max_subdivisions, self.simpson_nodes)

    def half_width(self, v0: float) -> float:
        return self.v_m if self.v_m is not None else min(0.3, 0.6 * v0)

    def eps_for(self, strike: float) -> float:
        if isinstance(self.epsilon, dict):
            for k, e in self.epsilon.items():
                if math.isclose(float(k), strike):
                    return float(e)
            return default_epsilon(strike)
        return self.epsilon if self.epsilon is not None else default_epsilon(strike)


@dataclass
class PriceResult:
    strike: float
    maturity: float
    price: float
    seconds: float
    phi: BoundaryGradient | None = None
    diagnostics: dict = field(default_factory=dict)


def p1(xi, model: HestonModel, contract: BarrierContract, t: float, v: float):
    """Image of the barrier-free part at (t, v) for sqrt(p) = -i xi."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    T = contract.maturity
    cache = build_cache(model, SqrtP.minus(xi), np.array([t]), T)
    a, b, _, _ = cache.at([t])
    y_T = np.log(float(contract.barrier(T)) / contract.strike)
    out = p1_image((-1j * xi)[:, None], a, b, v, np.array([contract.strike]), np.array([y_T]))
    return out[:, 0]


def _check_price(value: float, strike: float) -> float:
    if not np.isfinite(value):
        raise PricingError("non-finite price")
    if value < -NEGATIVE_TOL * strike:
        raise PricingError(f"price {value:.6g} is materially negative")
    if value < 0.0:
        warnings.warn(f"small negative price {value:.3g} clamped to zero", RuntimeWarning, stacklevel=3)
        return 0.0
    return value


def _price_group(model, barrier, market, strikes, maturity, eps, cfg: GitConfig):
    """Down-and-Out Put prices for strikes sharing one epsilon."""
    t0, v0 = market.t0, market.v0
    quad = cfg.quad(maturity)
    ref = BarrierContract(float(strikes[0]), maturity, barrier)
    grid = collocation_grid(t0, maturity, v0, eps, cfg.n_t, cfg.n_v, cfg.half_width(v0))
    system = assemble(grid, model, ref, quad, strikes=strikes, exact=cfg.exact_kummer)
    phis = solve(system, method=cfg.solver, tol=cfg.minres_tol, rcond=cfg.rcond)

    gap = math.log(market.spot / float(barrier(t0)))
    Y0, F0, err = _row_integrals(
        model, ref, t0, [v0], grid.v_nodes, eps, quad, strikes,
        lambda xi: np.sin(xi * gap), cfg.exact_kummer, freq=abs(gap),
    )
    s_nodes, w_s = simpson_rule(t0, maturity, quad.simpson_nodes)
    tw = w_s[:, None] * np.exp(-eps * (s_nodes[:, None] - grid.t_nodes[None, :]) ** 2)
    col = np.einsum("sk,sl->kl", tw, Y0[:, 0, :]).ravel()  # matches centre order
    prices = []
    for j, phi in enumerate(phis):
        raw = 2.0 / np.pi * (F0[0, j] - 0.5 * col @ phi.coeffs)
        prices.append(raw)
    diag = dict(system.diagnostics)
    diag["price_quad_err"] = err
    diag["residuals"] = [p.residual for p in phis]
    diag["solvers"] = [p.solver for p in phis]
    return np.array(prices), phis, diag, system


def price_down_out_put(model: HestonModel, contract: BarrierContract, market: MarketState,
                       cfg: GitConfig = GitConfig()) -> PriceResult:
    start = time.perf_counter()
    _validate(contract, market)
    eps = cfg.eps_for(contract.strike)
    prices, phis, diag, _ = _price_group(
        model, contract.barrier, market, np.array([contract.strike]), contract.maturity, eps, cfg
    )
    value = _check_price(float(prices[0]), contract.strike)
    return PriceResult(contract.strike, contract.maturity, value, time.perf_counter() - start, phis[0], diag)


def vanilla_put(model: HestonModel, market: MarketState, strike: float, maturity: float) -> float:
    """Vanilla Put: FFT for constant coefficients, the FD solver otherwise."""
    if model.is_constant():
        params = HestonParams.from_model(model, market.v0, market.t0)
        return float(fft_vanilla_put(params, market.spot, strike, maturity - market.t0))
    return float(fd_vanilla_put(model, market, strike, maturity))


def price_down_in_put(model: HestonModel, contract: BarrierContract, market: MarketState,
                      cfg: GitConfig = GitConfig(), vanilla: float | None = None) -> PriceResult:
    """In-out parity: Down-and-In = vanilla - Down-and-Out."""
    out = price_down_out_put(model, contract, market, cfg)
    van = vanilla if vanilla is not None else vanilla_put(model, market, contract.strike, contract.maturity)
    value = _check_price(van - out.price, contract.strike)
    return replace(out, price=value, diagnostics={**out.diagnostics, "vanilla": van})


def _validate(contract: BarrierContract, market: MarketState) -> None:
    if contract.maturity <= market.t0:
        raise ConfigError("maturity must exceed t0")
    if market.spot < float(contract.barrier(market.t0)):
        raise ConfigError("spot below the barrier: the option is already knocked out")


@dataclass
class PriceTable:
    rows: list = field(default_factory=list)  # (strike, maturity, price, method, seconds)

    HEADER = ("strike", "maturity", "price", "method", "seconds")

    def add(self, strike, maturity, price, method, seconds) -> None:
        self.rows.append((float(strike), float(maturity), float(price), str(method), float(seconds)))

    def lookup(self, strike, maturity) -> float:
        for k, t, p, _, _ in self.rows:
            if math.isclose(k, strike) and math.isclose(t, maturity, rel_tol=1e-9):
                return p
        raise KeyError((strike, maturity))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            for k, t, p, m, s in self.rows:
                w.writerow([f"{k:g}", f"{t:.10g}", f"{p:.6g}", m, f"{s:.3f}"])

    @classmethod
    def from_csv(cls, path) -> "PriceTable":
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.add(row["strike"], row["maturity"], row["price"], row["method"], row["seconds"])
        return out


def batch_price(model: HestonModel, barrier, market: MarketState, strikes, maturities,
                cfg: GitConfig = GitConfig(), kind: OptionKind = OptionKind.DOWN_OUT_PUT):
    """Price a strike x maturity table; one matrix per (maturity, epsilon).

    Returns ``(table, phis)`` with ``phis[(K, T)]`` the boundary gradients.
    """
    table = PriceTable()
    phis = {}
    for T in maturities:
        groups: dict[float, list[float]] = {}
        for K in strikes:
            _validate(BarrierContract(float(K), float(T), barrier, kind), market)
            groups.setdefault(cfg.eps_for(K), []).append(float(K))
        for eps, ks in groups.items():
            start = time.perf_counter()
            prices, gs, _, _ = _price_group(model, barrier, market, np.array(ks), float(T), eps, cfg)
            each = (time.perf_counter() - start) / len(ks)
            for K, p, g in zip(ks, prices, gs):
                value = _check_price(float(p), K)
                if kind is OptionKind.DOWN_IN_PUT:
                    value = _check_price(vanilla_put(model, market, K, T) - value, K)
                table.add(K, T, value, "git", each)
                phis[(K, float(T))] = g
    return table, phis


def sine_roundtrip(fn, y: float, xs, upsilon: float = 200.0, n: int = 20001):
    """Forward sine transform on [y, inf) followed by the inverse, for tests.

    ``fn`` must decay fast enough for a truncated grid; returns the
    reconstructed values at ``xs``.
    """
    x = np.linspace(y, y + 40.0, 40001)
    xi = np.linspace(0.0, upsilon, n)
    fx = fn(x)
    img = np.trapezoid(fx[None, :] * np.sin(xi[:, None] * (x[None, :] - y)), x, axis=1)
    xs = np.atleast_1d(xs)
    return 2.0 / np.pi * np.trapezoid(img[None, :] * np.sin(xi[None, :] * (xs[:, None] - y)), xi, axis=1)
