"""Independent reference prices.

* ``fd_solve``: Hundsdorfer-Verwer ADI for the (S, v) pricing PDE of a
  Down-and-Out Put (or a vanilla Put when no barrier is given), with a
  sinh-stretched grid and Rannacher start-up.
* ``heston_cf`` / ``fft_vanilla_put``: Carr-Madan FFT for constant parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import RectBivariateSpline
from scipy.sparse.linalg import splu

from .errors import FdInstability
from .model import BarrierContract, HestonModel, MarketState, eval_curve


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FdGrid:
    n_s: int = 76
    n_v: int = 79
    dt: float = 0.01
    rannacher_steps: int = 2
    v_max: float = 5.0
    s_max_factor: float = 8.0
    theta: float = 0.5


@dataclass
class FdSolution:
    s: np.ndarray
    v: np.ndarray
    values: np.ndarray  # shape (n_s, n_v), at t0
    history: dict = field(default_factory=dict)  # t -> values, when requested

    def price(self, spot: float, v0: float) -> float:
        spl = RectBivariateSpline(self.s, self.v, self.values, kx=3, ky=3)
        return float(spl(spot, v0)[0, 0])


def _sinh_grid(lo, hi, centre, n, c):
    a = math.asinh((lo - centre) / c)
    b = math.asinh((hi - centre) / c)
    x = centre + c * np.sinh(np.linspace(a, b, n))
    x[0], x[-1] = lo, hi
    # snap the node nearest to the centre onto it
    i = int(np.argmin(np.abs(x - centre)))
    if 0 < i < n - 1:
        x[i] = centre
    return x


def spot_grid(lo: float, hi: float, spot: float, n: int) -> np.ndarray:
    return _sinh_grid(lo, hi, spot, n, c=0.1 * spot)


def variance_grid(v0: float, v_max: float, n: int) -> np.ndarray:
    return _sinh_grid(0.0, v_max, v0, n, c=v0 / 2.0)


def _diff_ops(x):
    """Second-order first/second derivative matrices on a nonuniform grid.

    Boundary rows of D1 are one-sided (second order); boundary rows of D2
    are left empty.
    """
    n = len(x)
    h = np.diff(x)
    d1 = sparse.lil_matrix((n, n))
    d2 = sparse.lil_matrix((n, n))
    for i in range(1, n - 1):
        hm, hp = h[i - 1], h[i]
        d1[i, i - 1] = -hp / (hm * (hm + hp))
        d1[i, i] = (hp - hm) / (hm * hp)
        d1[i, i + 1] = hm / (hp * (hm + hp))
        d2[i, i - 1] = 2.0 / (hm * (hm + hp))
        d2[i, i] = -2.0 / (hm * hp)
        d2[i, i + 1] = 2.0 / (hp * (hm + hp))
    h0, h1 = h[0], h[1]
    d1[0, 0] = -(2 * h0 + h1) / (h0 * (h0 + h1))
    d1[0, 1] = (h0 + h1) / (h0 * h1)
    d1[0, 2] = -h0 / (h1 * (h0 + h1))
    h0, h1 = h[-1], h[-2]
    d1[n - 1, n - 1] = (2 * h0 + h1) / (h0 * (h0 + h1))
    d1[n - 1, n - 2] = -(h0 + h1) / (h0 * h1)
    d1[n - 1, n - 3] = h0 / (h1 * (h0 + h1))
    return d1.tocsr(), d2.tocsr()


class _HestonOperators:
    """Split operator A = A0 (mixed) + A1 (S) + A2 (v) on a fixed grid."""

    def __init__(self, s, v, dirichlet_left: bool):
        self.s, self.v = s, v
        ns, nv = len(s), len(v)
        self.shape = (ns, nv)
        d1s, d2s = _diff_ops(s)
        d1v, d2v = _diff_ops(v)
        # upwind one-sided at v = 0 is what _diff_ops gives (forward stencil)
        self.Is = sparse.identity(ns, format="csr")
        self.Iv = sparse.identity(nv, format="csr")
        # unknown vector is U.ravel() with U[i_s, i_v]; S index is slow
        self.DS = sparse.kron(d1s, self.Iv, format="csr")
        self.DSS = sparse.kron(d2s, self.Iv, format="csr")
        self.DV = sparse.kron(self.Is, d1v, format="csr")
        self.DVV = sparse.kron(self.Is, d2v, format="csr")
        self.DSV = sparse.kron(d1s, d1v, format="csr")
        S, V = np.meshgrid(s, v, indexing="ij")
        self.S, self.V = S.ravel(), V.ravel()
        frozen = np.zeros(self.shape, dtype=bool)
        frozen[-1, :] = True
        if dirichlet_left:
            frozen[0, :] = True
        self.frozen = frozen.ravel()
        mixed_off = np.zeros(self.shape, dtype=bool)
        mixed_off[[0, -1], :] = True
        mixed_off[:, [0, -1]] = True
        self.mixed_off = mixed_off.ravel()

    def build(self, kappa, theta, sigma, rho, r, q):
        S, V = self.S, self.V
        keep = (~self.frozen).astype(float)
        a0 = sparse.diags(keep * (~self.mixed_off) * rho * sigma * V * S) @ self.DSV
        a1 = sparse.diags(keep * 0.5 * V * S * S) @ self.DSS + sparse.diags(keep * (r - q) * S) @ self.DS
        a1 = a1 - sparse.diags(keep * 0.5 * r)
        a2 = sparse.diags(keep * 0.5 * sigma * sigma * V) @ self.DVV
        a2 = a2 + sparse.diags(keep * kappa * (theta - V)) @ self.DV - sparse.diags(keep * 0.5 * r)
        return a0.tocsr(), a1.tocsr(), a2.tocsr()


def fd_solve(
    model: HestonModel,
    contract: BarrierContract | None,
    market: MarketState,
    strike: float | None = None,
    maturity: float | None = None,
    grid: FdGrid = FdGrid(),
    keep_history: bool = False,
) -> FdSolution:
    """Backward ADI solve; ``contract=None`` prices the vanilla Put.

    With ``keep_history`` the solution after every time step is kept in
    ``FdSolution.history`` keyed by calendar time.
    """
    K = contract.strike if contract is not None else float(strike)
    T = contract.maturity if contract is not None else float(maturity)
    if contract is not None:
        bps = [b for b in contract.barrier.breakpoints if b < T] + [T]
        lo = min(eval_curve(contract.barrier, b) for b in bps)
    else:
        lo = 0.0
    hi = grid.s_max_factor * max(K, market.spot)
    s = spot_grid(lo, hi, market.spot, grid.n_s)
    v = variance_grid(market.v0, grid.v_max, grid.n_v)
    ops = _HestonOperators(s, v, dirichlet_left=contract is not None)

    U = np.maximum(K - ops.S, 0.0)
    U[ops.frozen] = 0.0
    if contract is None:
        U[~ops.frozen] = np.maximum(K - ops.S[~ops.frozen], 0.0)

    n_steps = max(1, math.ceil(T / grid.dt - 1e-9))
    dt = T / n_steps
    eye = sparse.identity(len(U), format="csc")
    ref = max(1.0, np.abs(U).max())
    cache = {}
    history = {T: U.reshape(ops.shape).copy()} if keep_history else {}

    def barrier_mask(t):
        if contract is None:
            return None
        return ops.S <= eval_curve(contract.barrier, t) * (1 + 1e-12)

    for n in range(n_steps):
        t_hi = T - n * dt
        t_mid = t_hi - 0.5 * dt
        coeffs = tuple(float(c) for c in model.coeffs(t_mid))
        key = coeffs
        if key not in cache:
            a0, a1, a2 = ops.build(*coeffs)
            cache.clear()
            cache[key] = (a0, a1, a2, {})
        a0, a1, a2, lus = cache[key]
        implicit = n < grid.rannacher_steps
        th = 1.0 if implicit else grid.theta
        # Rannacher start-up: two half steps of fully implicit Douglas
        n_sub = 2 if implicit else 1
        h = dt / n_sub
        for _ in range(n_sub):
            kk = (th, h)
            if kk not in lus:
                lus[kk] = (splu((eye - th * h * a1).tocsc()), splu((eye - th * h * a2).tocsc()))
            lu1, lu2 = lus[kk]
            F0u, F1u, F2u = a0 @ U, a1 @ U, a2 @ U
            Y0 = U + h * (F0u + F1u + F2u)
            Y1 = lu1.solve(Y0 - th * h * F1u)
            Y2 = lu2.solve(Y1 - th * h * F2u)
            if implicit:
                U = Y2
            else:
                F0y, F1y, F2y = a0 @ Y2, a1 @ Y2, a2 @ Y2
                Z0 = Y0 + 0.5 * h * ((F0y + F1y + F2y) - (F0u + F1u + F2u))
                Z1 = lu1.solve(Z0 - th * h * F1y)
                U = lu2.solve(Z1 - th * h * F2y)
        mask = barrier_mask(t_hi - dt)
        if mask is not None:
            U[mask] = 0.0
        if contract is None:
            # far-field put value vanishes; S = 0 row evolves by its own ODE
            U[ops.frozen] = 0.0
        peak = np.abs(U).max()
        if not np.isfinite(peak) or peak > 1e3 * ref:
            raise FdInstability(f"max-norm blow-up at step {n} (t = {t_hi - dt:.4f}): {peak:.3g}")
        if keep_history:
            history[t_hi - dt] = U.reshape(ops.shape).copy()
    return FdSolution(s, v, U.reshape(ops.shape), history)


def fd_price(model, contract, market, grid: FdGrid = FdGrid()) -> float:
    return fd_solve(model, contract, market, grid=grid).price(market.spot, market.v0)


def fd_vanilla_put(model, market, strike, maturity, grid: FdGrid = FdGrid()) -> float:
    return fd_solve(model, None, market, strike, maturity, grid).price(market.spot, market.v0)


# ---------------------------------------------------------------------------
# FFT
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HestonParams:
    kappa: float
    theta: float
    sigma: float
    rho: float
    v0: float
    r: float
    q: float

    @classmethod
    def from_model(cls, model: HestonModel, v0: float, t: float = 0.0) -> "HestonParams":
        k, th, s, rh, r, q = (float(x) for x in model.coeffs(t))
        return cls(k, th, s, rh, v0, r, q)


def heston_cf(u, params: HestonParams, T: float):
    """E[exp(i u log(S_T / S_0))], in the branch-safe ("little trap") form."""
    u = np.asarray(u, dtype=complex)
    k, th, s, rho, v0 = params.kappa, params.theta, params.sigma, params.rho, params.v0
    beta = k - rho * s * 1j * u
    d = np.sqrt(beta**2 + s * s * (1j * u + u * u))
    g = (beta - d) / (beta + d)
    e = np.exp(-d * T)
    C = (k * th / s**2) * ((beta - d) * T - 2.0 * np.log((1 - g * e) / (1 - g)))
    D = ((beta - d) / s**2) * (1 - e) / (1 - g * e)
    out = np.exp(1j * u * (params.r - params.q) * T + C + D * v0)
    return out[()] if out.ndim == 0 else out


def _carr_madan_calls(params, spot, T, n, eta, alpha=1.5):
    lam = 2 * np.pi / (n * eta)
    b = 0.5 * n * lam
    j = np.arange(n)
    u = eta * j
    w = np.full(n, eta)
    w[0] *= 0.5
    x0 = math.log(spot)
    cf = heston_cf(u - (alpha + 1) * 1j, params, T) * np.exp(1j * (u - (alpha + 1) * 1j) * x0)
    psi = math.exp(-params.r * T) * cf / (alpha**2 + alpha - u**2 + 1j * (2 * alpha + 1) * u)
    # Simpson weights improve the u-integration
    simp = (3 + (-1) ** (j + 1)) / 3.0
    simp[0] = 1.0 / 3.0
    vals = np.fft.fft(np.exp(1j * b * u) * psi * eta * simp).real
    k = -b + lam * j
    return k, np.exp(-alpha * k) / np.pi * vals


def fft_vanilla_put(
    params: HestonParams, spot: float, strike: float, T: float, n_nodes: int = 8192, eta: float = 0.25
) -> float:
    """Carr-Madan FFT call price on a log-strike grid, then put-call parity."""
    k, calls = _carr_madan_calls(params, spot, T, n_nodes, eta)
    kk = math.log(strike)
    i = int(np.searchsorted(k, kk))
    idx = np.arange(i - 2, i + 2)
    call = float(np.polyval(np.polyfit(k[idx] - kk, calls[idx], 3), 0.0))
    return call - spot * math.exp(-params.q * T) + strike * math.exp(-params.r * T)


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------


def cross_validate(git, fd):
    """Relative percentage error 100 (GIT - FD) / FD per cell, plus summary.

    Accepts arrays or price tables with ``rows`` of (strike, maturity,
    price, ...); tables are matched cell by cell.
    """
    if hasattr(git, "rows"):
        g = np.array([p for _, _, p, *_ in git.rows], dtype=float)
        f = np.array([fd.lookup(k, t) for k, t, *_ in git.rows], dtype=float)
    else:
        g = np.asarray(git, dtype=float)
        f = np.asarray(fd, dtype=float)
    if g.shape != f.shape:
        raise ValueError("tables cover different (K, T) grids")
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.where(f != 0, 100.0 * (g - f) / f, np.where(g == f, 0.0, np.inf))
    finite = err[np.isfinite(err)]
    summary = {
        "max_abs": float(np.max(np.abs(finite))) if finite.size else 0.0,
        "mean_abs": float(np.mean(np.abs(finite))) if finite.size else 0.0,
    }
    return err, summary


# ---------------------------------------------------------------------------
# kernel path check
# ---------------------------------------------------------------------------


def brute_matrix_entry(model, contract, grid, row, col, quad, v_max: float = 6.0, panel: float = 0.02):
    """One collocation-matrix entry by direct quadrature of the kernel.

    The xi-integral comes from ``kernel_K_reference`` (the raw kernel, no
    closed form), v' from composite Gauss-Legendre on [0, v_max] and s from
    the same Simpson rule the assembly uses.
    """
    from .greens import kernel_K_reference
    from .lmvf import basis_theta
    from .oscquad import simpson_rule

    tk, vl = grid.centers()
    t, v = tk[row], vl[row]
    center = (tk[col], math.sqrt(vl[col]))
    xg, wg = np.polynomial.legendre.leggauss(8)
    edges = np.arange(0.0, v_max + 0.5 * panel, panel)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    vp = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    wv = (half[:, None] * wg[None, :]).ravel()
    s_nodes, w_s = simpson_rule(t, contract.maturity, quad.simpson_nodes)
    total = 0.0
    for s, w in zip(s_nodes[1:], w_s[1:]):  # s = t contributes nothing
        kern = kernel_K_reference(s, vp, t, v, model, contract, quad)
        total += w * np.sum(wv * basis_theta(s, np.sqrt(vp), center, grid.epsilon) * kern)
    return float(basis_theta(t, math.sqrt(v), center, grid.epsilon) + total / (2.0 * math.pi))


def kernel_spot_check(model, contract, market, cfg, n_entries: int = 5, seed: int = 0):
    """Closed-form vs brute-force matrix entries on random (row, col) pairs."""
    from .lmvf import _row_integrals, basis_theta, collocation_grid
    from .oscquad import simpson_rule

    T = contract.maturity
    eps = cfg.eps_for(contract.strike)
    quad = cfg.quad(T)
    grid = collocation_grid(market.t0, T, market.v0, eps, cfg.n_t, cfg.n_v, cfg.half_width(market.v0))
    rng = np.random.default_rng(seed)
    tk, vl = grid.centers()
    out = []
    for row, col in zip(rng.integers(0, grid.size, n_entries), rng.integers(0, grid.size, n_entries)):
        t, v = tk[row], vl[row]
        s_nodes, w_s = simpson_rule(t, T, quad.simpson_nodes)
        l = col % len(grid.v_nodes)
        Y, _, _ = _row_integrals(model, contract, t, [v], grid.v_nodes[l:l + 1], eps, quad,
                                 [contract.strike], lambda xi: xi, cfg.exact_kummer, row_t_nodes=(s_nodes, w_s))
        closed = basis_theta(t, math.sqrt(v), (tk[col], math.sqrt(vl[col])), eps) + np.sum(
            w_s * np.exp(-eps * (s_nodes - tk[col]) ** 2) * Y[:, 0, 0]
        ) / (2.0 * math.pi)
        brute = brute_matrix_entry(model, contract, grid, int(row), int(col), quad)
        out.append({"row": int(row), "col": int(col), "closed": float(closed), "brute": brute,
                    "rel_err": abs(closed - brute) / max(abs(brute), 1e-300)})
    return out
