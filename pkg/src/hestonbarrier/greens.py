"""Bessel-process Green's function and the raw integral-equation kernel.

With nu = b - 1/2 and the reduced Bessel function
I~_nu(w) = (w/2)^(-nu) I_nu(w) (even and entire in w), the density of
dX = dW + (b / X) dt on the half-line reads

    G(tau, z, zeta) = 2^(1/2 - b) zeta^(2b) tau^(-b - 1/2)
                      exp(-(z^2 + zeta^2) / (2 tau)) I~_nu(z zeta / tau).

Only tau^(-b - 1/2) and zeta^(2b) need a branch; everything is summed in
log space before exponentiating.  This module is the slow reference path: the
integral equation is assembled from the closed form in ``lmvf``.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DiagonalDegeneracy
from .model import BarrierContract, HestonModel, log_barrier
from .specfun import log_bessel_i_reduced
from .transform import SqrtP, TransformCache, build_cache

DIAG_TOL = 1e-14


def log_green(tau, z, zeta, b: float, log_zeta=None):
    """log G; ``log_zeta`` may supply a continuous branch of log(zeta)."""
    if b < 0.5:
        raise ConfigError("only b >= 1/2 (m >= 1) is supported")
    tau = np.asarray(tau, dtype=complex)
    z = np.asarray(z, dtype=complex)
    zeta = np.asarray(zeta, dtype=complex)
    if np.any(np.abs(tau) < DIAG_TOL):
        raise DiagonalDegeneracy("Green's function at zero elapsed time is a delta")
    lz = np.log(zeta) if log_zeta is None else log_zeta
    return (
        (0.5 - b) * np.log(2.0)
        + 2.0 * b * lz
        - (b + 0.5) * np.log(tau)
        - (z * z + zeta * zeta) / (2.0 * tau)
        + log_bessel_i_reduced(b - 0.5, z * zeta / tau)
    )


def green(tau, z, zeta, b: float):
    """G(tau, z, zeta); zero at zeta = 0 for b > 1/2."""
    zeta = np.asarray(zeta, dtype=complex)
    with np.errstate(divide="ignore"):
        out = np.exp(log_green(tau, z, zeta, b))
    out = np.where(zeta == 0, 0.0, out)
    return out[()] if np.ndim(out) == 0 else out


def kernel_frak(s, v_prime, t, v, cache: TransformCache, model: HestonModel, contract: BarrierContract):
    """The image-space kernel for every sqrt(p) in ``cache``.

    sqrt(v') g(s) G(tau(t) - tau(s), g(t) sqrt v, g(s) sqrt v')
      * exp(-y(s) sqrt p + alpha(t) v + beta(t) - beta(s) - alpha(s) v').

    ``v_prime`` may be an array; output shape is (n_xi, len(v_prime)).
    """
    if abs(s - t) < DIAG_TOL:
        raise DiagonalDegeneracy("s == t: the kernel collapses to a delta in v'")
    if s < t:
        raise ValueError("kernel needs t < s")
    vp = np.atleast_1d(np.asarray(v_prime, dtype=float))
    a_t, b_t, lg_t, _ = (x[:, 0] for x in cache.at(t))
    a_s, b_s, lg_s, _ = (x[:, 0] for x in cache.at(s))
    # G(l^2 d, l z, l zeta) = G(d, z, zeta) / l: rescale by g(s) to avoid tau cancellation
    d = cache.elapsed(t, [s])
    lz = (lg_t - lg_s)[:, None] + 0.5 * np.log(v)
    with np.errstate(divide="ignore"):
        lzeta = np.zeros_like(lz) + 0.5 * np.log(vp)[None, :]
    bb = model.b
    sp = cache.sqrtp[:, None]
    y_s = float(log_barrier(contract, s))
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = log_green(d, np.exp(lz), np.exp(lzeta), bb, log_zeta=lzeta)
        expo = (
            lg + 0.5 * np.log(vp)[None, :]
            - y_s * sp + (a_t * v + b_t - b_s)[:, None] - a_s[:, None] * vp[None, :]
        )
        out = np.exp(expo)
    return np.where(vp[None, :] == 0, 0.0, out)


def kernel_K_reference(s, v_prime, t, v, model, contract, quad=None, xi_nodes=None):
    """Real kernel int_0^U xi Im[K(-i xi) exp(-i xi y(t))] d xi by quadrature.

    Uses the adaptive Gauss-Kronrod engine over xi, vectorised over the
    ``v_prime`` values.  Returns an array shaped like ``v_prime``.
    """
    from .oscquad import QuadConfig, choose_upsilon, integrate_gk

    if quad is None:
        quad = QuadConfig(upsilon=choose_upsilon(contract.maturity))
    vp = np.atleast_1d(np.asarray(v_prime, dtype=float))
    y_t = float(log_barrier(contract, t))
    grid = np.array([t, s])

    def integrand(xi):
        cache = build_cache(model, SqrtP.minus(xi), grid, contract.maturity)
        kf = kernel_frak(s, vp, t, v, cache, model, contract)
        return (xi[:, None] * (kf * np.exp(-1j * xi * y_t)[:, None]).imag)

    val, _ = integrate_gk(integrand, 0.0, quad.upsilon, quad)
    return val.real
