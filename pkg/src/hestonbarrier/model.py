"""Time-dependent Heston model, barrier contract and piecewise-constant curves.

The model is restricted to the family where ``kappa(t) * theta(t) / sigma(t)**2``
is a constant ``m / 2``.  Only ``m >= 1`` is supported: that is the branch
where the variance process maps to a Bessel process with drift constant
``b = m - 1/2 >= 1/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, UnsupportedBranch

CONSTRAINT_TOL = 1e-12


@dataclass(frozen=True)
class CoefficientCurve:
    """Right-continuous piecewise-constant function of time.

    ``values[i]`` holds on ``[breakpoints[i], breakpoints[i + 1])``; the last
    value is held beyond the final breakpoint.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if not bp or bp[0] != 0.0:
            raise ConfigError("curve breakpoints must start at 0")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ConfigError("curve breakpoints must be strictly increasing")
        if len(vals) != len(bp):
            raise ConfigError(
                f"curve needs one value per interval: {len(bp)} breakpoints, {len(vals)} values"
            )
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value: float) -> "CoefficientCurve":
        return cls((0.0,), (value,))

    def __call__(self, t):
        return eval_curve(self, t)

    def segment_index(self, t):
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        return np.clip(idx, 0, len(self.values) - 1)

    def is_constant(self) -> bool:
        return len(set(self.values)) == 1


def eval_curve(curve: CoefficientCurve, t):
    """Value of ``curve`` at time(s) ``t``; scalar in, float out."""
    vals = np.asarray(curve.values)
    out = vals[curve.segment_index(np.asarray(t, dtype=float))]
    return float(out) if np.ndim(out) == 0 else out


def _sample(fn, breakpoints: np.ndarray) -> CoefficientCurve:
    return CoefficientCurve(tuple(breakpoints), tuple(float(fn(t)) for t in breakpoints))


@dataclass(frozen=True)
class HestonModel:
    """Heston parameters as piecewise-constant curves.

    ``kappa`` is never supplied directly: it is derived as
    ``m * sigma**2 / (2 * theta)`` so the Bessel-process reduction holds on
    every segment.
    """

    m: float
    sigma: CoefficientCurve
    theta: CoefficientCurve
    rho: CoefficientCurve
    r: CoefficientCurve
    q: CoefficientCurve
    kappa: CoefficientCurve = field(init=False)

    def __post_init__(self) -> None:
        if not self.m >= 1.0:
            raise UnsupportedBranch(f"m = {self.m} < 1 is not supported (needs m >= 1)")
        if min(self.sigma.values) <= 0.0:
            raise ConfigError("sigma must be positive")
        if min(self.theta.values) <= 0.0:
            raise ConfigError("theta must be positive")
        if any(abs(p) > 1.0 for p in self.rho.values):
            raise ConfigError("rho must lie in [-1, 1]")
        bps = self.breakpoints()
        sig = np.array([eval_curve(self.sigma, t) for t in bps])
        th = np.array([eval_curve(self.theta, t) for t in bps])
        kappa = CoefficientCurve(tuple(bps), tuple(self.m * sig**2 / (2.0 * th)))
        object.__setattr__(self, "kappa", kappa)

    @property
    def b(self) -> float:
        """Drift constant of the associated Bessel process."""
        return self.m - 0.5

    def breakpoints(self) -> np.ndarray:
        """Union of breakpoints of all coefficient curves."""
        pts = set()
        for c in (self.sigma, self.theta, self.rho, self.r, self.q):
            pts.update(c.breakpoints)
        return np.array(sorted(pts))

    def coeffs(self, t):
        """(kappa, theta, sigma, rho, r, q) evaluated at time(s) ``t``."""
        return tuple(
            eval_curve(c, t) for c in (self.kappa, self.theta, self.sigma, self.rho, self.r, self.q)
        )

    def is_constant(self) -> bool:
        return all(c.is_constant() for c in (self.sigma, self.theta, self.rho, self.r, self.q))

    def frozen_at(self, t: float) -> "HestonModel":
        """Constant-coefficient model with the values in force at ``t``."""
        k, th, s, rh, r, q = self.coeffs(t)
        C = CoefficientCurve.constant
        return HestonModel(self.m, C(s), C(th), C(rh), C(r), C(q))


class OptionKind(str, Enum):
    DOWN_OUT_PUT = "DownOutPut"
    DOWN_IN_PUT = "DownInPut"


@dataclass(frozen=True)
class BarrierContract:
    strike: float
    maturity: float
    barrier: CoefficientCurve
    kind: OptionKind = OptionKind.DOWN_OUT_PUT

    def __post_init__(self) -> None:
        if self.strike <= 0.0 or self.maturity <= 0.0:
            raise ConfigError("strike and maturity must be positive")
        pts = [t for t in self.barrier.breakpoints if t <= self.maturity] + [self.maturity]
        levels = [eval_curve(self.barrier, t) for t in pts]
        if min(levels) <= 0.0:
            raise ConfigError("barrier must be positive on [0, T]")
        if eval_curve(self.barrier, self.maturity) >= self.strike:
            raise ConfigError("barrier at maturity must lie below the strike")

    def with_strike(self, strike: float) -> "BarrierContract":
        return BarrierContract(strike, self.maturity, self.barrier, self.kind)


@dataclass(frozen=True)
class MarketState:
    spot: float
    v0: float
    t0: float = 0.0

    def __post_init__(self) -> None:
        if self.v0 <= 0.0:
            raise ConfigError("initial variance must be positive")
        if self.spot <= 0.0:
            raise ConfigError("spot must be positive")


def log_barrier(contract: BarrierContract, t):
    """``y(t) = log(L(t) / K)``; negative on [0, T] for a valid contract."""
    return np.log(np.asarray(eval_curve(contract.barrier, t)) / contract.strike)


def build_model(
    m: float,
    theta0: float,
    sigma0: float,
    rho0: float,
    theta_k: float = 0.0,
    sigma_k: float = 0.0,
    r: float = 0.0,
    q: float = 0.0,
    maturity: float = 1.0,
    segments: int = 10,
) -> HestonModel:
    """Exponential test dependencies sampled onto ``segments`` pieces of [0, T].

    theta(t) = theta0 * exp(-theta_k t), sigma(t) = sigma0 * exp(-sigma_k t),
    rho(t) = rho0; each curve takes its left-endpoint value on a segment.
    """
    if m < 1.0:
        raise UnsupportedBranch(f"m = {m} < 1 is not supported (needs m >= 1)")
    if not -1.0 <= rho0 <= 1.0:
        raise ConfigError(f"rho0 = {rho0} outside [-1, 1]")
    if sigma0 <= 0.0 or theta0 <= 0.0:
        raise ConfigError("sigma0 and theta0 must be positive")
    if segments < 1 or maturity <= 0.0:
        raise ConfigError("need at least one segment and a positive maturity")
    bps = np.linspace(0.0, maturity, segments + 1)[:-1]
    C = CoefficientCurve.constant
    theta = C(theta0) if theta_k == 0.0 else _sample(lambda t: theta0 * math.exp(-theta_k * t), bps)
    sigma = C(sigma0) if sigma_k == 0.0 else _sample(lambda t: sigma0 * math.exp(-sigma_k * t), bps)
    return HestonModel(m=m, sigma=sigma, theta=theta, rho=C(rho0), r=C(r), q=C(q))


def flat_barrier(level: float) -> CoefficientCurve:
    return CoefficientCurve.constant(level)


def as_curve(spec) -> CoefficientCurve:
    """Accept a number or ``{"breakpoints": [...], "values": [...]}``."""
    if isinstance(spec, CoefficientCurve):
        return spec
    if isinstance(spec, (int, float)):
        return CoefficientCurve.constant(float(spec))
    if isinstance(spec, dict):
        return CoefficientCurve(tuple(spec["breakpoints"]), tuple(spec["values"]))
    if isinstance(spec, Sequence):
        raise ConfigError("curve given as a bare list; use {'breakpoints': ..., 'values': ...}")
    raise ConfigError(f"cannot interpret {spec!r} as a curve")
