"""Down-and-Out / Down-and-In barrier Puts under a time-dependent Heston model.

Prices come from the generalized integral transform method: the barrier
problem is reduced to a Volterra equation for the boundary gradient Phi,
solved by collocation, and the price is recovered by an inverse sine
transform.  An ADI finite-difference solver and a Carr-Madan FFT pricer are
included as validators.
"""

from .errors import ConfigError, PricingError
from .lmvf import BoundaryGradient, CollocationGrid, assemble, collocation_grid, solve
from .model import BarrierContract, CoefficientCurve, HestonModel, MarketState, OptionKind, build_model, flat_barrier
from .pricer import GitConfig, PriceResult, PriceTable, batch_price, price_down_in_put, price_down_out_put
from .validators import FdGrid, fd_price, fft_vanilla_put

__version__ = "0.1.0"

__all__ = [
    "BarrierContract",
    "BoundaryGradient",
    "CoefficientCurve",
    "CollocationGrid",
    "ConfigError",
    "FdGrid",
    "GitConfig",
    "HestonModel",
    "MarketState",
    "OptionKind",
    "PriceResult",
    "PriceTable",
    "PricingError",
    "assemble",
    "batch_price",
    "build_model",
    "collocation_grid",
    "fd_price",
    "fft_vanilla_put",
    "flat_barrier",
    "price_down_in_put",
    "price_down_out_put",
    "solve",
]
