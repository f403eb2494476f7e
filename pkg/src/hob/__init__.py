"""Higher-order binary options and the multiple-expiry exotics they replicate."""
from .binaries import (BinarySpec, Kind, MarketParams, PrecisionMatrix, Sign, asset_binary,
                       bond_binary, correlation_from_expiries, d_values, price_asset_binary,
                       price_binary, price_bond_binary, price_q_binary, q_binary)
from .exotics import (BermudanPut, ExtendableCall, TwiceShoutCall, bermudan_boundaries,
                      extendable_boundaries, price_bermudan_put, price_extendable_call,
                      price_twice_shout_call)
from .numerics import CorrelationMatrix, cholesky, mvn_cdf, norm_cdf
from .replication import AssetForward, Cash, Portfolio, PortfolioTerm, expiry_payoff, price_portfolio

__version__ = "0.1.0"
