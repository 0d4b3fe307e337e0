"""Sum-capacity bounds for random dense Gaussian interference networks.

Random networks are drawn with :func:`sample_network`.  The interference
alignment rate gives a lower bound on sum capacity; two matching-based
constructions (grid boxes in the joint transmitter/receiver domain, and
SNR-sorted categories) give upper bounds.  :mod:`icbounds.experiments`
runs the Monte Carlo studies and :mod:`icbounds.cli` exposes them.
"""

from icbounds.capacity_bounds import (
    BoundsReport,
    HypothesisError,
    lower_bound_ia,
    per_link_rate,
    single_user_bound,
    tail_bound,
    tail_bound_fading,
    two_user_bottleneck_bound,
)
from icbounds.net_model import (
    AttenuationModel,
    ConfigurationError,
    Domain,
    FadingModel,
    NetworkConfig,
    NetworkInstance,
    SeparationParams,
    compute_gains,
    derive_separation_params,
    sample_network,
)

__version__ = "0.1.0"

__all__ = [
    "AttenuationModel",
    "BoundsReport",
    "ConfigurationError",
    "Domain",
    "FadingModel",
    "HypothesisError",
    "NetworkConfig",
    "NetworkInstance",
    "SeparationParams",
    "compute_gains",
    "derive_separation_params",
    "lower_bound_ia",
    "per_link_rate",
    "sample_network",
    "single_user_bound",
    "tail_bound",
    "tail_bound_fading",
    "two_user_bottleneck_bound",
]
