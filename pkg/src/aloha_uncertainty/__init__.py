"""Receiver uncertainty for two-state Markov sources tracked over slotted ALOHA."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    ConditionalSourceLaw,
    JointAoiEstimateLaw,
    TerminatingChain,
    average_conditional_entropy,
    build_chain,
    conditional_source_law,
    entropy_cdf,
    entropy_timeline,
    estimate_law,
    instantaneous_entropy,
    inter_refresh_law,
    joint_law,
)
from .policy import (  # noqa: E402
    AccessPolicy,
    NetworkConfig,
    channel_load,
    mean_access_probability,
    strategy_load_one,
    strategy_random,
    strategy_reactive,
    success_probability,
)
from .source import SourceParams, asymmetry_factor, params_from_budget, source_entropy, stationary  # noqa: E402
