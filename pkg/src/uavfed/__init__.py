"""uavfed: asynchronous federated learning over multi-UAV networks.

Simulates air-to-ground channels, per-round latency and cost accounting,
synchronous/asynchronous federated rounds with real toy-scale local
training, and an asynchronous advantage actor-critic scheduler for joint
device selection, UAV placement, subchannel and power allocation.
"""

from .backend import backend_name
from .config import DataConfig, RLConfig, SimConfig
from .env import Env, build_env
from .errors import (
    EmptyContributionError,
    EmptyDatasetError,
    EmptySelectionError,
    InvalidConfigError,
    NonFiniteGradientError,
    ShapeMismatchError,
    UavFedError,
    ZeroRateError,
)

__version__ = "0.1.0"

__all__ = [
    "DataConfig",
    "Env",
    "EmptyContributionError",
    "EmptyDatasetError",
    "EmptySelectionError",
    "InvalidConfigError",
    "NonFiniteGradientError",
    "RLConfig",
    "ShapeMismatchError",
    "SimConfig",
    "UavFedError",
    "ZeroRateError",
    "backend_name",
    "build_env",
    "__version__",
]
