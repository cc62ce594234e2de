from .core import EVAL, TRAIN, MlpNetwork, RmspropState, init_network, mlp_backward, mlp_forward, rmsprop_step
from .dsl import (
    DslLayer,
    DslNetwork,
    build_dsl_layer,
    build_dsl_network,
    dsl_backward,
    dsl_forward,
    dsl_network_backward,
    dsl_network_forward,
    scaling_factors,
)

__all__ = [
    "EVAL",
    "TRAIN",
    "MlpNetwork",
    "RmspropState",
    "init_network",
    "mlp_backward",
    "mlp_forward",
    "rmsprop_step",
    "DslLayer",
    "DslNetwork",
    "build_dsl_layer",
    "build_dsl_network",
    "dsl_backward",
    "dsl_forward",
    "dsl_network_backward",
    "dsl_network_forward",
    "scaling_factors",
]
