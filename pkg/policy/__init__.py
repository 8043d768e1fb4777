from .mlp import (
    DimensionError,
    MlpSpec,
    init_params,
    mlp_forward,
    mlp_forward_backward,
    param_groups,
    total_param_count,
)
