from .cma import CmaState, cma_ask, cma_init, cma_tell
from .estimators import (
    EstimatorError,
    PerturbationBatch,
    evaluate_antithetic,
    ges_gradient_estimate,
    vanilla_es_gradient,
)
from .pool import EvalPool
from .runners import (
    RunAborted,
    RunRecord,
    RunResult,
    cma_es_run,
    first_order_run,
    guided_es_run,
    sim_guided_real_run,
    vanilla_es_run,
)
from .sampling import GesConfig, sample_perturbation, search_covariance, substream
from .subspace import GuidingSubspace, orthonormal_basis, subspace_update
