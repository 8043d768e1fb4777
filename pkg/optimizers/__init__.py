from .first_order import FirstOrderOptimizer, NonFiniteGradientError, OptimizerState, opt_step
