from .mass_spring import MassSpringSpec, MassSpringState, Spring, ms_rollout, ms_rollout_grad, ms_step, square_robot
from .pendulum import GapSpec, PendulumSpec, PendulumState, pendulum_rollout, pendulum_rollout_grad, perturb_spec
from .rollout import RolloutResult, SimulationError
