"""Online load balancing under random and adversarial arrival orders."""

from .core import Instance, Job, apply, machine_loads, makespan, validate
from .exceptions import (
    ConfigError,
    GuessTooSmallError,
    IncompleteAssignmentError,
    InfeasibleAssignmentError,
    InfeasibleInstanceError,
    InvalidScheduleError,
    LoadBalError,
    ProtocolError,
    SizeLimitError,
)
from .graphbal import GreedyScheduler, Orientation, Tree, graph_to_instance, greedy_run, tree_opt_orientation
from .potential import PotentialParams, SoftmaxScheduler, choose_a, doubling_wrap, psi, softmax_run

__version__ = "0.1.0"
