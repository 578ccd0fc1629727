"""Exception hierarchy shared by every module."""


class LoadBalError(Exception):
    """Base class for all errors raised by :mod:`loadbal`."""


class IncompleteAssignmentError(LoadBalError):
    """A job was left unassigned where a total assignment is required."""


class InfeasibleAssignmentError(LoadBalError):
    """A job was placed on a machine where its load is infinite."""


class InfeasibleInstanceError(LoadBalError):
    """The instance admits no feasible assignment at all."""


class GuessTooSmallError(InfeasibleInstanceError):
    """No machine is feasible for a job under the current OPT guess."""


class SizeLimitError(LoadBalError):
    """A generator or solver refused a problem beyond desk scale."""


class InvalidScheduleError(LoadBalError):
    """An arrival schedule is not a bijection on the items it should cover."""


class ProtocolError(LoadBalError):
    """An interactive adversary received choices it never offered."""


class ConfigError(LoadBalError):
    """An experiment configuration is malformed or inconsistent."""
