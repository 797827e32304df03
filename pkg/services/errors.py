"""
Error types raised by the GUMG services.
"""
from typing import Optional, Sequence


class GumgError(Exception):
    """Base class for every error raised by the engine."""


class GameValidationError(GumgError):
    """A game description violates a GameSpec invariant."""


class NonStochasticRow(GameValidationError):
    def __init__(self, state: int, joint_action: Sequence[int], total: float):
        self.state = state
        self.joint_action = tuple(joint_action)
        self.total = total
        super().__init__(
            f"Transition row P(.|s={state}, a={self.joint_action}) sums to {total!r}, expected 1"
        )


class NegativeEntry(GameValidationError):
    def __init__(self, where: str, value: float):
        self.where = where
        self.value = value
        super().__init__(f"Negative probability {value!r} in {where}")


class MissingTransitionRow(GameValidationError):
    def __init__(self, state: int, joint_action: Sequence[int]):
        self.state = state
        self.joint_action = tuple(joint_action)
        super().__init__(f"Missing transition row for state={state}, joint_action={self.joint_action}")


class DimensionMismatch(GumgError):
    """Array shapes disagree with the declared game dimensions."""


class InfeasibleFloor(GumgError):
    def __init__(self, size: int, floor: float):
        self.size = size
        self.floor = floor
        super().__init__(f"Floor {floor!r} is infeasible for {size} actions (K*floor = {size * floor!r} > 1)")


class SingularSystem(GumgError):
    """The Bellman flow system could not be solved."""


class EmptyBatch(GumgError):
    """An estimator received no trajectories."""


class ZeroProbabilityAction(GumgError):
    def __init__(self, agent: int, state: int, action: int):
        self.agent = agent
        self.state = state
        self.action = action
        super().__init__(f"Agent {agent} sampled action {action} in state {state} with zero probability")


class UnsupportedKind(GumgError):
    """The operation is not defined for this utility kind."""


class InnerNotConverged(GumgError):
    def __init__(self, agent: int, surplus: float, iterations: int):
        self.agent = agent
        self.surplus = surplus
        self.iterations = iterations
        super().__init__(
            f"Best-response solve for agent {agent} stopped after {iterations} iterations "
            f"with FOS surplus {surplus:.3e}"
        )


class ConfigError(GumgError):
    def __init__(self, path: str, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.path = path
        self.line = line
        self.column = column
        location = f"{path}:{line}:{column}" if line is not None else path
        super().__init__(f"{location}: {message}")


class PolicyFileError(GumgError):
    def __init__(self, message: str, agent: Optional[int] = None, state: Optional[int] = None):
        self.agent = agent
        self.state = state
        where = f" (agent={agent}, state={state})" if agent is not None else ""
        super().__init__(f"{message}{where}")


class StepsizeWarning(UserWarning):
    """The stepsize exceeds 1/beta."""


class InvalidUtility(GumgError):
    """Utility parameters violate their invariants (weights, targets, mixing matrix)."""
