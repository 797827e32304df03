"""
Pydantic models for games, policies and trajectories.
"""
from enum import Enum
from functools import reduce
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field


class TransitionRow(BaseModel):
    """One row P(.|s, a) of a game file."""
    state: int = Field(..., ge=0)
    joint_action: List[int] = Field(..., description="Per-agent action indices")
    probs: List[float]


class GameFile(BaseModel):
    """Raw game description as read from a game file."""
    n_agents: int = Field(..., gt=0)
    n_states: int = Field(..., gt=0)
    action_counts: List[int]
    gamma: float = Field(..., gt=0, lt=1)
    mu: List[float]
    transition: List[TransitionRow]


class GameSpec(BaseModel):
    """Validated tabular game (N, S, {A_i}, P, mu, gamma).

    `transition` has shape (|S|, prod |A_i|, |S|); joint actions use the
    row-major mixed-radix encoding over (a_1, ..., a_N).
    """
    n_agents: int
    n_states: int
    action_counts: Tuple[int, ...]
    transition: np.ndarray
    initial_dist: np.ndarray
    discount: float

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @property
    def n_joint_actions(self) -> int:
        return int(np.prod(self.action_counts))

    @property
    def joint_shape(self) -> Tuple[int, ...]:
        return (self.n_states,) + tuple(self.action_counts)

    def joint_index(self, actions) -> int:
        return int(np.ravel_multi_index(tuple(int(a) for a in actions), self.action_counts))

    def joint_action(self, index: int) -> Tuple[int, ...]:
        return tuple(int(a) for a in np.unravel_index(int(index), self.action_counts))

    def with_initial(self, initial_dist: np.ndarray) -> "GameSpec":
        """Same dynamics under another initial distribution (caller validates it)."""
        mu = np.array(initial_dist, dtype=float)
        mu.setflags(write=False)
        return GameSpec(
            n_agents=self.n_agents,
            n_states=self.n_states,
            action_counts=self.action_counts,
            transition=self.transition,
            initial_dist=mu,
            discount=self.discount,
        )


class GreedyFloor(BaseModel):
    """The alpha of the alpha-greedy policy set."""
    alpha: float = Field(0.0, ge=0.0, le=1.0)

    def floor(self, n_actions: int) -> float:
        return self.alpha / n_actions

    def contains(self, table: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.all(table >= self.floor(table.shape[1]) - tol))


class JointPolicy(BaseModel):
    """Product-form joint policy: one |S| x |A_i| table per agent."""
    tables: List[np.ndarray]

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @property
    def n_agents(self) -> int:
        return len(self.tables)

    @classmethod
    def uniform(cls, game: GameSpec) -> "JointPolicy":
        tables = []
        for n_actions in game.action_counts:
            table = np.full((game.n_states, n_actions), 1.0 / n_actions)
            table.setflags(write=False)
            tables.append(table)
        return cls(tables=tables)

    @classmethod
    def unchecked(cls, tables: List[np.ndarray]) -> "JointPolicy":
        """Wrap tables without validation (finite-difference perturbations)."""
        return cls.construct(tables=list(tables))

    def agent(self, i: int) -> np.ndarray:
        return self.tables[i]

    def with_agent(self, i: int, table: np.ndarray) -> "JointPolicy":
        tables = list(self.tables)
        tables[i] = table
        return JointPolicy.construct(tables=tables)

    def others(self, i: int) -> List[np.ndarray]:
        return [t for j, t in enumerate(self.tables) if j != i]

    def joint_matrix(self) -> np.ndarray:
        """Dense pi(a|s) over (state, joint action). Only for small games."""
        n_states = self.tables[0].shape[0]
        return reduce(
            lambda acc, t: (acc[:, :, None] * t[:, None, :]).reshape(n_states, -1),
            self.tables[1:],
            self.tables[0],
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tables])


class StartMode(str, Enum):
    INITIAL_DIST = "initial-dist"
    STATE_AGENT_ACTION = "fixed-state-agent-action"
    STATE_JOINT_ACTION = "fixed-state-joint-action"


class TrajectoryStart(BaseModel):
    """How the first (state, joint action) of a trajectory is chosen."""
    mode: StartMode = StartMode.INITIAL_DIST
    state: Optional[int] = None
    agent: Optional[int] = None
    action: Optional[int] = None
    joint_action: Optional[List[int]] = None


class Trajectory(BaseModel):
    """One sampled trajectory of length H."""
    states: np.ndarray
    actions: np.ndarray
    start_mode: StartMode

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @property
    def horizon(self) -> int:
        return int(self.states.shape[0])

    @property
    def steps(self) -> List[Tuple[int, Tuple[int, ...]]]:
        return [(int(s), tuple(int(a) for a in acts)) for s, acts in zip(self.states, self.actions)]


class TrajectoryBatch(BaseModel):
    """M trajectories sampled together.

    states: (M, H); actions: (M, H, N) per-agent actions; joint: (M, H)
    mixed-radix joint-action indices.
    """
    states: np.ndarray
    actions: np.ndarray
    joint: np.ndarray
    start_mode: StartMode

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @property
    def size(self) -> int:
        return int(self.states.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.states.shape[1])

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory(states=self.states[k], actions=self.actions[k], start_mode=self.start_mode)
