"""
Pydantic models for occupancy measures, Q-tables and policy gradients.
"""
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel


class OccupancySet(BaseModel):
    """State occupancy d and per-agent marginals lambda_i(s, a_i) = d(s) pi_i(a_i|s)."""
    state_occ: np.ndarray
    marginals: List[np.ndarray]
    kind: Literal["exact", "estimated"] = "exact"
    n_trajectories: Optional[int] = None
    horizon: Optional[int] = None

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @property
    def n_agents(self) -> int:
        return len(self.marginals)

    def with_marginal(self, i: int, marginal: np.ndarray) -> "OccupancySet":
        marginals = list(self.marginals)
        marginals[i] = marginal
        return OccupancySet.construct(
            state_occ=self.state_occ,
            marginals=marginals,
            kind=self.kind,
            n_trajectories=self.n_trajectories,
            horizon=self.horizon,
        )


class QTable(BaseModel):
    """Q over (state, joint action) for one extended reward, plus per-agent averages."""
    q: np.ndarray
    v: np.ndarray
    averaged: List[np.ndarray]
    reward_agent: int

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    def averaged_for(self, i: int) -> np.ndarray:
        return self.averaged[i]


class PolicyGradient(BaseModel):
    """Gradient of u_i with respect to the direct parameters pi_i(a_i|s)."""
    agent: int
    table: np.ndarray
    provenance: Literal["exact", "onpolicy", "generative", "finite-difference", "truncated"]
    n_trajectories: Optional[int] = None
    horizon: Optional[int] = None

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False
