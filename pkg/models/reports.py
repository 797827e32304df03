"""
Pydantic models for equilibrium and stationarity diagnostics.
"""
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field


class BestResponse(BaseModel):
    agent: int
    gap: float
    value: float
    best_value: float
    iterations: int
    surplus: float
    converged: bool
    policy: np.ndarray

    class Config:
        arbitrary_types_allowed = True


class GapReport(BaseModel):
    """Per-agent NE gaps; a non-converged inner solve makes its gap a lower bound."""
    per_agent: List[BestResponse]

    @property
    def gaps(self) -> List[float]:
        return [br.gap for br in self.per_agent]

    @property
    def max_gap(self) -> float:
        return max(self.gaps)

    @property
    def lower_bound(self) -> bool:
        return not all(br.converged for br in self.per_agent)

    def summary(self) -> dict:
        return {
            "max_gap": self.max_gap,
            "gaps": self.gaps,
            "iterations": [br.iterations for br in self.per_agent],
            "surplus": [br.surplus for br in self.per_agent],
            "lower_bound": self.lower_bound,
        }


class StationarityReport(BaseModel):
    eta: float
    alpha: float = 0.0
    grad_map_norm: float
    fixed_point_residual: float
    fos_surplus: float
    per_agent_surplus: List[float] = Field(default_factory=list)


class MpeReport(BaseModel):
    per_state: List[GapReport]
    heuristic_states: List[int] = Field(default_factory=list)

    @property
    def max_gap(self) -> float:
        return max(r.max_gap for r in self.per_state)


class ConstantBounds(BaseModel):
    beta: float
    c_loose: float
    l_inf: float
    lipschitz: float
    lipschitz_empirical: bool = False
    local_lipschitz: Optional[float] = None

    @property
    def full_support(self) -> bool:
        return bool(np.isfinite(self.c_loose))
