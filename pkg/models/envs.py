"""
Pydantic models for game builders.
"""
from typing import List, Literal

from pydantic import BaseModel, Field


class GridSpec(BaseModel):
    """n x n grid with one shared token moved by majority vote of the agents."""
    n: int = Field(5, ge=2)
    n_agents: int = Field(3, ge=1)
    p_slip: float = Field(0.05, ge=0.0, le=1.0)
    initial: Literal["uniform", "corner"] = "uniform"
    discount: float = Field(0.95, gt=0.0, lt=1.0)


class RandomGameSpec(BaseModel):
    seed: int
    n_states: int = Field(..., ge=1)
    action_counts: List[int]
    gamma: float = Field(0.9, gt=0.0, lt=1.0)
    concentration: float = Field(1.0, gt=0.0)
