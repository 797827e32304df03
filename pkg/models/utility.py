"""
Pydantic models for general utilities and their pseudo-rewards.
"""
from typing import Callable, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

UtilityKind = Literal[
    "imitation",
    "consensus_diversity",
    "team_aggregate",
    "team_coverage",
    "collective_exploration",
    "composite",
    "linear_reward",
]


class UtilitySpec(BaseModel):
    """F_i(lambda_1, ..., lambda_N, pi_{-i}) for agent `agent_index`.

    Coefficient names follow the composite utility
    -a KL(l_i||q_i) - b KL(l_i||l_bar) + c h(sum_j W_ij l_j) + g(pi_{-i}).
    """
    kind: UtilityKind
    agent_index: int = Field(..., ge=0)
    imitation_coef: float = Field(0.0, ge=0.0)
    consensus_coef: float = Field(0.0, ge=0.0)
    aggregate_coef: float = Field(0.0, ge=0.0)
    # q_i over (state, own action)
    imitation_target: Optional[np.ndarray] = None
    # lambda_target over (state, action) for coverage
    coverage_target: Optional[np.ndarray] = None
    # w for lambda_bar = sum_j w_j lambda_j
    weights: Optional[np.ndarray] = None
    # row-stochastic W for the team aggregate
    mixing: Optional[np.ndarray] = None
    inner: Literal["entropy", "linear"] = "entropy"
    inner_coef: Optional[np.ndarray] = None
    reward: Optional[np.ndarray] = None
    penalty: Optional[Callable[[List[np.ndarray]], float]] = None
    epsilon_kl: float = Field(1e-6, gt=0.0)
    common_interest: bool = False

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False


class PseudoReward(BaseModel):
    """r_bar_{i,j} = grad_{lambda_j} F_i, a vector over (state, a_j)."""
    values: np.ndarray
    agent: int
    wrt: int

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)


class SmoothnessBound(BaseModel):
    l_inf: float
    lipschitz: float
    empirical: bool = False


class PenaltyConfig(BaseModel):
    kind: Literal["others_entropy"] = "others_entropy"
    coef: float = Field(0.0, ge=0.0)


class UtilityConfig(BaseModel):
    """Utility block of a run-config file."""
    kind: UtilityKind
    coefficients: dict = Field(default_factory=dict)
    targets: Union[Literal["uniform"], List[List[List[float]]]] = "uniform"
    target: Union[Literal["uniform"], List[List[float]]] = "uniform"
    w: Union[Literal["uniform"], List[float]] = "uniform"
    W: Union[Literal["uniform", "identity"], List[List[float]]] = "uniform"
    inner: Literal["entropy", "linear"] = "entropy"
    inner_coef: Optional[List[List[float]]] = None
    reward: Optional[List[List[float]]] = None
    penalty: Optional[PenaltyConfig] = None
    common_interest: Optional[bool] = None
