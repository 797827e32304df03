"""
Pydantic models for run-config files.
"""
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field

from models.learner import InnerSolverConfig, LearnerConfig, LearnerMode
from models.utility import UtilityConfig


class RunConfig(BaseModel):
    """Contents of a run-config JSON file.

    `game` is a path to a game file (relative to the config file) or a
    builder block such as {"builder": "grid", "n": 5, "n_agents": 3}.
    `utilities` is one block per agent or a single block shared by all.
    """
    game: Union[str, Dict[str, Any]]
    utilities: Union[List[UtilityConfig], UtilityConfig]
    mode: LearnerMode = "exact"
    eta: float = Field(0.01, gt=0.0)
    T: int = Field(200, ge=0)
    M: int = Field(512, ge=1)
    H: int = Field(20, ge=1)
    alpha: float = Field(0.0, ge=0.0, lt=1.0)
    seed: int = 0
    eval_every: int = Field(1, ge=1)
    epsilon_kl: float = Field(1e-6, gt=0.0)
    ne_gap: bool = True
    inner: InnerSolverConfig = Field(default_factory=InnerSolverConfig)
    threads: int = Field(1, ge=1)
    init: Optional[str] = None

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(
            mode=self.mode,
            eta=self.eta,
            T=self.T,
            M=self.M,
            H=self.H,
            alpha=self.alpha,
            seed=self.seed,
            eval_every=self.eval_every,
            ne_gap=self.ne_gap,
            inner=self.inner,
            threads=self.threads,
        )
