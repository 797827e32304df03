"""
Pydantic models for the learner: run configuration, broadcast mailbox and traces.
"""
import threading
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr, root_validator

LearnerMode = Literal["exact", "onpolicy", "generative"]

TRACE_COLUMNS = ["iter", "potential", "ne_gap", "grad_map_norm", "occ_gap", "kl_occ_gap", "samples"]


class InnerSolverConfig(BaseModel):
    """Projected gradient ascent used for best-response solves."""
    stepsize: float = Field(0.05, gt=0.0)
    max_iter: int = Field(5000, ge=1)
    tol: float = Field(1e-6, gt=0.0)
    strict: bool = False


class LearnerConfig(BaseModel):
    mode: LearnerMode = "exact"
    eta: float = Field(0.01, gt=0.0)
    T: int = Field(200, ge=0)
    M: int = Field(512, ge=1)
    H: int = Field(20, ge=1)
    alpha: float = Field(0.0, ge=0.0, lt=1.0)
    seed: int = 0
    eval_every: int = Field(1, ge=1)
    ne_gap: bool = True
    inner: InnerSolverConfig = Field(default_factory=InnerSolverConfig)
    threads: int = Field(1, ge=1)
    stepsize_guard: bool = True

    @root_validator(skip_on_failure=True)
    def onpolicy_needs_exploration(cls, values):
        if values.get("mode") == "onpolicy" and values.get("alpha", 0.0) <= 0.0:
            raise ValueError("on-policy mode requires a positive greedy floor alpha")
        return values


class Mailbox(BaseModel):
    """Per-agent broadcast slots for one iteration.

    `reads` counts accesses to other agents' slots; workers may read concurrently.
    """
    occupancies: List[Optional[np.ndarray]]
    policies: List[Optional[np.ndarray]]
    _reads: int = PrivateAttr(default=0)
    _lock: Any = PrivateAttr(default_factory=threading.Lock)

    class Config:
        arbitrary_types_allowed = True

    @classmethod
    def empty(cls, n_agents: int) -> "Mailbox":
        return cls(occupancies=[None] * n_agents, policies=[None] * n_agents)

    @property
    def reads(self) -> int:
        return self._reads

    def post(self, agent: int, occupancy: np.ndarray, policy: Optional[np.ndarray] = None) -> None:
        self.occupancies[agent] = occupancy
        self.policies[agent] = policy

    def _count_read(self) -> None:
        with self._lock:
            self._reads += 1

    def read_occupancy(self, agent: int) -> np.ndarray:
        self._count_read()
        if self.occupancies[agent] is None:
            raise KeyError(f"No occupancy broadcast from agent {agent}")
        return self.occupancies[agent]

    def read_policy(self, agent: int) -> np.ndarray:
        self._count_read()
        if self.policies[agent] is None:
            raise KeyError(f"No policy broadcast from agent {agent}")
        return self.policies[agent]


class TraceRow(BaseModel):
    iter: int
    potential: Optional[float] = None
    utilities: List[float] = Field(default_factory=list)
    ne_gap: Optional[float] = None
    grad_map_norm: Optional[float] = None
    occ_gap: Optional[float] = None
    kl_occ_gap: Optional[float] = None
    wall_clock: float = 0.0
    samples: int = 0


class RunTrace(BaseModel):
    rows: List[TraceRow] = Field(default_factory=list)
    final_policy: Optional[Any] = None

    class Config:
        arbitrary_types_allowed = True

    def column(self, name: str) -> List[Optional[float]]:
        return [getattr(row, name) for row in self.rows]

    def average(self, name: str) -> Optional[float]:
        values = [v for v in self.column(name) if v is not None]
        return float(np.mean(values)) if values else None


class RunManifest(BaseModel):
    config: Dict[str, Any]
    version: str
    seed: int
    started_at: datetime = Field(default_factory=datetime.utcnow)
