"""
Occupancy service: exact and Monte-Carlo occupancy measures and Q-values.
"""
import logging
from typing import List, Optional

import numpy as np
from scipy import linalg

from models.game import GameSpec, JointPolicy, TrajectoryBatch
from models.occupancy import OccupancySet, QTable
from services.errors import DimensionMismatch, EmptyBatch, SingularSystem
from services.game_service import marginalize_actions

logger = logging.getLogger(__name__)


class OccupancyService:
    """Occupancy measures, value functions and their truncated counterparts."""

    def state_transition(self, game: GameSpec, policy: JointPolicy) -> np.ndarray:
        """P_pi(s'|s) = sum_a pi(a|s) P(s'|s,a)."""
        tensor = game.transition.reshape(game.joint_shape + (game.n_states,))
        return marginalize_actions(tensor, policy.tables)

    def _solve(self, matrix: np.ndarray, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        try:
            lu = linalg.lu_factor(matrix, check_finite=True)
            solution = linalg.lu_solve(lu, rhs, trans=1 if transpose else 0)
        except (linalg.LinAlgError, ValueError) as e:
            raise SingularSystem(f"Bellman system could not be solved: {e}") from e
        if not np.all(np.isfinite(solution)):
            raise SingularSystem("Bellman system produced non-finite values")
        return solution

    def exact_state_occupancy(self, game: GameSpec, policy: JointPolicy) -> np.ndarray:
        """Solve d = (1-gamma) mu + gamma P_pi^T d."""
        p_pi = self.state_transition(game, policy)
        system = np.eye(game.n_states) - game.discount * p_pi
        return self._solve(system, (1.0 - game.discount) * game.initial_dist, transpose=True)

    def exact_marginals(self, game: GameSpec, policy: JointPolicy) -> OccupancySet:
        d = self.exact_state_occupancy(game, policy)
        return self.marginals_from_state(d, policy, kind="exact")

    def marginals_from_state(
        self,
        state_occ: np.ndarray,
        policy: JointPolicy,
        kind: str = "exact",
        n_trajectories: Optional[int] = None,
        horizon: Optional[int] = None,
    ) -> OccupancySet:
        """lambda_j(s, a_j) = d(s) pi_j(a_j|s) prod_{k != j} sum_a pi_k(a|s).

        Summing the joint occupancy over the other agents leaves their row
        masses, which are one on the simplex and not off it.
        """
        row_mass = [table.sum(axis=1) for table in policy.tables]
        marginals = []
        for j, table in enumerate(policy.tables):
            weight = np.array(state_occ, dtype=float)
            for k, mass in enumerate(row_mass):
                if k != j:
                    weight = weight * mass
            marginals.append(weight[:, None] * table)
        return OccupancySet.construct(
            state_occ=state_occ,
            marginals=marginals,
            kind=kind,
            n_trajectories=n_trajectories,
            horizon=horizon,
        )

    def joint_occupancy(self, game: GameSpec, policy: JointPolicy) -> np.ndarray:
        """Dense lambda(s, a) over joint actions; only for small games."""
        d = self.exact_state_occupancy(game, policy)
        return d[:, None] * policy.joint_matrix()

    def estimate_state_occupancy(self, batch: TrajectoryBatch, discount: float, n_states: int) -> np.ndarray:
        """d_hat(s) = (1-gamma)/M sum_k sum_{t<H} gamma^t 1{s_t^k = s}."""
        if batch.size == 0:
            raise EmptyBatch("Cannot estimate occupancy from zero trajectories")
        weights = np.broadcast_to(discount ** np.arange(batch.horizon), batch.states.shape)
        counts = np.bincount(batch.states.ravel(), weights=weights.ravel(), minlength=n_states)
        return (1.0 - discount) * counts / batch.size

    def estimate_occupancy(
        self,
        batches: List[TrajectoryBatch],
        game: GameSpec,
        policy: JointPolicy,
    ) -> OccupancySet:
        """Occupancy estimate from one or more batches sharing a horizon."""
        batches = [b for b in batches if b.size > 0]
        if not batches:
            raise EmptyBatch("Cannot estimate occupancy from zero trajectories")
        horizons = {b.horizon for b in batches}
        if len(horizons) != 1:
            raise DimensionMismatch(f"Trajectories have different horizons: {sorted(horizons)}")
        total = sum(b.size for b in batches)
        d_hat = sum(
            self.estimate_state_occupancy(b, game.discount, game.n_states) * b.size for b in batches
        ) / total
        return self.marginals_from_state(
            d_hat, policy, kind="estimated", n_trajectories=total, horizon=horizons.pop()
        )

    # --- value functions -----------------------------------------------

    def extend_reward(self, game: GameSpec, reward: np.ndarray, agent: int) -> np.ndarray:
        """r_tilde(s, a) = r(s, a_agent) as an (S, joint action) table."""
        expected = (game.n_states, game.action_counts[agent])
        if reward.shape != expected:
            raise DimensionMismatch(f"Reward for agent {agent} has shape {reward.shape}, expected {expected}")
        shape = [1] * (game.n_agents + 1)
        shape[0] = game.n_states
        shape[agent + 1] = game.action_counts[agent]
        return np.broadcast_to(reward.reshape(shape), game.joint_shape).reshape(game.n_states, -1)

    def q_from_joint_reward(self, game: GameSpec, policy: JointPolicy, joint_reward: np.ndarray) -> QTable:
        """Q = r + gamma P V with V = (I - gamma P_pi)^{-1} r_pi."""
        tensor = joint_reward.reshape(game.joint_shape)
        r_pi = marginalize_actions(tensor, policy.tables)
        p_pi = self.state_transition(game, policy)
        v = self._solve(np.eye(game.n_states) - game.discount * p_pi, r_pi)
        q = joint_reward + game.discount * game.transition @ v
        q_tensor = q.reshape(game.joint_shape)
        averaged = [marginalize_actions(q_tensor, policy.tables, skip=i) for i in range(game.n_agents)]
        return QTable.construct(q=q, v=v, averaged=averaged, reward_agent=-1)

    def exact_q_values(self, game: GameSpec, policy: JointPolicy, reward: np.ndarray, agent: int) -> QTable:
        """Q for the reward r over (s, a_agent) extended to joint actions."""
        table = self.q_from_joint_reward(game, policy, self.extend_reward(game, np.asarray(reward, dtype=float), agent))
        return QTable.construct(q=table.q, v=table.v, averaged=table.averaged, reward_agent=agent)

    def expected_value(self, game: GameSpec, policy: JointPolicy, reward: np.ndarray, agent: int) -> float:
        """(1-gamma) mu^T V, which equals <lambda_agent, r>."""
        table = self.exact_q_values(game, policy, reward, agent)
        return float((1.0 - game.discount) * game.initial_dist @ table.v)

    # --- truncated quantities -------------------------------------------

    def truncated_state_distributions(
        self,
        game: GameSpec,
        policy: JointPolicy,
        horizon: int,
        initial_dist: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """Rows t = 0..H-1 hold P(s_t = .) under mu."""
        p_pi = self.state_transition(game, policy)
        dists = np.empty((horizon, game.n_states))
        current = np.array(game.initial_dist if initial_dist is None else initial_dist, dtype=float)
        for t in range(horizon):
            dists[t] = current
            current = current @ p_pi
        return dists

    def truncated_state_occupancy(self, game: GameSpec, policy: JointPolicy, horizon: int) -> np.ndarray:
        """E[d_hat] = (1-gamma) sum_{t<H} gamma^t P(s_t = .)."""
        dists = self.truncated_state_distributions(game, policy, horizon)
        return (1.0 - game.discount) * (game.discount ** np.arange(horizon)) @ dists

    def truncated_q_values(
        self,
        game: GameSpec,
        policy: JointPolicy,
        joint_reward: np.ndarray,
        horizon: int,
    ) -> List[np.ndarray]:
        """k-step truncated Q tables for k = 0..H; entry k sums rewards over k steps."""
        tables = [np.zeros_like(joint_reward)]
        v = np.zeros(game.n_states)
        for _ in range(horizon):
            q = joint_reward + game.discount * game.transition @ v
            tables.append(q)
            v = marginalize_actions(q.reshape(game.joint_shape), policy.tables)
        return tables


# Global service instance
occupancy_service = OccupancyService()
