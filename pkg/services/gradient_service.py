"""
Gradient service: exact multi-agent policy gradients, sampled estimators and test oracles.
"""
import logging
from typing import List, Literal, Optional, Sequence

import numpy as np

from models.game import GameSpec, JointPolicy, StartMode, TrajectoryBatch, TrajectoryStart
from models.learner import Mailbox
from models.occupancy import OccupancySet, PolicyGradient
from models.utility import UtilitySpec
from services.errors import DimensionMismatch, EmptyBatch, ZeroProbabilityAction
from services.game_service import game_service, marginalize_actions, spawn_rng
from services.occupancy_service import occupancy_service
from services.utility_service import utility_service

logger = logging.getLogger(__name__)


class GradientService:
    """Gradients of u_i(pi) = F_i(lambda(pi), pi_{-i}) with respect to pi_i."""

    def _joint_reward(self, game: GameSpec, rewards: Sequence[np.ndarray]) -> np.ndarray:
        """R_i(s, a) = sum_j r_{i,j}(s, a_j) over (state, joint action)."""
        total = np.zeros((game.n_states, game.n_joint_actions))
        for j, reward in enumerate(rewards):
            if np.any(reward):
                total = total + occupancy_service.extend_reward(game, reward, j)
        return total

    def _rewards(self, spec: UtilitySpec, occupancies) -> List[np.ndarray]:
        return [r.values for r in utility_service.pseudo_rewards(spec, occupancies)]

    def exact_gradient(
        self, game: GameSpec, utilities: Sequence[UtilitySpec], policy: JointPolicy, i: int
    ) -> PolicyGradient:
        """d(s) * sum_j Q_bar_{s,a_i}(r_bar_{i,j}) at exact occupancies."""
        d = occupancy_service.exact_state_occupancy(game, policy)
        occupancies = occupancy_service.marginals_from_state(d, policy)
        joint_reward = self._joint_reward(game, self._rewards(utilities[i], occupancies))
        q_table = occupancy_service.q_from_joint_reward(game, policy, joint_reward)
        table = d[:, None] * q_table.averaged_for(i)
        return PolicyGradient(agent=i, table=table, provenance="exact")

    def exact_gradients(self, game: GameSpec, utilities: Sequence[UtilitySpec], policy: JointPolicy) -> List[np.ndarray]:
        """v(pi) as one table per agent."""
        return [self.exact_gradient(game, utilities, policy, i).table for i in range(game.n_agents)]

    # --- sampled estimators ---------------------------------------------------

    def _occupancies_for(
        self,
        spec: UtilitySpec,
        i: int,
        own: np.ndarray,
        shapes: Sequence[tuple],
        mailbox: Optional[Mailbox],
        fallback: Optional[OccupancySet] = None,
    ) -> List[np.ndarray]:
        """Own estimate plus broadcast estimates of the others when F_i reads them."""
        marginals = [np.zeros(shape) for shape in shapes]
        marginals[i] = own
        if not utility_service.couples_agents(spec):
            return marginals
        for j in range(len(shapes)):
            if j == i:
                continue
            if mailbox is not None:
                marginals[j] = mailbox.read_occupancy(j)
            elif fallback is not None:
                marginals[j] = fallback.marginals[j]
            else:
                raise DimensionMismatch(f"Utility of agent {i} reads lambda_{j} but no broadcast is available")
        return marginals

    def onpolicy_gradient(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        i: int,
        M: int,
        H: int,
        rng: Optional[np.random.Generator] = None,
        mailbox: Optional[Mailbox] = None,
        batch: Optional[TrajectoryBatch] = None,
        occupancies: Optional[OccupancySet] = None,
        trajectory_weights: Optional[np.ndarray] = None,
    ) -> PolicyGradient:
        """REINFORCE-style estimate (1-gamma)/M sum_k sum_t gamma^t R_i(s_t, a_t) psi_i^t.

        The same batch feeds the own occupancy estimate and the gradient.
        `occupancies` replaces the estimates (bias checks), and
        `trajectory_weights` replaces the uniform 1/M average (exhaustive
        enumeration).
        """
        if batch is None:
            if rng is None:
                raise ValueError("onpolicy_gradient needs either a batch or a generator")
            batch = game_service.sample_batch(game, policy, M, H, rng)
        if batch.size == 0:
            raise EmptyBatch("On-policy estimator received no trajectories")
        spec = utilities[i]
        shapes = [(game.n_states, c) for c in game.action_counts]

        if occupancies is not None:
            marginals = list(occupancies.marginals)
        else:
            d_hat = occupancy_service.estimate_state_occupancy(batch, game.discount, game.n_states)
            own = d_hat[:, None] * policy.agent(i)
            marginals = self._occupancies_for(spec, i, own, shapes, mailbox)
        rewards = self._rewards(spec, marginals)

        per_step = np.zeros(batch.states.shape)
        for j, reward in enumerate(rewards):
            if np.any(reward):
                per_step += reward[batch.states, batch.actions[:, :, j]]

        table = np.zeros(shapes[i])
        if np.any(per_step):
            discounted = per_step * game.discount ** np.arange(batch.horizon)
            # G_t = sum_{t' >= t} gamma^t' R_t'
            tail = np.cumsum(discounted[:, ::-1], axis=1)[:, ::-1]
            own_actions = batch.actions[:, :, i]
            probs = policy.agent(i)[batch.states, own_actions]
            if np.any(probs <= 0):
                k, t = np.argwhere(probs <= 0)[0]
                raise ZeroProbabilityAction(i, int(batch.states[k, t]), int(own_actions[k, t]))
            if trajectory_weights is None:
                weights = np.full(batch.size, 1.0 / batch.size)
            else:
                weights = np.asarray(trajectory_weights, dtype=float)
            contributions = tail / probs * weights[:, None]
            np.add.at(table, (batch.states, own_actions), contributions)
            table *= 1.0 - game.discount
        return PolicyGradient(
            agent=i, table=table, provenance="onpolicy", n_trajectories=batch.size, horizon=batch.horizon
        )

    def generative_gradient(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        i: int,
        M: int,
        H: int,
        rng: np.random.Generator,
        mailbox: Optional[Mailbox] = None,
        d_batch: Optional[TrajectoryBatch] = None,
    ) -> PolicyGradient:
        """d_hat(s) * sum_j q_hat(s, a_i) with simulator restarts from every (s, a_i).

        One mu-started batch gives d_hat for every cell; each cell uses its
        own derived generator so cells are order-independent.
        """
        spec = utilities[i]
        shapes = [(game.n_states, c) for c in game.action_counts]
        if d_batch is None:
            d_batch = game_service.sample_batch(game, policy, M, H, rng)
        d_hat = occupancy_service.estimate_state_occupancy(d_batch, game.discount, game.n_states)
        fallback = occupancy_service.marginals_from_state(d_hat, policy, kind="estimated")
        marginals = self._occupancies_for(spec, i, d_hat[:, None] * policy.agent(i), shapes, mailbox, fallback)
        rewards = self._rewards(spec, marginals)

        table = np.zeros(shapes[i])
        active = [(j, r) for j, r in enumerate(rewards) if np.any(r)]
        if not active:
            return PolicyGradient(agent=i, table=table, provenance="generative", n_trajectories=M, horizon=H)

        base = int(rng.integers(np.iinfo(np.int64).max))
        discounts = game.discount ** np.arange(H)
        for s in range(game.n_states):
            for a in range(shapes[i][1]):
                cell_rng = spawn_rng(base, s * shapes[i][1] + a)
                start = TrajectoryStart(mode=StartMode.STATE_AGENT_ACTION, state=s, agent=i, action=a)
                batch = game_service.sample_batch(game, policy, M, H, cell_rng, start)
                per_step = sum(r[batch.states, batch.actions[:, :, j]] for j, r in active)
                table[s, a] = float(np.mean(per_step @ discounts))
        table *= d_hat[:, None]
        return PolicyGradient(agent=i, table=table, provenance="generative", n_trajectories=M, horizon=H)

    # --- oracles ----------------------------------------------------------------

    def finite_difference_gradient(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        i: int,
        step: float = 1e-6,
    ) -> PolicyGradient:
        """Unconstrained central differences of pi_i -> F_i(lambda(pi), pi_{-i}); O(step^2) error."""
        if not 1e-8 <= step <= 1e-3:
            raise ValueError(f"finite-difference step must lie in [1e-8, 1e-3], got {step}")
        spec = utilities[i]
        base = np.array(policy.agent(i), dtype=float)
        table = np.zeros_like(base)

        def value(perturbed: np.ndarray) -> float:
            moved = JointPolicy.unchecked(policy.with_agent(i, perturbed).tables)
            return utility_service.eval_utility(spec, occupancy_service.exact_marginals(game, moved), moved)

        for s, a in np.ndindex(*base.shape):
            up, down = base.copy(), base.copy()
            up[s, a] += step
            down[s, a] -= step
            table[s, a] = (value(up) - value(down)) / (2.0 * step)
        return PolicyGradient(agent=i, table=table, provenance="finite-difference")

    def truncated_gradient(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        i: int,
        H: int,
        scheme: Literal["onpolicy", "generative"] = "onpolicy",
        occupancies: Optional[OccupancySet] = None,
    ) -> PolicyGradient:
        """Exact expectation of an estimator at horizon H with fixed pseudo-rewards.

        onpolicy:   (1-gamma) sum_{t<H} gamma^t P_t(s) Q_bar^{(H-t)}(s, a_i)
        generative: [(1-gamma) sum_{t<H} gamma^t P_t(s)] Q_bar^{(H)}(s, a_i)
        """
        if occupancies is None:
            occupancies = occupancy_service.exact_marginals(game, policy)
        joint_reward = self._joint_reward(game, self._rewards(utilities[i], occupancies))
        q_tables = occupancy_service.truncated_q_values(game, policy, joint_reward, H)
        averaged = [
            marginalize_actions(q.reshape(game.joint_shape), policy.tables, skip=i) for q in q_tables
        ]
        dists = occupancy_service.truncated_state_distributions(game, policy, H)
        discounts = game.discount ** np.arange(H)
        if scheme == "onpolicy":
            table = sum(discounts[t] * dists[t][:, None] * averaged[H - t] for t in range(H))
        elif scheme == "generative":
            table = (discounts @ dists)[:, None] * averaged[H]
        else:
            raise ValueError(f"Unknown estimator scheme {scheme!r}")
        table = (1.0 - game.discount) * np.asarray(table)
        return PolicyGradient(agent=i, table=table, provenance="truncated", horizon=H)


# Global service instance
gradient_service = GradientService()
