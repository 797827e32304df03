"""
Game service: validation of game tuples, simplex projections and trajectory sampling.
"""
import itertools
import logging
from typing import List, Optional, Sequence

import numpy as np

from models.game import (
    GameFile,
    GameSpec,
    GreedyFloor,
    JointPolicy,
    StartMode,
    Trajectory,
    TrajectoryBatch,
    TrajectoryStart,
)
from services.errors import (
    DimensionMismatch,
    InfeasibleFloor,
    MissingTransitionRow,
    NegativeEntry,
    NonStochasticRow,
)

logger = logging.getLogger(__name__)


def spawn_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, stream-index).

    Streams are derived with numpy's SeedSequence over the entropy pair
    [seed, stream], so stream k of a run never depends on how many draws
    other streams made.
    """
    return np.random.default_rng([int(seed), int(stream)])


def marginalize_actions(tensor: np.ndarray, tables: Sequence[np.ndarray], skip: Optional[int] = None) -> np.ndarray:
    """Contract the per-agent action axes of `tensor` with policy tables.

    `tensor` has shape (S, A_1, ..., A_N, ...); axis j+1 is contracted with
    tables[j](.|s) for every agent j except `skip`, whose axis is kept.
    """
    result = tensor
    for j in reversed(range(len(tables))):
        if j == skip:
            continue
        axis = j + 1
        shape = [1] * result.ndim
        shape[0] = tables[j].shape[0]
        shape[axis] = tables[j].shape[1]
        result = (result * tables[j].reshape(shape)).sum(axis=axis)
    return result


class GameService:
    """Validation, projections and sampling for tabular games."""

    INPUT_TOL = 1e-12
    ARITHMETIC_TOL = 1e-10

    # --- validation -------------------------------------------------------

    def validate_game(self, raw: GameFile) -> GameSpec:
        """Validate a raw game description and build the dense GameSpec."""
        counts = tuple(raw.action_counts)
        if len(counts) != raw.n_agents:
            raise DimensionMismatch(
                f"action_counts has {len(counts)} entries for n_agents={raw.n_agents}"
            )
        if any(c <= 0 for c in counts):
            raise DimensionMismatch(f"action_counts must be positive, got {list(counts)}")
        if len(raw.mu) != raw.n_states:
            raise DimensionMismatch(f"mu has length {len(raw.mu)} for n_states={raw.n_states}")

        n_joint = int(np.prod(counts))
        transition = np.zeros((raw.n_states, n_joint, raw.n_states))
        seen = np.zeros((raw.n_states, n_joint), dtype=bool)
        for row in raw.transition:
            if row.state >= raw.n_states:
                raise DimensionMismatch(f"Transition row state {row.state} out of range")
            if len(row.joint_action) != raw.n_agents or any(
                not 0 <= a < c for a, c in zip(row.joint_action, counts)
            ):
                raise DimensionMismatch(
                    f"Joint action {row.joint_action} invalid for action_counts {list(counts)}"
                )
            if len(row.probs) != raw.n_states:
                raise DimensionMismatch(
                    f"Row (state={row.state}, joint_action={row.joint_action}) has "
                    f"{len(row.probs)} probabilities for {raw.n_states} states"
                )
            index = int(np.ravel_multi_index(tuple(row.joint_action), counts))
            transition[row.state, index] = row.probs
            seen[row.state, index] = True

        missing = np.argwhere(~seen)
        if missing.size:
            s, index = missing[0]
            raise MissingTransitionRow(int(s), np.unravel_index(int(index), counts))

        return self.validate_arrays(
            transition=transition,
            initial_dist=np.asarray(raw.mu, dtype=float),
            action_counts=counts,
            discount=raw.gamma,
        )

    def validate_arrays(
        self,
        transition: np.ndarray,
        initial_dist: np.ndarray,
        action_counts: Sequence[int],
        discount: float,
        tol: float = INPUT_TOL,
    ) -> GameSpec:
        """Validate dense arrays and freeze them into a GameSpec."""
        counts = tuple(int(c) for c in action_counts)
        transition = np.array(transition, dtype=float)
        initial_dist = np.array(initial_dist, dtype=float)
        n_states = initial_dist.shape[0]
        n_joint = int(np.prod(counts))

        if transition.shape != (n_states, n_joint, n_states):
            raise DimensionMismatch(
                f"transition has shape {transition.shape}, expected {(n_states, n_joint, n_states)}"
            )
        if not 0.0 < discount < 1.0:
            raise DimensionMismatch(f"discount must lie in (0, 1), got {discount}")

        if np.any(transition < 0):
            s, index, s_next = np.argwhere(transition < 0)[0]
            raise NegativeEntry(
                f"P(s'={s_next}|s={s}, a={np.unravel_index(int(index), counts)})",
                float(transition[s, index, s_next]),
            )
        totals = transition.sum(axis=2)
        bad = np.argwhere(np.abs(totals - 1.0) > tol)
        if bad.size:
            s, index = bad[0]
            raise NonStochasticRow(int(s), np.unravel_index(int(index), counts), float(totals[s, index]))

        if np.any(initial_dist < 0):
            s = int(np.argmax(initial_dist < 0))
            raise NegativeEntry(f"mu({s})", float(initial_dist[s]))
        if abs(initial_dist.sum() - 1.0) > tol:
            raise DimensionMismatch(f"mu sums to {initial_dist.sum()!r}, expected 1")

        transition.setflags(write=False)
        initial_dist.setflags(write=False)
        return GameSpec(
            n_agents=len(counts),
            n_states=n_states,
            action_counts=counts,
            transition=transition,
            initial_dist=initial_dist,
            discount=float(discount),
        )

    def validate_policy(self, game: GameSpec, tables: Sequence[np.ndarray], tol: float = INPUT_TOL) -> JointPolicy:
        """Check per-agent tables against the game and freeze them."""
        if len(tables) != game.n_agents:
            raise DimensionMismatch(f"Expected {game.n_agents} policy tables, got {len(tables)}")
        frozen = []
        for i, table in enumerate(tables):
            table = np.array(table, dtype=float)
            if table.shape != (game.n_states, game.action_counts[i]):
                raise DimensionMismatch(
                    f"Policy of agent {i} has shape {table.shape}, "
                    f"expected {(game.n_states, game.action_counts[i])}"
                )
            if np.any(table < 0):
                s, a = np.argwhere(table < 0)[0]
                raise NegativeEntry(f"pi_{i}(a={a}|s={s})", float(table[s, a]))
            bad = np.argwhere(np.abs(table.sum(axis=1) - 1.0) > tol)
            if bad.size:
                raise DimensionMismatch(
                    f"Policy row of agent {i} at state {int(bad[0][0])} sums to {table[bad[0][0]].sum()!r}"
                )
            table.setflags(write=False)
            frozen.append(table)
        return JointPolicy(tables=frozen)

    # --- projections ------------------------------------------------------

    def project_rows(self, rows: np.ndarray, floor: float = 0.0) -> np.ndarray:
        """Euclidean projection of every row onto {x >= floor, sum x = 1}.

        Substitutes y = x - floor and projects onto the simplex of mass
        1 - K*floor with the sort-and-threshold rule.
        """
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        n_rows, k = rows.shape
        if k * floor > 1.0 + self.INPUT_TOL:
            raise InfeasibleFloor(k, floor)
        mass = max(1.0 - k * floor, 0.0)
        if mass == 0.0:
            return np.full((n_rows, k), 1.0 / k)

        shifted = rows - floor
        u = np.sort(shifted, axis=1)[:, ::-1]
        cssv = np.cumsum(u, axis=1) - mass
        ind = np.arange(1, k + 1)
        cond = u - cssv / ind > 0
        rho = np.count_nonzero(cond, axis=1)
        theta = cssv[np.arange(n_rows), rho - 1] / rho
        projected = np.maximum(shifted - theta[:, None], 0.0) + floor

        # feasible rows are their own projection
        feasible = np.all(rows >= floor, axis=1) & (np.abs(rows.sum(axis=1) - 1.0) <= 1e-15)
        projected[feasible] = rows[feasible]
        return projected

    def project_simplex_floor(self, v: np.ndarray, floor: float = 0.0) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return self.project_rows(v.reshape(1, -1), floor)[0]

    def project_policy(self, point: Sequence[np.ndarray], alpha: GreedyFloor = GreedyFloor()) -> JointPolicy:
        """Project unconstrained per-agent tables onto the alpha-greedy product set."""
        tables = []
        for table in point:
            projected = self.project_rows(table, alpha.floor(table.shape[1]))
            projected.setflags(write=False)
            tables.append(projected)
        return JointPolicy(tables=tables)

    # --- sampling ---------------------------------------------------------

    @staticmethod
    def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Vectorised categorical draw: probs (M, K), u (M,)."""
        cdf = np.cumsum(probs, axis=1)
        cdf[:, -1] = 1.0
        return (u[:, None] < cdf).argmax(axis=1)

    def _draw_actions(self, policy: JointPolicy, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        actions = np.empty((states.shape[0], policy.n_agents), dtype=np.int64)
        for j, table in enumerate(policy.tables):
            actions[:, j] = self._inverse_cdf(table[states], rng.random(states.shape[0]))
        return actions

    def rollout(
        self,
        game: GameSpec,
        policy: JointPolicy,
        init_states: np.ndarray,
        horizon: int,
        rng: np.random.Generator,
        fixed_agent: Optional[int] = None,
        fixed_actions: Optional[np.ndarray] = None,
        fixed_joint: Optional[np.ndarray] = None,
        start_mode: StartMode = StartMode.INITIAL_DIST,
    ) -> TrajectoryBatch:
        """Roll out len(init_states) trajectories of length `horizon`.

        The first joint action is drawn from the policy, except that agent
        `fixed_agent` plays `fixed_actions` or the whole profile is
        `fixed_joint`.
        """
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        m = init_states.shape[0]
        states = np.empty((m, horizon), dtype=np.int64)
        actions = np.empty((m, horizon, game.n_agents), dtype=np.int64)
        current = np.asarray(init_states, dtype=np.int64)
        for t in range(horizon):
            step_actions = self._draw_actions(policy, current, rng)
            if t == 0 and fixed_joint is not None:
                step_actions[:] = fixed_joint
            elif t == 0 and fixed_agent is not None:
                step_actions[:, fixed_agent] = fixed_actions
            states[:, t] = current
            actions[:, t] = step_actions
            joint = np.ravel_multi_index(tuple(step_actions.T), game.action_counts)
            current = self._inverse_cdf(game.transition[current, joint], rng.random(m))

        joint_all = np.ravel_multi_index(tuple(np.moveaxis(actions, -1, 0)), game.action_counts)
        for arr in (states, actions, joint_all):
            arr.setflags(write=False)
        return TrajectoryBatch(states=states, actions=actions, joint=joint_all, start_mode=start_mode)

    def sample_batch(
        self,
        game: GameSpec,
        policy: JointPolicy,
        n_trajectories: int,
        horizon: int,
        rng: np.random.Generator,
        start: TrajectoryStart = TrajectoryStart(),
    ) -> TrajectoryBatch:
        """Sample M trajectories with a common start mode."""
        if n_trajectories < 1:
            raise ValueError(f"n_trajectories must be >= 1, got {n_trajectories}")
        if start.mode == StartMode.INITIAL_DIST:
            init = self._inverse_cdf(
                np.broadcast_to(game.initial_dist, (n_trajectories, game.n_states)).copy(),
                rng.random(n_trajectories),
            )
            return self.rollout(game, policy, init, horizon, rng)

        if start.state is None or not 0 <= start.state < game.n_states:
            raise ValueError(f"start state {start.state} invalid for {game.n_states} states")
        init = np.full(n_trajectories, start.state, dtype=np.int64)
        if start.mode == StartMode.STATE_AGENT_ACTION:
            if start.agent is None or start.action is None:
                raise ValueError("fixed-state-agent-action start needs agent and action")
            return self.rollout(
                game, policy, init, horizon, rng,
                fixed_agent=start.agent,
                fixed_actions=np.full(n_trajectories, start.action, dtype=np.int64),
                start_mode=start.mode,
            )
        if start.joint_action is None or len(start.joint_action) != game.n_agents:
            raise ValueError("fixed-state-joint-action start needs a full joint action")
        return self.rollout(
            game, policy, init, horizon, rng,
            fixed_joint=np.asarray(start.joint_action, dtype=np.int64),
            start_mode=start.mode,
        )

    def sample_trajectory(
        self,
        game: GameSpec,
        policy: JointPolicy,
        horizon: int,
        start: TrajectoryStart,
        rng: np.random.Generator,
    ) -> Trajectory:
        return self.sample_batch(game, policy, 1, horizon, rng, start).trajectory(0)

    def enumerate_joint_actions(self, game: GameSpec) -> List[tuple]:
        return list(itertools.product(*(range(c) for c in game.action_counts)))


# Global service instance
game_service = GameService()
