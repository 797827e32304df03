"""
Learner service: simultaneous projected policy-gradient ascent for all agents.
"""
import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from models.game import GameSpec, GreedyFloor, JointPolicy, TrajectoryBatch
from models.learner import LearnerConfig, Mailbox, RunTrace, TraceRow
from models.utility import UtilitySpec
from services.diagnostics_service import diagnostics_service
from services.errors import StepsizeWarning, UnsupportedKind
from services.game_service import game_service, spawn_rng
from services.gradient_service import gradient_service
from services.occupancy_service import occupancy_service
from services.utility_service import utility_service

logger = logging.getLogger(__name__)


class IterationSamples:
    """Trajectories drawn for one iteration: per-agent batches or one shared batch."""

    def __init__(self, batches: Optional[Dict[int, TrajectoryBatch]] = None, shared: Optional[TrajectoryBatch] = None):
        self.batches = batches or {}
        self.shared = shared


class LearnerService:
    """Runs the learning loop in exact, on-policy or generative mode."""

    # generator stream for the smoothness estimate behind the stepsize guard
    GUARD_STREAM = 2 ** 32 - 1

    def sample_count(self, game: GameSpec, config: LearnerConfig, t: int) -> int:
        if config.mode == "onpolicy":
            return t * game.n_agents * config.M * config.H
        if config.mode == "generative":
            cells = sum(game.n_states * c for c in game.action_counts)
            return t * (cells + 1) * config.M * config.H
        return 0

    def check_stepsize(self, game: GameSpec, utilities: Sequence[UtilitySpec], config: LearnerConfig) -> float:
        """Warn (never abort) when eta exceeds 1/beta; returns beta."""
        bounds = diagnostics_service.constant_bounds(game, utilities, rng=spawn_rng(config.seed, self.GUARD_STREAM))
        if config.eta > 1.0 / bounds.beta:
            message = f"Stepsize eta={config.eta} exceeds 1/beta={1.0 / bounds.beta:.3e}"
            logger.warning(message)
            warnings.warn(message, StepsizeWarning)
        return bounds.beta

    def initial_policy(
        self, game: GameSpec, config: LearnerConfig, init: Union[JointPolicy, str] = "uniform"
    ) -> JointPolicy:
        if isinstance(init, str):
            if init != "uniform":
                raise ValueError(f"Unknown initial policy {init!r}")
            return JointPolicy.uniform(game)
        floor = GreedyFloor(alpha=config.alpha)
        if all(floor.contains(t) for t in init.tables):
            return init
        logger.info(f"Projecting the initial policy onto the alpha={config.alpha} greedy set")
        return game_service.project_policy(init.tables, floor)

    # --- one iteration ----------------------------------------------------------

    def _map(self, fn: Callable[[int], object], agents: Sequence[int], threads: int) -> Dict[int, object]:
        if threads > 1 and len(agents) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return dict(zip(agents, pool.map(fn, agents)))
        return {i: fn(i) for i in agents}

    def broadcast(
        self,
        game: GameSpec,
        policy: JointPolicy,
        config: LearnerConfig,
        t: int,
        order: Optional[Sequence[int]] = None,
    ) -> Tuple[Mailbox, IterationSamples]:
        """Every agent samples, estimates its own occupancy and posts it with its policy."""
        n = game.n_agents
        agents = list(order) if order is not None else list(range(n))
        mailbox = Mailbox.empty(n)
        if config.mode == "exact":
            return mailbox, IterationSamples()

        if config.mode == "onpolicy":
            def sample(i: int) -> TrajectoryBatch:
                rng = spawn_rng(config.seed, t * (n + 1) + i)
                return game_service.sample_batch(game, policy, config.M, config.H, rng)

            batches = self._map(sample, agents, config.threads)
            for i in range(n):
                d_hat = occupancy_service.estimate_state_occupancy(batches[i], game.discount, game.n_states)
                mailbox.post(i, d_hat[:, None] * policy.agent(i), policy.agent(i))
            return mailbox, IterationSamples(batches=batches)

        shared = game_service.sample_batch(
            game, policy, config.M, config.H, spawn_rng(config.seed, t * (n + 1) + n)
        )
        d_hat = occupancy_service.estimate_state_occupancy(shared, game.discount, game.n_states)
        for i in range(n):
            mailbox.post(i, d_hat[:, None] * policy.agent(i), policy.agent(i))
        return mailbox, IterationSamples(shared=shared)

    def step_agent(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        i: int,
        config: LearnerConfig,
        mailbox: Mailbox,
        rng: Optional[np.random.Generator] = None,
        samples: Optional[IterationSamples] = None,
    ) -> np.ndarray:
        """One projected ascent step for agent i from the pre-update joint policy."""
        samples = samples or IterationSamples()
        if config.mode == "exact":
            gradient = gradient_service.exact_gradient(game, utilities, policy, i)
        elif config.mode == "onpolicy":
            gradient = gradient_service.onpolicy_gradient(
                game, utilities, policy, i, config.M, config.H, rng,
                mailbox=mailbox, batch=samples.batches.get(i),
            )
        else:
            gradient = gradient_service.generative_gradient(
                game, utilities, policy, i, config.M, config.H, rng,
                mailbox=mailbox, d_batch=samples.shared,
            )
        floor = GreedyFloor(alpha=config.alpha).floor(game.action_counts[i])
        table = game_service.project_rows(policy.agent(i) + config.eta * gradient.table, floor)
        table.setflags(write=False)
        return table

    def iterate(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        config: LearnerConfig,
        t: int,
        order: Optional[Sequence[int]] = None,
    ) -> Tuple[JointPolicy, Mailbox]:
        """pi^{t+1} from pi^t; every agent reads only pi^t and the iteration-t mailbox."""
        n = game.n_agents
        agents = list(order) if order is not None else list(range(n))
        mailbox, samples = self.broadcast(game, policy, config, t, agents)

        def update(i: int) -> np.ndarray:
            rng = spawn_rng(config.seed, t * (n + 1) + i) if config.mode == "generative" else None
            return self.step_agent(game, utilities, policy, i, config, mailbox, rng, samples)

        tables = self._map(update, agents, config.threads)
        return JointPolicy(tables=[tables[i] for i in range(n)]), mailbox

    # --- evaluation and the full run -------------------------------------------

    def evaluate(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        config: LearnerConfig,
        t: int,
        started: float,
    ) -> TraceRow:
        """True-game metrics at pi^t from exact occupancies and gradients."""
        occupancies = occupancy_service.exact_marginals(game, policy)
        values = [utility_service.eval_utility(u, occupancies, policy) for u in utilities]
        row = TraceRow(
            iter=t,
            potential=utility_service.potential(utilities, occupancies, policy),
            utilities=values,
            samples=self.sample_count(game, config, t),
        )
        if config.ne_gap:
            row.ne_gap = diagnostics_service.ne_gap(game, utilities, policy, config.inner).max_gap
        row.grad_map_norm = diagnostics_service.stationarity(
            game, utilities, policy, config.eta, config.alpha
        ).grad_map_norm
        try:
            row.occ_gap, row.kl_occ_gap = diagnostics_service.occupancy_gaps(utilities, occupancies)
        except UnsupportedKind:
            pass
        row.wall_clock = time.perf_counter() - started
        return row

    def run(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        config: LearnerConfig,
        init: Union[JointPolicy, str] = "uniform",
        on_row: Optional[Callable[[TraceRow], None]] = None,
    ) -> RunTrace:
        """T simultaneous iterations; deterministic per master seed."""
        if len(utilities) != game.n_agents:
            raise ValueError(f"Expected {game.n_agents} utilities, got {len(utilities)}")
        if config.stepsize_guard:
            self.check_stepsize(game, utilities, config)

        started = time.perf_counter()
        policy = self.initial_policy(game, config, init)
        trace = RunTrace()
        logger.info(
            f"Starting {config.mode} run: N={game.n_agents}, |S|={game.n_states}, "
            f"T={config.T}, eta={config.eta}, seed={config.seed}"
        )

        def record(t: int) -> None:
            row = self.evaluate(game, utilities, policy, config, t, started)
            trace.rows.append(row)
            logger.debug(f"iter {t}: potential={row.potential:.6f} ne_gap={row.ne_gap}")
            if on_row is not None:
                on_row(row)

        record(0)
        for t in range(config.T):
            policy, _ = self.iterate(game, utilities, policy, config, t)
            done = t + 1
            if done % config.eval_every == 0 or done == config.T:
                record(done)

        trace.final_policy = policy
        last = trace.rows[-1]
        logger.info(f"Run finished after {config.T} iterations: potential={last.potential:.6f}")
        return trace


# Global service instance
learner_service = LearnerService()
