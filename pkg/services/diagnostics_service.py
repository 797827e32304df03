"""
Diagnostics service: NE gaps, stationarity metrics, MPE checks and constant bounds.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.game import GameSpec, GreedyFloor, JointPolicy
from models.learner import InnerSolverConfig
from models.occupancy import OccupancySet
from models.reports import BestResponse, ConstantBounds, GapReport, MpeReport, StationarityReport
from models.utility import UtilitySpec
from services.errors import InnerNotConverged, UnsupportedKind
from services.game_service import game_service
from services.gradient_service import gradient_service
from services.occupancy_service import occupancy_service
from services.utility_service import utility_service

logger = logging.getLogger(__name__)


def fos_surplus(gradient: np.ndarray, table: np.ndarray) -> float:
    """max over pi' in Pi_i of <g, pi' - pi_i>, attained row-wise at a vertex."""
    return float(np.sum(gradient.max(axis=1) - np.sum(gradient * table, axis=1)))


class DiagnosticsService:
    """True-game metrics computed from exact occupancies and gradients."""

    def utility_value(self, game: GameSpec, spec: UtilitySpec, policy: JointPolicy) -> float:
        return utility_service.eval_utility(spec, occupancy_service.exact_marginals(game, policy), policy)

    def best_response(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        i: int,
        inner: InnerSolverConfig = InnerSolverConfig(),
    ) -> BestResponse:
        """Projected gradient ascent over pi_i with pi_{-i} frozen, warm-started at pi_i."""
        spec = utilities[i]
        value = self.utility_value(game, spec, policy)
        best_value, best_table = value, policy.agent(i)
        current = policy
        surplus = np.inf
        iterations = 0
        for iterations in range(1, inner.max_iter + 1):
            gradient = gradient_service.exact_gradient(game, utilities, current, i).table
            surplus = fos_surplus(gradient, current.agent(i))
            if surplus <= inner.tol:
                break
            table = game_service.project_rows(current.agent(i) + inner.stepsize * gradient)
            table.setflags(write=False)
            current = current.with_agent(i, table)
            candidate = self.utility_value(game, spec, current)
            if candidate > best_value:
                best_value, best_table = candidate, table

        converged = surplus <= inner.tol
        if not converged:
            logger.warning(
                f"Best response of agent {i} not converged after {iterations} iterations "
                f"(surplus {surplus:.3e}); gap is a lower bound"
            )
            if inner.strict:
                raise InnerNotConverged(i, float(surplus), iterations)
        return BestResponse(
            agent=i,
            gap=best_value - value,
            value=value,
            best_value=best_value,
            iterations=iterations,
            surplus=float(surplus),
            converged=converged,
            policy=best_table,
        )

    def ne_gap(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        inner: InnerSolverConfig = InnerSolverConfig(),
    ) -> GapReport:
        per_agent = [self.best_response(game, utilities, policy, i, inner) for i in range(game.n_agents)]
        report = GapReport(per_agent=per_agent)
        logger.debug(f"NE gaps {report.gaps}")
        return report

    def stationarity(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        eta: float,
        alpha: float = 0.0,
    ) -> StationarityReport:
        """Gradient-mapping norm (on the alpha-greedy set), fixed-point residual and FOS surplus."""
        gradients = gradient_service.exact_gradients(game, utilities, policy)
        ascent = [t + eta * g for t, g in zip(policy.tables, gradients)]

        mapped = game_service.project_policy(ascent, GreedyFloor(alpha=alpha))
        grad_map = [(p - t) / eta for p, t in zip(mapped.tables, policy.tables)]
        grad_map_norm = float(np.sqrt(sum(np.sum(g ** 2) for g in grad_map)))

        projected = game_service.project_policy(ascent)
        residual = float(np.sqrt(sum(np.sum((t - p) ** 2) for t, p in zip(policy.tables, projected.tables))))

        per_agent = [fos_surplus(g, t) for g, t in zip(gradients, policy.tables)]
        return StationarityReport(
            eta=eta,
            alpha=alpha,
            grad_map_norm=grad_map_norm,
            fixed_point_residual=residual,
            fos_surplus=float(sum(per_agent)),
            per_agent_surplus=per_agent,
        )

    def mpe_check(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        policy: JointPolicy,
        inner: InnerSolverConfig = InnerSolverConfig(),
    ) -> MpeReport:
        """NE gaps under every Dirac initial distribution."""
        reports, heuristic = [], []
        for s in range(game.n_states):
            dirac = np.zeros(game.n_states)
            dirac[s] = 1.0
            started = game.with_initial(dirac)
            occupancies = occupancy_service.exact_marginals(started, policy)
            if any(np.any(m <= 0) for m in occupancies.marginals):
                heuristic.append(s)
            reports.append(self.ne_gap(started, utilities, policy, inner))
        if heuristic:
            logger.warning(f"MPE check is heuristic for start states {heuristic}: some occupancies are zero")
        return MpeReport(per_state=reports, heuristic_states=heuristic)

    def occupancy_gaps(
        self, utilities: Sequence[UtilitySpec], occupancies: OccupancySet
    ) -> Tuple[float, float]:
        """(occ_gap, kl_occ_gap) for imitation, coverage and exploration utilities."""
        kind = utilities[0].kind
        marginals = list(occupancies.marginals)
        if kind == "imitation":
            occ_gap = float(np.mean([
                np.abs(m - u.imitation_target).sum() for m, u in zip(marginals, utilities)
            ]))
            return occ_gap, -utility_service.potential(utilities, marginals)
        if kind == "team_coverage":
            spec = utilities[0]
            aggregate = sum(w * m for w, m in zip(spec.weights, marginals))
            occ_gap = float(np.abs(aggregate - spec.coverage_target).sum())
            return occ_gap, -utility_service.potential(utilities, marginals)
        if kind == "collective_exploration":
            row = utilities[0].mixing[utilities[0].agent_index]
            aggregate = sum(w * m for w, m in zip(row, marginals))
            uniform = 1.0 / aggregate.size
            occ_gap = float(np.abs(aggregate - uniform).sum())
            positive = aggregate[aggregate > 0]
            kl = float(np.sum(positive * np.log(positive / uniform)))
            return occ_gap, kl
        raise UnsupportedKind(f"Occupancy gaps are not defined for utility kind {kind!r}")

    def constant_bounds(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        rng: Optional[np.random.Generator] = None,
        local_samples: int = 0,
    ) -> ConstantBounds:
        """Smoothness constant beta and the loose gradient-domination coefficient."""
        shapes = [(game.n_states, c) for c in game.action_counts]
        bounds = [utility_service.smoothness_constants(u, shapes=shapes, rng=rng) for u in utilities]
        l_inf = max(b.l_inf for b in bounds)
        lipschitz = max(b.lipschitz for b in bounds)
        n, gamma, n_states = game.n_agents, game.discount, game.n_states
        beta = (
            n ** 1.5 * sum(game.action_counts) / (1.0 - gamma) ** 2
            * (3.0 * l_inf + lipschitz * ((1.0 + n * gamma / (1.0 - gamma)) * np.sqrt(n_states) + n_states))
        )
        min_mu = float(np.min(game.initial_dist))
        c_loose = 1.0 / ((1.0 - gamma) * min_mu) if min_mu > 0 else float("inf")
        local = self.local_lipschitz(game, utilities, rng, local_samples) if local_samples > 0 else None
        return ConstantBounds(
            beta=float(beta),
            c_loose=c_loose,
            l_inf=l_inf,
            lipschitz=lipschitz,
            lipschitz_empirical=any(b.empirical for b in bounds),
            local_lipschitz=local,
        )

    def local_lipschitz(
        self,
        game: GameSpec,
        utilities: Sequence[UtilitySpec],
        rng: Optional[np.random.Generator] = None,
        samples: int = 10,
        radius: float = 1e-3,
    ) -> float:
        """Largest ||v(pi) - v(pi')|| / ||pi - pi'|| over sampled nearby interior policy pairs."""
        rng = rng if rng is not None else np.random.default_rng(0)
        best = 0.0
        for _ in range(samples):
            tables = [rng.dirichlet(np.ones(c), size=game.n_states) for c in game.action_counts]
            policy = game_service.project_policy(tables, GreedyFloor(alpha=0.5))
            nearby = game_service.project_policy(
                [t + radius * rng.standard_normal(t.shape) for t in policy.tables], GreedyFloor(alpha=0.5)
            )
            distance = np.sqrt(sum(np.sum((a - b) ** 2) for a, b in zip(policy.tables, nearby.tables)))
            if distance == 0:
                continue
            v0 = gradient_service.exact_gradients(game, utilities, policy)
            v1 = gradient_service.exact_gradients(game, utilities, nearby)
            change = np.sqrt(sum(np.sum((a - b) ** 2) for a, b in zip(v0, v1)))
            best = max(best, float(change / distance))
        return best

    def all_utilities(self, game: GameSpec, utilities: Sequence[UtilitySpec], policy: JointPolicy) -> List[float]:
        occupancies = occupancy_service.exact_marginals(game, policy)
        return [utility_service.eval_utility(u, occupancies, policy) for u in utilities]


# Global service instance
diagnostics_service = DiagnosticsService()
