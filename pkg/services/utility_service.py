"""
Utility service: the concave utility family F_i with value and gradient oracles.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.game import JointPolicy
from models.occupancy import OccupancySet
from models.utility import PseudoReward, SmoothnessBound, UtilitySpec
from services.errors import DimensionMismatch, InvalidUtility

logger = logging.getLogger(__name__)

Marginals = Union[OccupancySet, Sequence[np.ndarray]]
Others = Union[JointPolicy, Sequence[np.ndarray], None]

OWN_OCCUPANCY_KINDS = ("imitation", "linear_reward")


def others_entropy_penalty(coef: float) -> Callable[[List[np.ndarray]], float]:
    """g(pi_{-i}) = coef * mean per-state entropy of the other agents' policies."""

    def penalty(other_tables: List[np.ndarray]) -> float:
        if not other_tables:
            return 0.0
        entropies = []
        for table in other_tables:
            safe = np.where(table > 0, table, 1.0)
            entropies.append(float(np.mean(-(table * np.log(safe)).sum(axis=1))))
        return coef * float(np.mean(entropies))

    return penalty


class UtilityService:
    """Values, pseudo-rewards and smoothness bounds of general utilities."""

    # --- construction -------------------------------------------------------

    def build_utility(
        self,
        kind: str,
        agent_index: int,
        shapes: Sequence[Tuple[int, int]],
        imitation_coef: Optional[float] = None,
        consensus_coef: Optional[float] = None,
        aggregate_coef: Optional[float] = None,
        imitation_target=None,
        coverage_target=None,
        weights=None,
        mixing=None,
        inner: str = "entropy",
        inner_coef=None,
        reward=None,
        penalty: Optional[Callable[[List[np.ndarray]], float]] = None,
        epsilon_kl: float = 1e-6,
        common_interest: Optional[bool] = None,
    ) -> UtilitySpec:
        """Build a UtilitySpec with per-kind defaults ("uniform" targets, weights and mixing)."""
        n_agents = len(shapes)
        if not 0 <= agent_index < n_agents:
            raise DimensionMismatch(f"agent_index {agent_index} out of range for {n_agents} agents")
        own_shape = tuple(shapes[agent_index])

        def coef(value: Optional[float], used_by: Tuple[str, ...]) -> float:
            if value is not None:
                return float(value)
            return 1.0 if kind in used_by else 0.0

        alpha = coef(imitation_coef, ("imitation", "composite"))
        beta = coef(consensus_coef, ("consensus_diversity", "composite"))
        gamma = coef(aggregate_coef, ("team_aggregate", "collective_exploration", "composite"))

        def distribution(value, shape) -> Optional[np.ndarray]:
            if value is None or (isinstance(value, str) and value == "uniform"):
                return np.full(shape, 1.0 / int(np.prod(shape)))
            return np.asarray(value, dtype=float)

        q = distribution(imitation_target, own_shape) if alpha > 0 else None
        target = distribution(coverage_target, own_shape) if kind == "team_coverage" else None
        w = (
            np.full(n_agents, 1.0 / n_agents)
            if weights is None or (isinstance(weights, str) and weights == "uniform")
            else np.asarray(weights, dtype=float)
        )
        if mixing is None or (isinstance(mixing, str) and mixing == "uniform"):
            big_w = np.full((n_agents, n_agents), 1.0 / n_agents)
        elif isinstance(mixing, str) and mixing == "identity":
            big_w = np.eye(n_agents)
        else:
            big_w = np.asarray(mixing, dtype=float)

        if kind == "collective_exploration":
            inner = "entropy"
        c = np.asarray(inner_coef, dtype=float) if inner_coef is not None else None
        r = np.asarray(reward, dtype=float) if reward is not None else None
        if kind == "linear_reward" and r is None:
            raise InvalidUtility("linear_reward utility needs a reward table")

        if common_interest is None:
            identical_rows = bool(np.allclose(big_w, big_w[0]))
            common_interest = kind == "team_coverage" or (
                kind in ("team_aggregate", "collective_exploration") and identical_rows
            )

        spec = UtilitySpec(
            kind=kind,
            agent_index=agent_index,
            imitation_coef=alpha,
            consensus_coef=beta,
            aggregate_coef=gamma,
            imitation_target=q,
            coverage_target=target,
            weights=w,
            mixing=big_w,
            inner=inner,
            inner_coef=c,
            reward=r,
            penalty=penalty,
            epsilon_kl=epsilon_kl,
            common_interest=common_interest,
        )
        self.check_spec(spec, shapes)
        return spec

    def check_spec(self, spec: UtilitySpec, shapes: Sequence[Tuple[int, int]]) -> None:
        """Raise InvalidUtility/DimensionMismatch on the first violated invariant."""
        n_agents = len(shapes)
        i = spec.agent_index
        if i >= n_agents:
            raise DimensionMismatch(f"agent_index {i} out of range for {n_agents} agents")
        own_shape = tuple(shapes[i])
        w = spec.weights
        if w is not None:
            if w.shape != (n_agents,):
                raise DimensionMismatch(f"weights have shape {w.shape}, expected ({n_agents},)")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise InvalidUtility(f"weights must be a probability vector, got {w.tolist()}")
        big_w = spec.mixing
        if big_w is not None:
            if big_w.shape != (n_agents, n_agents):
                raise DimensionMismatch(f"mixing matrix has shape {big_w.shape}, expected {(n_agents, n_agents)}")
            if np.any(big_w < 0) or np.any(np.abs(big_w.sum(axis=1) - 1.0) > 1e-9):
                raise InvalidUtility("mixing matrix W must be row-stochastic")
        for name, dist in (("imitation_target", spec.imitation_target), ("coverage_target", spec.coverage_target)):
            if dist is None:
                continue
            if dist.shape != own_shape:
                raise DimensionMismatch(f"{name} has shape {dist.shape}, expected {own_shape}")
            if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
                raise InvalidUtility(f"{name} must be a probability vector")
        if spec.reward is not None and spec.reward.shape != own_shape:
            raise DimensionMismatch(f"reward has shape {spec.reward.shape}, expected {own_shape}")
        if spec.inner == "linear" and spec.aggregate_coef > 0:
            if spec.inner_coef is None or spec.inner_coef.shape != own_shape:
                raise DimensionMismatch(f"linear inner function needs inner_coef of shape {own_shape}")
        if self._uses_aggregates(spec) and len({tuple(s) for s in shapes}) != 1:
            raise DimensionMismatch("aggregated occupancies need identical action counts across agents")

    # --- structure queries -------------------------------------------------

    def _uses_aggregates(self, spec: UtilitySpec) -> bool:
        if spec.kind in ("team_coverage", "team_aggregate", "collective_exploration", "consensus_diversity"):
            return True
        return spec.kind == "composite" and (spec.consensus_coef > 0 or spec.aggregate_coef > 0)

    def couples_agents(self, spec: UtilitySpec) -> bool:
        """Whether F_i reads lambda_j (j != i) or pi_{-i}."""
        if spec.penalty is not None:
            return True
        if spec.kind in OWN_OCCUPANCY_KINDS:
            return False
        return self._uses_aggregates(spec)

    # --- evaluation ----------------------------------------------------------

    @staticmethod
    def _marginals(occupancies: Marginals) -> List[np.ndarray]:
        if isinstance(occupancies, OccupancySet):
            return list(occupancies.marginals)
        return [np.asarray(m, dtype=float) for m in occupancies]

    @staticmethod
    def _other_tables(spec: UtilitySpec, others: Others) -> Optional[List[np.ndarray]]:
        if others is None:
            return None
        if isinstance(others, JointPolicy):
            return others.others(spec.agent_index)
        return list(others)

    @staticmethod
    def _aggregate(marginals: List[np.ndarray], weights: np.ndarray) -> np.ndarray:
        return sum(w * lam for w, lam in zip(weights, marginals))

    def _terms(self, spec: UtilitySpec, marginals: List[np.ndarray]) -> Tuple[float, List[np.ndarray]]:
        """Occupancy part of F_i and its gradients with respect to every lambda_j."""
        i = spec.agent_index
        eps = spec.epsilon_kl
        if i >= len(marginals):
            raise DimensionMismatch(f"Utility of agent {i} needs {i + 1} marginals, got {len(marginals)}")
        value = 0.0
        grads = [np.zeros_like(lam, dtype=float) for lam in marginals]
        kind = spec.kind

        if kind in ("imitation", "composite") and spec.imitation_coef > 0:
            lam = np.maximum(marginals[i], eps)
            q = np.maximum(spec.imitation_target, eps)
            if lam.shape != q.shape:
                raise DimensionMismatch(f"lambda_{i} has shape {lam.shape}, target {q.shape}")
            log_ratio = np.log(lam / q)
            value -= spec.imitation_coef * float(np.sum(lam * log_ratio))
            grads[i] -= spec.imitation_coef * (log_ratio + 1.0)

        if kind in ("consensus_diversity", "composite") and spec.consensus_coef > 0:
            w = spec.weights
            lam_bar = np.maximum(self._aggregate(marginals, w), eps)
            lam = np.maximum(marginals[i], eps)
            ratio = lam / lam_bar
            log_ratio = np.log(ratio)
            beta = spec.consensus_coef
            value -= beta * float(np.sum(lam * log_ratio))
            for j in range(len(marginals)):
                if j == i:
                    grads[j] -= beta * (log_ratio + 1.0 - w[i] * ratio)
                else:
                    grads[j] += beta * w[j] * ratio

        if kind in ("team_aggregate", "collective_exploration", "composite") and spec.aggregate_coef > 0:
            row = spec.mixing[i]
            mixed = self._aggregate(marginals, row)
            if spec.inner == "entropy":
                x = np.maximum(mixed, eps)
                value += spec.aggregate_coef * float(-np.sum(x * np.log(x)))
                inner_grad = -(np.log(x) + 1.0)
            else:
                value += spec.aggregate_coef * float(np.sum(spec.inner_coef * mixed))
                inner_grad = spec.inner_coef
            for j in range(len(marginals)):
                if row[j] != 0:
                    grads[j] += spec.aggregate_coef * row[j] * inner_grad

        if kind == "team_coverage":
            w = spec.weights
            lam_bar = np.maximum(self._aggregate(marginals, w), eps)
            target = np.maximum(spec.coverage_target, eps)
            log_ratio = np.log(lam_bar / target)
            value -= float(np.sum(lam_bar * log_ratio))
            for j in range(len(marginals)):
                if w[j] != 0:
                    grads[j] -= w[j] * (log_ratio + 1.0)

        if kind == "linear_reward":
            value += float(np.sum(marginals[i] * spec.reward))
            grads[i] += spec.reward

        return value, grads

    def eval_utility(self, spec: UtilitySpec, occupancies: Marginals, other_policies: Others = None) -> float:
        """F_i at the given occupancies (clamped below by epsilon_kl inside logs)."""
        value, _ = self._terms(spec, self._marginals(occupancies))
        tables = self._other_tables(spec, other_policies)
        if spec.penalty is not None and tables is not None:
            value += float(spec.penalty(tables))
        return value

    def grad_utility(
        self, spec: UtilitySpec, j: int, occupancies: Marginals, other_policies: Others = None
    ) -> PseudoReward:
        """Pseudo-reward r_bar_{i,j} = grad_{lambda_j} F_i."""
        _, grads = self._terms(spec, self._marginals(occupancies))
        if not 0 <= j < len(grads):
            raise DimensionMismatch(f"No marginal for agent {j}")
        return PseudoReward(values=grads[j], agent=spec.agent_index, wrt=j)

    def pseudo_rewards(self, spec: UtilitySpec, occupancies: Marginals) -> List[PseudoReward]:
        """All pseudo-rewards of agent i in one evaluation."""
        _, grads = self._terms(spec, self._marginals(occupancies))
        return [PseudoReward(values=g, agent=spec.agent_index, wrt=j) for j, g in enumerate(grads)]

    def potential(
        self, utilities: Sequence[UtilitySpec], occupancies: Marginals, policy: Optional[JointPolicy] = None
    ) -> float:
        """Common utility in common-interest mode, otherwise the mean agent utility."""
        if all(u.common_interest for u in utilities):
            return self.eval_utility(utilities[0], occupancies, policy)
        return float(np.mean([self.eval_utility(u, occupancies, policy) for u in utilities]))

    # --- smoothness ------------------------------------------------------------

    def smoothness_constants(
        self,
        spec: UtilitySpec,
        floor: Optional[float] = None,
        shapes: Optional[Sequence[Tuple[int, int]]] = None,
        rng: Optional[np.random.Generator] = None,
        samples: int = 200,
    ) -> SmoothnessBound:
        """Analytic l_inf bound of the pseudo-rewards and a smoothness bound L.

        L is analytic where the Hessian is diagonal in the aggregate; the
        consensus term falls back to sampled difference quotients.
        """
        eps = spec.epsilon_kl if floor is None else floor
        log_eps = abs(np.log(eps))
        l_inf, lipschitz, empirical = 0.0, 0.0, False
        kind = spec.kind

        if kind in ("imitation", "composite") and spec.imitation_coef > 0:
            q = np.maximum(spec.imitation_target, eps)
            l_inf += spec.imitation_coef * (log_eps + float(np.max(np.abs(np.log(q)))) + 1.0)
            lipschitz += spec.imitation_coef / eps

        if kind in ("team_aggregate", "collective_exploration", "composite") and spec.aggregate_coef > 0:
            row = spec.mixing[spec.agent_index]
            if spec.inner == "entropy":
                l_inf += spec.aggregate_coef * float(np.max(row)) * (log_eps + 1.0)
                lipschitz += spec.aggregate_coef * float(np.sum(row ** 2)) / eps
            else:
                l_inf += spec.aggregate_coef * float(np.max(row)) * float(np.max(np.abs(spec.inner_coef)))

        if kind == "team_coverage":
            target = np.maximum(spec.coverage_target, eps)
            w = spec.weights
            l_inf += float(np.max(w)) * (log_eps + float(np.max(np.abs(np.log(target)))) + 1.0)
            lipschitz += float(np.sum(w ** 2)) / eps

        if kind == "linear_reward":
            l_inf += float(np.max(np.abs(spec.reward)))

        if kind in ("consensus_diversity", "composite") and spec.consensus_coef > 0:
            w = spec.weights
            i = spec.agent_index
            ratio_bound = max(1.0, 1.0 / w[i]) if w[i] > 0 else 1.0 / eps
            others = [w[j] for j in range(len(w)) if j != i]
            cross = max(others) * ratio_bound if others else 0.0
            l_inf += spec.consensus_coef * max(log_eps + 1.0, cross)
            if shapes is None:
                raise DimensionMismatch("Consensus smoothness estimate needs the occupancy shapes")
            consensus_only = UtilitySpec(
                kind="consensus_diversity",
                agent_index=i,
                consensus_coef=spec.consensus_coef,
                weights=w,
                epsilon_kl=eps,
            )
            lipschitz += self.empirical_lipschitz(consensus_only, shapes, rng, samples)
            empirical = True

        return SmoothnessBound(l_inf=l_inf, lipschitz=lipschitz, empirical=empirical)

    def empirical_lipschitz(
        self,
        spec: UtilitySpec,
        shapes: Sequence[Tuple[int, int]],
        rng: Optional[np.random.Generator] = None,
        samples: int = 200,
        step: float = 1e-5,
    ) -> float:
        """Largest sampled difference quotient of the stacked pseudo-rewards."""
        rng = rng if rng is not None else np.random.default_rng(0)
        best = 0.0
        for _ in range(samples):
            point = [rng.dirichlet(np.ones(int(np.prod(s)))).reshape(s) for s in shapes]
            direction = [rng.standard_normal(s) for s in shapes]
            norm = np.sqrt(sum(float(np.sum(d ** 2)) for d in direction))
            moved = [p + step * d / norm for p, d in zip(point, direction)]
            _, g0 = self._terms(spec, point)
            _, g1 = self._terms(spec, moved)
            diff = np.sqrt(sum(float(np.sum((a - b) ** 2)) for a, b in zip(g0, g1)))
            best = max(best, diff / step)
        return best


# Global service instance
utility_service = UtilityService()
