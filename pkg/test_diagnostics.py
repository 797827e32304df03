"""
Tests for NE gaps, stationarity metrics, MPE checks, occupancy gaps and constant bounds.
"""
import itertools

import numpy as np
import pytest

from conftest import interior_policy, make_utilities, single_state_game, supports_kind, two_state_game
from models.envs import GridSpec
from models.game import JointPolicy
from models.learner import InnerSolverConfig
from services.diagnostics_service import diagnostics_service, fos_surplus
from services.env_service import env_service
from services.errors import InnerNotConverged, UnsupportedKind
from services.game_service import game_service
from services.gradient_service import gradient_service
from services.occupancy_service import occupancy_service
from services.utility_service import utility_service

FAST_INNER = InnerSolverConfig(stepsize=0.1, max_iter=500, tol=1e-6)


def pure_profile(game, actions):
    tables = []
    for n_actions, action in zip(game.action_counts, actions):
        table = np.zeros((game.n_states, n_actions))
        table[:, action] = 1.0
        tables.append(table)
    return game_service.validate_policy(game, tables)


def bimatrix():
    """Single state, near-zero discount, both agents covering action 0."""
    game = single_state_game([2, 2], gamma=1e-6)
    utilities = [
        utility_service.build_utility("team_coverage", i, [(1, 2), (1, 2)], coverage_target=[[1.0, 0.0]])
        for i in range(2)
    ]
    return game, utilities


# --- constant bounds -----------------------------------------------------------


def test_beta_by_direct_substitution():
    game = single_state_game([1], gamma=0.5)
    utilities = [utility_service.build_utility("linear_reward", 0, [(1, 1)], reward=[[1.0]])]
    bounds = diagnostics_service.constant_bounds(game, utilities)
    assert bounds.l_inf == pytest.approx(1.0)
    assert bounds.lipschitz == 0.0
    assert bounds.beta == pytest.approx(12.0)


def test_loose_domination_coefficient():
    uniform = env_service.build_grid(GridSpec(n=5, n_agents=1, initial="uniform"))
    utilities = [utility_service.build_utility("linear_reward", 0, [(25, 5)], reward=np.zeros((25, 5)))]
    bounds = diagnostics_service.constant_bounds(uniform, utilities)
    assert bounds.c_loose == pytest.approx(500.0)
    assert bounds.full_support

    corner = env_service.build_grid(GridSpec(n=2, n_agents=1, initial="corner"))
    utilities = [utility_service.build_utility("linear_reward", 0, [(4, 5)], reward=np.zeros((4, 5)))]
    bounds = diagnostics_service.constant_bounds(corner, utilities)
    assert bounds.c_loose == float("inf")
    assert not bounds.full_support


def test_constant_bounds_report_local_estimate(corpus, rng):
    game = corpus[3]
    utilities = make_utilities("team_coverage", game, rng)
    bounds = diagnostics_service.constant_bounds(game, utilities, rng=rng, local_samples=3)
    assert bounds.local_lipschitz is not None
    assert 0.0 <= bounds.local_lipschitz
    assert not bounds.lipschitz_empirical
    consensus = diagnostics_service.constant_bounds(game, make_utilities("consensus_diversity", game, rng), rng=rng)
    assert consensus.lipschitz_empirical


# --- NE gaps ---------------------------------------------------------------------


def test_single_agent_optimum_has_zero_gap(rng):
    game = two_state_game(seed=4, action_counts=(3,))
    optimum = interior_policy(game, rng)
    target = occupancy_service.exact_marginals(game, optimum).marginals[0]
    utilities = [utility_service.build_utility("imitation", 0, [(2, 3)], imitation_target=target)]
    report = diagnostics_service.ne_gap(game, utilities, optimum)
    assert report.max_gap <= 1e-6
    assert not report.lower_bound


def test_bimatrix_pure_profiles():
    game, utilities = bimatrix()
    for profile in itertools.product(range(2), repeat=2):
        policy = pure_profile(game, profile)
        gap = diagnostics_service.ne_gap(game, utilities, policy).max_gap
        residual = diagnostics_service.stationarity(game, utilities, policy, 0.1).fixed_point_residual
        if profile == (0, 0):
            assert gap <= 1e-6
        else:
            assert gap > 0.1
            assert residual > 1e-3


@pytest.mark.parametrize("kind", ["imitation", "team_coverage"])
def test_gaps_are_nonnegative(corpus, rng, kind):
    for game in corpus[:6]:
        if kind == "team_coverage" and len(set(game.action_counts)) != 1:
            continue
        utilities = make_utilities(kind, game, rng)
        report = diagnostics_service.ne_gap(game, utilities, interior_policy(game, rng), FAST_INNER)
        assert all(gap >= -FAST_INNER.tol for gap in report.gaps)
        assert len(report.per_agent) == game.n_agents


def test_strict_inner_solver_raises_when_not_converged(rng):
    game = two_state_game(action_counts=(2,))
    utilities = make_utilities("imitation", game, rng)
    policy = JointPolicy.uniform(game)
    loose = diagnostics_service.ne_gap(game, utilities, policy, InnerSolverConfig(max_iter=1))
    assert loose.lower_bound
    assert loose.summary()["lower_bound"]
    with pytest.raises(InnerNotConverged):
        diagnostics_service.ne_gap(game, utilities, policy, InnerSolverConfig(max_iter=1, strict=True))


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["imitation", "team_coverage", "linear_reward"])
def test_gap_is_dominated_by_loose_coefficient_times_surplus(corpus, kind):
    rng = np.random.default_rng(808)
    inner = InnerSolverConfig(stepsize=0.5, max_iter=100, tol=1e-6)
    checks = 0
    for index, game in enumerate(corpus):
        if not supports_kind(game, kind):
            continue
        utilities = make_utilities(kind, game, rng)
        c_loose = diagnostics_service.constant_bounds(game, utilities).c_loose
        for _ in range(100):
            policy = interior_policy(game, rng, mix=0.05)
            surplus = diagnostics_service.stationarity(game, utilities, policy, 0.1).per_agent_surplus
            report = diagnostics_service.ne_gap(game, utilities, policy, inner)
            for gap, s in zip(report.gaps, surplus):
                assert gap <= c_loose * s + 1e-9, index
                checks += 1
    assert checks >= 1000


def test_large_gap_implies_large_residual():
    rng = np.random.default_rng(909)
    large = 0
    for seed in range(300, 320):
        game = env_service.random_game(seed, 2, [2, 2], gamma=0.8)
        utilities = make_utilities("imitation", game, rng)
        for policy in (pure_profile(game, (0, 1)), interior_policy(game, rng, mix=0.1)):
            gap = diagnostics_service.ne_gap(game, utilities, policy, FAST_INNER).max_gap
            if gap > 0.1:
                large += 1
                for eta in (0.1, 1.0):
                    residual = diagnostics_service.stationarity(game, utilities, policy, eta).fixed_point_residual
                    assert residual > 1e-3, (seed, eta)
    assert large > 0


# --- stationarity ----------------------------------------------------------------


def test_residual_equals_eta_times_gradient_mapping(corpus, rng):
    game = corpus[7]
    utilities = make_utilities("imitation", game, rng)
    policy = interior_policy(game, rng)
    for eta in (0.01, 0.1, 1.0):
        report = diagnostics_service.stationarity(game, utilities, policy, eta)
        assert report.fixed_point_residual == pytest.approx(eta * report.grad_map_norm, rel=1e-12, abs=1e-15)


def test_uniform_policy_is_not_stationary(corpus, rng):
    game = corpus[5]
    utilities = make_utilities("imitation", game, rng)
    report = diagnostics_service.stationarity(game, utilities, JointPolicy.uniform(game), 0.1)
    assert report.fixed_point_residual > 0
    assert report.fos_surplus > 0


def test_surplus_matches_vertex_enumeration(corpus, rng):
    for game in (corpus[1], corpus[6], corpus[9]):
        utilities = make_utilities("imitation", game, rng)
        policy = interior_policy(game, rng)
        report = diagnostics_service.stationarity(game, utilities, policy, 0.1)
        for i, gradient in enumerate(gradient_service.exact_gradients(game, utilities, policy)):
            best = -np.inf
            for vertex in itertools.product(range(game.action_counts[i]), repeat=game.n_states):
                deterministic = np.zeros_like(gradient)
                deterministic[np.arange(game.n_states), vertex] = 1.0
                best = max(best, float(np.sum(gradient * (deterministic - policy.agent(i)))))
            assert report.per_agent_surplus[i] == pytest.approx(best, abs=1e-12)


def test_fos_surplus_is_zero_for_constant_rows():
    gradient = np.array([[2.0, 2.0], [-1.0, -1.0]])
    assert fos_surplus(gradient, np.array([[0.3, 0.7], [1.0, 0.0]])) == pytest.approx(0.0)


# --- MPE ---------------------------------------------------------------------------


def test_mpe_on_single_state_equals_ne_gap(rng):
    game = single_state_game([2, 2])
    utilities = make_utilities("imitation", game, rng)
    policy = interior_policy(game, rng)
    mpe = diagnostics_service.mpe_check(game, utilities, policy, FAST_INNER)
    assert len(mpe.per_state) == 1
    assert mpe.max_gap == pytest.approx(diagnostics_service.ne_gap(game, utilities, policy, FAST_INNER).max_gap)
    assert mpe.heuristic_states == []


def test_mpe_flags_non_equilibrium(rng):
    game = two_state_game(seed=6, action_counts=(2,))
    utilities = make_utilities("imitation", game, rng)
    mpe = diagnostics_service.mpe_check(game, utilities, JointPolicy.uniform(game), FAST_INNER)
    assert len(mpe.per_state) == 2
    assert mpe.max_gap > 1e-6


def test_mpe_marks_unreachable_states_heuristic(rng):
    game = env_service.build_grid(GridSpec(n=2, n_agents=1, p_slip=0.0))
    utilities = [utility_service.build_utility("imitation", 0, [(4, 5)])]
    stay = np.zeros((4, 5))
    stay[:, 4] = 1.0
    policy = game_service.validate_policy(game, [stay])
    mpe = diagnostics_service.mpe_check(game, utilities, policy, InnerSolverConfig(max_iter=5))
    assert mpe.heuristic_states == [0, 1, 2, 3]


# --- occupancy gaps ------------------------------------------------------------


def test_occupancy_gaps_vanish_at_target(rng):
    game = two_state_game(action_counts=(2, 2))
    policy = interior_policy(game, rng)
    occupancies = occupancy_service.exact_marginals(game, policy)
    imitation = [
        utility_service.build_utility("imitation", i, [(2, 2)] * 2, imitation_target=occupancies.marginals[i])
        for i in range(2)
    ]
    occ_gap, kl_gap = diagnostics_service.occupancy_gaps(imitation, occupancies)
    assert occ_gap == pytest.approx(0.0, abs=1e-12)
    assert kl_gap == pytest.approx(0.0, abs=1e-12)

    aggregate = 0.5 * (occupancies.marginals[0] + occupancies.marginals[1])
    coverage = [
        utility_service.build_utility("team_coverage", i, [(2, 2)] * 2, coverage_target=aggregate) for i in range(2)
    ]
    occ_gap, kl_gap = diagnostics_service.occupancy_gaps(coverage, occupancies)
    assert occ_gap == pytest.approx(0.0, abs=1e-12)
    assert kl_gap == pytest.approx(0.0, abs=1e-12)


def test_kl_occupancy_gap_is_negated_potential(rng):
    game = two_state_game(action_counts=(2, 2))
    occupancies = occupancy_service.exact_marginals(game, interior_policy(game, rng))
    for kind in ("imitation", "team_coverage"):
        utilities = make_utilities(kind, game, rng)
        occ_gap, kl_gap = diagnostics_service.occupancy_gaps(utilities, occupancies)
        assert kl_gap == pytest.approx(-utility_service.potential(utilities, occupancies))
        assert 0.0 < occ_gap <= 2.0


def test_exploration_gap_is_distance_to_uniform(rng):
    game = two_state_game(action_counts=(2, 2))
    occupancies = occupancy_service.exact_marginals(game, interior_policy(game, rng))
    utilities = make_utilities("collective_exploration", game, rng)
    occ_gap, kl_gap = diagnostics_service.occupancy_gaps(utilities, occupancies)
    aggregate = 0.5 * (occupancies.marginals[0] + occupancies.marginals[1])
    assert occ_gap == pytest.approx(np.abs(aggregate - 0.25).sum())
    assert kl_gap >= 0.0


def test_occupancy_gaps_unsupported_kind(rng):
    game = two_state_game(action_counts=(2,))
    occupancies = occupancy_service.exact_marginals(game, JointPolicy.uniform(game))
    with pytest.raises(UnsupportedKind):
        diagnostics_service.occupancy_gaps(make_utilities("linear_reward", game, rng), occupancies)
