"""
Tests for game validation, simplex projections and trajectory sampling.
"""
import numpy as np
import pytest

from conftest import interior_policy, single_state_game, two_state_game
from models.game import GameFile, GreedyFloor, JointPolicy, StartMode, TrajectoryStart
from services.errors import (
    DimensionMismatch,
    InfeasibleFloor,
    MissingTransitionRow,
    NegativeEntry,
    NonStochasticRow,
)
from services.game_service import game_service, marginalize_actions, spawn_rng
from services.occupancy_service import occupancy_service


def game_file(probs_override=None, drop_last=False) -> GameFile:
    rows = []
    for s in range(2):
        for a1 in range(2):
            for a2 in range(2):
                rows.append({"state": s, "joint_action": [a1, a2], "probs": [0.5, 0.5]})
    if probs_override is not None:
        rows[probs_override[0]]["probs"] = probs_override[1]
    if drop_last:
        rows.pop()
    return GameFile(n_agents=2, n_states=2, action_counts=[2, 2], gamma=0.9, mu=[0.5, 0.5], transition=rows)


def test_validate_game_builds_dense_transition():
    game = game_service.validate_game(game_file())
    assert game.transition.shape == (2, 4, 2)
    assert game.n_joint_actions == 4
    assert not game.transition.flags.writeable


def test_non_stochastic_row_names_state_and_joint_action():
    with pytest.raises(NonStochasticRow) as excinfo:
        game_service.validate_game(game_file(probs_override=(5, [0.5, 0.6])))
    assert excinfo.value.state == 1
    assert excinfo.value.joint_action == (0, 1)
    assert excinfo.value.total == pytest.approx(1.1)


def test_negative_entry_rejected():
    with pytest.raises(NegativeEntry):
        game_service.validate_game(game_file(probs_override=(0, [1.5, -0.5])))


def test_missing_row_reported():
    with pytest.raises(MissingTransitionRow) as excinfo:
        game_service.validate_game(game_file(drop_last=True))
    assert excinfo.value.state == 1
    assert excinfo.value.joint_action == (1, 1)


def test_row_within_input_tolerance_accepted():
    game_service.validate_game(game_file(probs_override=(0, [0.5, 0.5 + 1e-13])))


def test_dimension_mismatch_on_mu_length():
    raw = game_file()
    raw.mu = [1.0]
    with pytest.raises(DimensionMismatch):
        game_service.validate_game(raw)


def test_joint_index_is_row_major():
    game = game_service.validate_game(game_file())
    assert game.joint_index((1, 0)) == 2
    assert game.joint_action(3) == (1, 1)


# --- projections -------------------------------------------------------------


def test_projection_examples():
    np.testing.assert_allclose(game_service.project_simplex_floor(np.array([0.5, 0.5])), [0.5, 0.5])
    np.testing.assert_allclose(game_service.project_simplex_floor(np.array([2.0, 0.0])), [1.0, 0.0])
    np.testing.assert_allclose(game_service.project_simplex_floor(np.array([0.3, 0.3, 0.3])), [1 / 3] * 3)
    np.testing.assert_allclose(game_service.project_simplex_floor(np.array([1.0, 0.0]), 0.1), [0.9, 0.1])


def test_feasible_point_is_fixed():
    v = np.array([0.2, 0.3, 0.5])
    assert np.array_equal(game_service.project_simplex_floor(v), v)


def test_infeasible_floor():
    with pytest.raises(InfeasibleFloor):
        game_service.project_simplex_floor(np.array([0.2, 0.3, 0.5]), 0.4)


def test_full_floor_returns_uniform():
    np.testing.assert_allclose(game_service.project_simplex_floor(np.array([5.0, -3.0, 1.0, 0.0]), 0.25), [0.25] * 4)


@pytest.mark.parametrize("floor", [0.0, 0.05, 0.2])
def test_projection_satisfies_optimality_conditions(rng, floor):
    for _ in range(200):
        v = rng.normal(scale=2.0, size=4)
        p = game_service.project_simplex_floor(v, floor)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(p >= floor - 1e-12)
        # v - p is constant on free coordinates and no larger on the floor
        residual = v - p
        free = p > floor + 1e-12
        theta = residual[free].mean()
        np.testing.assert_allclose(residual[free], theta, atol=1e-10)
        assert np.all(residual[~free] <= theta + 1e-10)


def test_projection_beats_grid_search(rng):
    grid = [
        np.array([x, y, 1.0 - x - y])
        for x in np.linspace(0, 1, 101)
        for y in np.linspace(0, 1, 101)
        if x + y <= 1.0 + 1e-12
    ]
    for _ in range(20):
        v = rng.normal(size=3)
        p = game_service.project_simplex_floor(v)
        best = min(np.linalg.norm(v - g) for g in grid)
        assert np.linalg.norm(v - p) <= best + 1e-12


def test_project_policy_respects_alpha_floor(rng):
    point = [rng.normal(size=(3, 4)), rng.normal(size=(3, 2))]
    policy = game_service.project_policy(point, GreedyFloor(alpha=0.2))
    assert GreedyFloor(alpha=0.2).contains(policy.agent(0))
    assert np.all(policy.agent(1) >= 0.1 - 1e-12)
    again = game_service.project_policy(policy.tables, GreedyFloor(alpha=0.2))
    for once, twice in zip(policy.tables, again.tables):
        np.testing.assert_allclose(twice, once, atol=1e-12)


# --- policies ----------------------------------------------------------------


def test_joint_matrix_is_product_of_tables(rng):
    game = two_state_game(action_counts=(2, 3))
    policy = interior_policy(game, rng)
    joint = policy.joint_matrix()
    assert joint.shape == (2, 6)
    for s in range(2):
        np.testing.assert_allclose(joint[s].reshape(2, 3), np.outer(policy.agent(0)[s], policy.agent(1)[s]))


def test_marginalize_actions_matches_dense_contraction(rng):
    game = two_state_game(action_counts=(2, 3))
    policy = interior_policy(game, rng)
    tensor = rng.normal(size=(2, 2, 3))
    dense = (policy.joint_matrix() * tensor.reshape(2, 6)).sum(axis=1)
    np.testing.assert_allclose(marginalize_actions(tensor, policy.tables), dense)
    kept = marginalize_actions(tensor, policy.tables, skip=0)
    np.testing.assert_allclose(kept, (tensor * policy.agent(1)[:, None, :]).sum(axis=2))


def test_validate_policy_rejects_bad_rows():
    game = single_state_game([2])
    with pytest.raises(DimensionMismatch):
        game_service.validate_policy(game, [np.array([[0.7, 0.7]])])
    with pytest.raises(NegativeEntry):
        game_service.validate_policy(game, [np.array([[1.5, -0.5]])])


# --- sampling ----------------------------------------------------------------


def test_spawn_rng_streams_are_deterministic_and_distinct():
    a = spawn_rng(7, 0).random(5)
    assert np.array_equal(a, spawn_rng(7, 0).random(5))
    assert not np.array_equal(a, spawn_rng(7, 1).random(5))


def test_sample_batch_is_deterministic_per_seed(rng):
    game = two_state_game(action_counts=(2, 2))
    policy = interior_policy(game, rng)
    first = game_service.sample_batch(game, policy, 50, 6, spawn_rng(3, 0))
    second = game_service.sample_batch(game, policy, 50, 6, spawn_rng(3, 0))
    assert np.array_equal(first.states, second.states)
    assert np.array_equal(first.actions, second.actions)
    assert first.states.shape == (50, 6)
    assert first.actions.shape == (50, 6, 2)


def test_fixed_start_modes(rng):
    game = two_state_game(action_counts=(2, 2))
    policy = interior_policy(game, rng)
    start = TrajectoryStart(mode=StartMode.STATE_AGENT_ACTION, state=1, agent=1, action=0)
    batch = game_service.sample_batch(game, policy, 30, 4, rng, start)
    assert np.all(batch.states[:, 0] == 1)
    assert np.all(batch.actions[:, 0, 1] == 0)

    joint = TrajectoryStart(mode=StartMode.STATE_JOINT_ACTION, state=0, joint_action=[1, 1])
    trajectory = game_service.sample_trajectory(game, policy, 3, joint, rng)
    assert trajectory.steps[0] == (0, (1, 1))
    assert trajectory.horizon == 3


def test_first_state_frequencies_follow_mu(rng):
    game = two_state_game(action_counts=(2,))
    policy = JointPolicy.uniform(game)
    batch = game_service.sample_batch(game, policy, 20000, 1, rng)
    assert np.mean(batch.states[:, 0] == 0) == pytest.approx(0.5, abs=0.02)


def test_empirical_discounted_visits_match_exact_occupancy(rng):
    game = two_state_game(action_counts=(2,), gamma=0.7)
    policy = interior_policy(game, rng)
    batch = game_service.sample_batch(game, policy, 20000, 60, rng)
    d_hat = occupancy_service.estimate_state_occupancy(batch, game.discount, game.n_states)
    d = occupancy_service.exact_state_occupancy(game, policy)
    np.testing.assert_allclose(d_hat, d, atol=0.02)


def test_enumerate_joint_actions():
    game = single_state_game([2, 3])
    actions = game_service.enumerate_joint_actions(game)
    assert len(actions) == 6
    assert actions[4] == (1, 1)
    assert game.joint_index(actions[4]) == 4
