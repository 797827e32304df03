"""
Tests for the grid builder, random games and the published corpus.
"""
import numpy as np
import pytest

from conftest import interior_policy
from models.envs import GridSpec
from services.env_service import env_service
from services.errors import ConfigError
from services.occupancy_service import occupancy_service


def test_deterministic_small_grid_has_unit_rows():
    game = env_service.build_grid(GridSpec(n=2, n_agents=1, p_slip=0.0))
    assert game.transition.shape == (4, 5, 4)
    assert np.all((game.transition == 0.0) | (game.transition == 1.0))
    # from the top-left corner: up and left clamp, down and right move
    assert game.transition[0, 0, 0] == 1.0
    assert game.transition[0, 1, 2] == 1.0
    assert game.transition[0, 2, 0] == 1.0
    assert game.transition[0, 3, 1] == 1.0
    assert game.transition[3, 4, 3] == 1.0


def test_five_by_five_grid_for_three_agents():
    game = env_service.build_grid(GridSpec(n=5, n_agents=3))
    assert game.n_states == 25
    assert game.n_joint_actions == 125
    assert game.transition.shape == (25, 125, 25)
    assert game.discount == 0.95


def test_slip_keeps_rows_stochastic():
    game = env_service.build_grid(GridSpec(n=3, n_agents=2, p_slip=0.1))
    np.testing.assert_allclose(game.transition.sum(axis=2), 1.0, atol=1e-12)
    assert np.count_nonzero(game.transition[4, 0]) == 4


@pytest.mark.parametrize(
    "proposals,expected",
    [((2, 2, 3), 2), ((0, 1, 3), 0), ((1, 3, 3), 3), ((4,), 4), ((1, 0, 0, 1), 1)],
)
def test_majority_vote(proposals, expected):
    assert env_service.resolve_move(proposals) == expected


def test_joint_moves_follow_the_majority():
    game = env_service.build_grid(GridSpec(n=3, n_agents=3, p_slip=0.0))
    centre = 4
    # two agents vote right, one votes up
    assert game.transition[centre, game.joint_index((3, 0, 3)), 5] == 1.0
    # no majority: the first agent's move wins
    assert game.transition[centre, game.joint_index((1, 2, 4)), 7] == 1.0


def test_uniform_start_keeps_every_state_visited(rng):
    spec = GridSpec(n=3, n_agents=2)
    game = env_service.build_grid(spec)
    for _ in range(5):
        d = occupancy_service.exact_state_occupancy(game, interior_policy(game, rng, mix=0.0))
        assert np.all(d >= (1.0 - spec.discount) / spec.n ** 2 - 1e-12)


def test_corner_start():
    game = env_service.build_grid(GridSpec(n=3, n_agents=1, initial="corner"))
    assert game.initial_dist[0] == 1.0
    assert game.initial_dist.sum() == 1.0


def test_random_game_is_deterministic_per_seed():
    first = env_service.random_game(5, 3, [2, 3], gamma=0.8)
    second = env_service.random_game(5, 3, [2, 3], gamma=0.8)
    other = env_service.random_game(6, 3, [2, 3], gamma=0.8)
    assert np.array_equal(first.transition, second.transition)
    assert not np.array_equal(first.transition, other.transition)
    np.testing.assert_allclose(first.initial_dist, 1 / 3)


def test_high_concentration_gives_near_uniform_rows():
    game = env_service.random_game(1, 4, [2, 2], concentration=1e6)
    np.testing.assert_allclose(game.transition, 0.25, atol=1e-2)


def test_corpus_stays_desk_sized(corpus):
    assert len(corpus) == 20
    for game in corpus:
        assert game.n_states <= 4
        assert game.n_agents <= 3
        assert max(game.action_counts) <= 3


def test_build_from_blocks():
    grid = env_service.build({"builder": "grid", "n": 2, "n_agents": 2})
    assert grid.n_states == 4
    drawn = env_service.build({"builder": "random", "seed": 3, "n_states": 2, "action_counts": [2]})
    assert drawn.n_agents == 1
    corpus = env_service.build({"builder": "corpus", "index": 0})
    assert corpus.n_states == 2


def test_unknown_builder_and_bad_parameters():
    with pytest.raises(ConfigError):
        env_service.build({"builder": "maze"})
    with pytest.raises(ConfigError):
        env_service.build({"builder": "grid", "n": 1})
    with pytest.raises(ConfigError):
        env_service.build({"builder": "random", "seed": 1, "size": 3})
