"""
Shared fixtures: corpus games, interior policies and utility builders.
"""
import sys
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from models.game import GameSpec, JointPolicy  # noqa: E402
from models.utility import UtilitySpec  # noqa: E402
from services.env_service import env_service  # noqa: E402
from services.game_service import game_service  # noqa: E402
from services.utility_service import utility_service  # noqa: E402

KINDS = ["imitation", "consensus_diversity", "team_coverage", "collective_exploration", "linear_reward"]
TEAM_KINDS = {"consensus_diversity", "team_coverage", "collective_exploration", "team_aggregate", "composite"}


def interior_policy(game: GameSpec, rng: np.random.Generator, mix: float = 0.3) -> JointPolicy:
    """Random policy mixed with the uniform one, so every entry is at least mix/|A_i|."""
    tables = []
    for n_actions in game.action_counts:
        table = rng.dirichlet(np.ones(n_actions), size=game.n_states)
        tables.append((1.0 - mix) * table + mix / n_actions)
    return game_service.validate_policy(game, tables, tol=1e-10)


def single_state_game(action_counts: Sequence[int], gamma: float = 0.9) -> GameSpec:
    n_joint = int(np.prod(action_counts))
    return game_service.validate_arrays(np.ones((1, n_joint, 1)), np.ones(1), action_counts, gamma)


def two_state_game(seed: int = 3, action_counts: Sequence[int] = (2,), gamma: float = 0.9) -> GameSpec:
    return env_service.random_game(seed, 2, list(action_counts), gamma)


def supports_kind(game: GameSpec, kind: str) -> bool:
    return kind not in TEAM_KINDS or len(set(game.action_counts)) == 1


def make_utilities(kind: str, game: GameSpec, rng: np.random.Generator, **overrides) -> List[UtilitySpec]:
    """One utility per agent of the given kind with random targets, rewards and mixing."""
    shapes = [(game.n_states, c) for c in game.action_counts]
    n = game.n_agents
    shared = {}
    if kind == "team_coverage":
        shared["coverage_target"] = rng.dirichlet(np.ones(int(np.prod(shapes[0])))).reshape(shapes[0])
    if kind == "team_aggregate":
        shared["mixing"] = rng.dirichlet(np.ones(n), size=n)
        shared["inner"] = "linear"
        shared["inner_coef"] = rng.standard_normal(shapes[0])
    if kind == "consensus_diversity":
        shared["weights"] = rng.dirichlet(np.ones(n) * 5.0)
    specs = []
    for i in range(n):
        params = dict(shared)
        if kind in ("imitation", "composite"):
            params["imitation_target"] = rng.dirichlet(np.ones(int(np.prod(shapes[i])))).reshape(shapes[i])
        if kind == "linear_reward":
            params["reward"] = rng.standard_normal(shapes[i])
        params.update(overrides)
        specs.append(utility_service.build_utility(kind, i, shapes, **params))
    return specs


@pytest.fixture(scope="session")
def corpus() -> List[GameSpec]:
    return env_service.corpus_games()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
