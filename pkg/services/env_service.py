"""
Environment service: the shared-token grid world, random games and the published test corpus.
"""
import itertools
import json
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from models.envs import GridSpec, RandomGameSpec
from models.game import GameSpec
from services.errors import ConfigError
from services.game_service import game_service

logger = logging.getLogger(__name__)

# action index -> (row delta, column delta)
MOVES: Tuple[Tuple[int, int], ...] = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))
ACTION_NAMES = ("up", "down", "left", "right", "stay")
DIRECTIONS = (0, 1, 2, 3)


def data_dir() -> Optional[Path]:
    for path in (Path(__file__).parent.parent / "data", Path("data")):
        if path.exists():
            return path
    return None


class EnvService:
    def __init__(self):
        self.corpus: List[RandomGameSpec] = []
        self._load_corpus()
        self.builders: Dict[str, Callable[..., GameSpec]] = {
            "grid": lambda **params: self.build_grid(GridSpec(**params)),
            "random": lambda **params: self.random_game(**params),
            "corpus": lambda index: self.corpus_game(index),
        }

    def _load_corpus(self) -> None:
        """Load the published random-game seed list."""
        directory = data_dir()
        if directory is None:
            logger.error("Could not find the data directory; corpus is empty")
            return
        corpus_file = directory / "corpus.json"
        if not corpus_file.exists():
            logger.error(f"Corpus file not found at: {corpus_file}")
            return
        with open(corpus_file, "r", encoding="utf-8") as f:
            entries = json.load(f)
        self.corpus = [RandomGameSpec(**entry) for entry in entries]
        logger.info(f"Loaded {len(self.corpus)} corpus games")

    # --- grid -----------------------------------------------------------------

    @staticmethod
    def resolve_move(proposals: Tuple[int, ...]) -> int:
        """Majority vote over proposed moves; ties go to the earliest agent's proposal."""
        counts = {a: proposals.count(a) for a in proposals}
        top = max(counts.values())
        return next(a for a in proposals if counts[a] == top)

    @staticmethod
    def move(n: int, state: int, action: int) -> int:
        row, col = divmod(state, n)
        d_row, d_col = MOVES[action]
        row = min(max(row + d_row, 0), n - 1)
        col = min(max(col + d_col, 0), n - 1)
        return row * n + col

    def build_grid(self, spec: GridSpec) -> GameSpec:
        n_states = spec.n * spec.n
        counts = (len(MOVES),) * spec.n_agents
        joint_actions = list(itertools.product(range(len(MOVES)), repeat=spec.n_agents))
        transition = np.zeros((n_states, len(joint_actions), n_states))
        for s in range(n_states):
            slipped = np.zeros(n_states)
            for direction in DIRECTIONS:
                slipped[self.move(spec.n, s, direction)] += 1.0 / len(DIRECTIONS)
            for index, proposals in enumerate(joint_actions):
                chosen = self.move(spec.n, s, self.resolve_move(proposals))
                transition[s, index] = spec.p_slip * slipped
                transition[s, index, chosen] += 1.0 - spec.p_slip

        if spec.initial == "uniform":
            mu = np.full(n_states, 1.0 / n_states)
        else:
            mu = np.zeros(n_states)
            mu[0] = 1.0
        logger.info(f"Built {spec.n}x{spec.n} grid for {spec.n_agents} agents (p_slip={spec.p_slip})")
        return game_service.validate_arrays(transition, mu, counts, spec.discount)

    # --- random games ---------------------------------------------------------

    def random_game(
        self,
        seed: int,
        n_states: int,
        action_counts: List[int],
        gamma: float = 0.9,
        concentration: float = 1.0,
    ) -> GameSpec:
        """Dirichlet transition rows and uniform mu; deterministic per seed."""
        rng = np.random.default_rng(seed)
        n_joint = int(np.prod(action_counts))
        transition = rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_joint))
        # renormalise so rows meet the input tolerance exactly
        transition /= transition.sum(axis=2, keepdims=True)
        mu = np.full(n_states, 1.0 / n_states)
        return game_service.validate_arrays(transition, mu, action_counts, gamma)

    def corpus_game(self, index: int) -> GameSpec:
        entry = self.corpus[index]
        return self.random_game(entry.seed, entry.n_states, entry.action_counts, entry.gamma, entry.concentration)

    def corpus_games(self) -> List[GameSpec]:
        return [self.corpus_game(k) for k in range(len(self.corpus))]

    def build(self, block: dict, path: str = "<config>") -> GameSpec:
        """Builder block {builder: grid|random|corpus, ...params} from a run config."""
        params = dict(block)
        name = params.pop("builder", None)
        if name not in self.builders:
            raise ConfigError(path, f"Unknown game builder {name!r}; expected one of {sorted(self.builders)}")
        try:
            return self.builders[name](**params)
        except (TypeError, ValidationError) as e:
            raise ConfigError(path, f"Invalid parameters for builder {name!r}: {e}") from e


# Global service instance
env_service = EnvService()
