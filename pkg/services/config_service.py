"""
Config service: run-config, game-file and utility-block loading.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import ValidationError

from models.config import RunConfig
from models.game import GameFile, GameSpec
from models.utility import UtilityConfig, UtilitySpec
from services.env_service import env_service
from services.errors import ConfigError, GumgError
from services.game_service import game_service
from services.utility_service import others_entropy_penalty, utility_service

logger = logging.getLogger(__name__)

COEFFICIENT_KEYS = {"imitation", "consensus", "aggregate"}


class ConfigService:
    def read_json(self, path: Union[str, Path]) -> Any:
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(str(path), "file not found") from e
        except json.JSONDecodeError as e:
            raise ConfigError(str(path), e.msg, e.lineno, e.colno) from e

    def load_run_config(self, path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Parse a run config; non-None overrides replace file fields."""
        raw = self.read_json(path)
        if not isinstance(raw, dict):
            raise ConfigError(str(path), "run config must be a JSON object")
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        try:
            config = RunConfig(**raw)
        except ValidationError as e:
            raise ConfigError(str(path), str(e)) from e
        logger.info(f"Loaded run config from {path}")
        return config

    def load_game_file(self, path: Union[str, Path]) -> GameSpec:
        raw = self.read_json(path)
        try:
            game_file = GameFile(**raw)
        except (ValidationError, TypeError) as e:
            raise ConfigError(str(path), f"invalid game file: {e}") from e
        game = game_service.validate_game(game_file)
        logger.info(f"Loaded game from {path}: N={game.n_agents}, |S|={game.n_states}")
        return game

    def load_game(self, config: RunConfig, base_dir: Path, config_path: str = "<config>") -> GameSpec:
        if isinstance(config.game, str):
            return self.load_game_file(base_dir / config.game)
        return env_service.build(config.game, config_path)

    def utility_blocks(self, utilities: Union[List[UtilityConfig], UtilityConfig], n_agents: int) -> List[UtilityConfig]:
        if isinstance(utilities, UtilityConfig):
            return [utilities] * n_agents
        if len(utilities) == 1:
            return list(utilities) * n_agents
        if len(utilities) != n_agents:
            raise ConfigError("<utilities>", f"{len(utilities)} utility blocks for {n_agents} agents")
        return list(utilities)

    def build_utilities(
        self,
        utilities: Union[List[UtilityConfig], UtilityConfig],
        game: GameSpec,
        epsilon_kl: float = 1e-6,
        path: str = "<config>",
    ) -> List[UtilitySpec]:
        shapes = [(game.n_states, c) for c in game.action_counts]
        specs = []
        for i, block in enumerate(self.utility_blocks(utilities, game.n_agents)):
            unknown = set(block.coefficients) - COEFFICIENT_KEYS
            if unknown:
                raise ConfigError(path, f"unknown utility coefficients {sorted(unknown)}")
            if isinstance(block.targets, list):
                if len(block.targets) != game.n_agents:
                    raise ConfigError(path, "imitation targets must list one table per agent")
                imitation_target = block.targets[i]
            else:
                imitation_target = block.targets
            penalty = others_entropy_penalty(block.penalty.coef) if block.penalty is not None else None
            try:
                specs.append(utility_service.build_utility(
                    block.kind,
                    i,
                    shapes,
                    imitation_coef=block.coefficients.get("imitation"),
                    consensus_coef=block.coefficients.get("consensus"),
                    aggregate_coef=block.coefficients.get("aggregate"),
                    imitation_target=imitation_target,
                    coverage_target=block.target,
                    weights=block.w,
                    mixing=block.W,
                    inner=block.inner,
                    inner_coef=block.inner_coef,
                    reward=block.reward,
                    penalty=penalty,
                    epsilon_kl=epsilon_kl,
                    common_interest=block.common_interest,
                ))
            except ValidationError as e:
                raise ConfigError(path, f"utility block {i}: {e}") from e
            except GumgError as e:
                raise ConfigError(path, f"utility block {i}: {e}") from e
        return specs

    def load_utilities(self, path: Union[str, Path], game: GameSpec) -> List[UtilitySpec]:
        """Utility blocks from a standalone file or from the `utilities` field of a run config."""
        raw = self.read_json(path)
        epsilon_kl = 1e-6
        if isinstance(raw, dict) and "utilities" in raw:
            epsilon_kl = raw.get("epsilon_kl", epsilon_kl)
            raw = raw["utilities"]
        try:
            blocks = [UtilityConfig(**b) for b in raw] if isinstance(raw, list) else UtilityConfig(**raw)
        except (ValidationError, TypeError) as e:
            raise ConfigError(str(path), f"invalid utility block: {e}") from e
        return self.build_utilities(blocks, game, epsilon_kl, str(path))


# Global service instance
config_service = ConfigService()
