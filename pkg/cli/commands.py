"""
CLI commands: run, eval and sweep. Each returns a process exit code.
"""
import csv
import functools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

from models.config import RunConfig
from models.game import GameSpec
from models.learner import InnerSolverConfig, RunTrace
from services.config_service import config_service
from services.diagnostics_service import diagnostics_service
from services.env_service import env_service
from services.errors import ConfigError, GumgError
from services.learner_service import learner_service
from services.trace_service import format_number, trace_service

logger = logging.getLogger(__name__)

SWEEP_AXES = ("T", "M", "H", "alpha", "eta")
SUMMARY_COLUMNS = ["value", "final_potential", "final_ne_gap", "avg_ne_gap", "final_occ_gap", "samples"]


def exit_codes(command: Callable[..., int]) -> Callable[..., int]:
    """Map GumgError to exit code 2 and anything unexpected to 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs) -> int:
        try:
            return command(*args, **kwargs)
        except GumgError as e:
            logger.error(str(e))
            return 2
        except Exception as e:
            logger.exception(f"Unexpected error in {command.__name__}: {e}")
            return 1

    return wrapper


def _run_config(config_path: Union[str, Path], run_config: RunConfig):
    base_dir = Path(config_path).parent
    game = config_service.load_game(run_config, base_dir, str(config_path))
    utilities = config_service.build_utilities(run_config.utilities, game, run_config.epsilon_kl, str(config_path))
    init = "uniform"
    if run_config.init is not None:
        init = trace_service.read_policy(base_dir / run_config.init, game)
    return game, utilities, init


def execute_run(config_path: Union[str, Path], run_config: RunConfig, out_dir: Path) -> RunTrace:
    """Run one resolved config and write trace, manifest and final policy into out_dir."""
    game, utilities, init = _run_config(config_path, run_config)
    trace = learner_service.run(game, utilities, run_config.learner_config(), init)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_service.write_trace(trace, out_dir / "trace.csv")
    trace_service.write_manifest(json.loads(run_config.json()), run_config.seed, out_dir / "manifest.json")
    trace_service.write_policy(trace.final_policy, out_dir / "policy.csv")
    return trace


@exit_codes
def cmd_run(
    config_path: str,
    out_dir: str = "out",
    seed: Optional[int] = None,
    mode: Optional[str] = None,
    T: Optional[int] = None,
    threads: Optional[int] = None,
) -> int:
    overrides = {"seed": seed, "mode": mode, "T": T, "threads": threads}
    run_config = config_service.load_run_config(config_path, overrides)
    trace = execute_run(config_path, run_config, Path(out_dir))
    last = trace.rows[-1]
    logger.info(f"Run complete: {len(trace.rows)} trace rows, final potential {last.potential:.6f}")
    return 0


def _load_eval_game(game_path: str) -> GameSpec:
    """A game file, a builder block, or a run config whose `game` field is used."""
    raw = config_service.read_json(game_path)
    if isinstance(raw, dict) and "builder" in raw:
        return env_service.build(raw, game_path)
    if isinstance(raw, dict) and "game" in raw:
        run_config = config_service.load_run_config(game_path)
        return config_service.load_game(run_config, Path(game_path).parent, game_path)
    return config_service.load_game_file(game_path)


@exit_codes
def cmd_eval(
    game_path: str,
    policy_path: str,
    utility_path: str,
    eta: float = 0.1,
    alpha: float = 0.0,
    inner: Optional[InnerSolverConfig] = None,
    out: Optional[str] = None,
) -> int:
    """Print the GapReport and StationarityReport of a policy file as JSON."""
    game = _load_eval_game(game_path)
    utilities = config_service.load_utilities(utility_path, game)
    policy = trace_service.read_policy(policy_path, game)
    gaps = diagnostics_service.ne_gap(game, utilities, policy, inner or InnerSolverConfig())
    stationarity = diagnostics_service.stationarity(game, utilities, policy, eta, alpha)
    report = {"gap": gaps.summary(), "stationarity": stationarity.dict()}
    text = json.dumps(report, indent=2)
    print(text)
    if out is not None:
        Path(out).write_text(text + "\n", encoding="utf-8")
    return 0


def summary_row(value: float, trace: RunTrace) -> List[str]:
    last = trace.rows[-1]
    return [
        format_number(value),
        format_number(last.potential),
        format_number(last.ne_gap),
        format_number(trace.average("ne_gap")),
        format_number(last.occ_gap),
        format_number(last.samples),
    ]


@exit_codes
def cmd_sweep(
    config_path: str,
    axis: str,
    values: Sequence[float],
    out_dir: str = "out",
    seed: Optional[int] = None,
    mode: Optional[str] = None,
    threads: Optional[int] = None,
) -> int:
    """One run per axis value plus summary.csv of final metrics."""
    if axis not in SWEEP_AXES:
        raise ConfigError(config_path, f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values or any(v <= 0 for v in values):
        raise ConfigError(config_path, f"sweep values must be positive, got {list(values)}")
    base = config_service.load_run_config(config_path, {"seed": seed, "mode": mode})
    out = Path(out_dir)

    def one(value: float) -> RunTrace:
        typed = int(value) if axis in ("T", "M", "H") else float(value)
        run_config = config_service.load_run_config(config_path, {"seed": seed, "mode": mode, axis: typed})
        logger.info(f"Sweep {axis}={typed}")
        return execute_run(config_path, run_config, out / f"{axis}={format_number(typed)}")

    workers = threads or base.threads
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(one, values))
    else:
        traces = [one(v) for v in values]

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for value, trace in zip(values, traces):
            writer.writerow(summary_row(value, trace))
    logger.info(f"Sweep over {axis} finished: {len(values)} runs in {out}")
    return 0
