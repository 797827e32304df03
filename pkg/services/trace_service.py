"""
Trace service: CSV traces, run manifests and policy files.
"""
import csv
import json
import logging
import subprocess
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from models.game import GameSpec, JointPolicy
from models.learner import TRACE_COLUMNS, RunManifest, RunTrace, TraceRow
from services.errors import PolicyFileError
from services.game_service import game_service

logger = logging.getLogger(__name__)

POLICY_COLUMNS = ["agent", "state", "action", "prob"]
POLICY_TOL = 1e-9


def format_number(value: Optional[float]) -> str:
    """17 significant digits; None becomes an empty cell."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % value


def version_string() -> str:
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).parent.parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return result.stdout.strip() if result.returncode == 0 and result.stdout.strip() else "unknown"


class TraceService:
    def trace_line(self, row: TraceRow) -> List[str]:
        return [format_number(getattr(row, column)) for column in TRACE_COLUMNS]

    def write_trace(self, trace: Union[RunTrace, Sequence[TraceRow]], path: Union[str, Path]) -> Path:
        rows = trace.rows if isinstance(trace, RunTrace) else list(trace)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for row in rows:
                writer.writerow(self.trace_line(row))
        logger.info(f"Wrote {len(rows)} trace rows to {path}")
        return path

    def read_trace(self, path: Union[str, Path]) -> List[Dict[str, Optional[float]]]:
        with open(path, "r", newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            return [{k: (float(v) if v != "" else None) for k, v in line.items()} for line in reader]

    def write_manifest(self, config: Dict[str, Any], seed: int, path: Union[str, Path]) -> RunManifest:
        manifest = RunManifest(config=config, version=version_string(), seed=seed)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(manifest.json(indent=2))
        return manifest

    def read_manifest(self, path: Union[str, Path]) -> RunManifest:
        with open(path, "r", encoding="utf-8") as f:
            return RunManifest(**json.load(f))

    # --- policy files ---------------------------------------------------------

    def write_policy(self, policy: JointPolicy, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(POLICY_COLUMNS)
            for i, table in enumerate(policy.tables):
                for s, a in np.ndindex(*table.shape):
                    writer.writerow([i, s, a, format_number(float(table[s, a]))])
        return path

    def read_policy(self, path: Union[str, Path], game: GameSpec) -> JointPolicy:
        """Rows "agent,state,action,prob"; every (agent, state) row must be a distribution."""
        tables = [np.full((game.n_states, c), np.nan) for c in game.action_counts]
        try:
            with open(path, "r", newline="", encoding="utf-8") as f:
                reader = csv.DictReader(f)
                if reader.fieldnames is None or list(reader.fieldnames) != POLICY_COLUMNS:
                    raise PolicyFileError(f"{path}: expected header {','.join(POLICY_COLUMNS)}")
                for line in reader:
                    i, s, a = int(line["agent"]), int(line["state"]), int(line["action"])
                    if not (0 <= i < game.n_agents and 0 <= s < game.n_states and 0 <= a < game.action_counts[i]):
                        raise PolicyFileError(f"{path}: index out of range (action={a})", agent=i, state=s)
                    tables[i][s, a] = float(line["prob"])
        except FileNotFoundError as e:
            raise PolicyFileError(f"{path}: file not found") from e
        except (KeyError, ValueError, TypeError) as e:
            raise PolicyFileError(f"{path}: malformed row: {e}") from e

        for i, table in enumerate(tables):
            for s in range(game.n_states):
                row = table[s]
                if np.any(np.isnan(row)):
                    raise PolicyFileError(f"{path}: missing action probabilities", agent=i, state=s)
                if np.any(row < 0):
                    raise PolicyFileError(f"{path}: negative probability", agent=i, state=s)
                if abs(row.sum() - 1.0) > POLICY_TOL:
                    raise PolicyFileError(f"{path}: row sums to {row.sum()!r}", agent=i, state=s)
        return game_service.validate_policy(game, tables, tol=POLICY_TOL)


# Global service instance
trace_service = TraceService()
