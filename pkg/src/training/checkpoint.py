import json
import os
import tempfile
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from src.config import CHECKPOINT_VERSION
from src.exceptions import CheckpointError
from src.monitoring.logger import setup_logger
from src.population.population import Population
from src.population.tree_export import population_from_dict, population_to_dict
from src.training.config import EsplConfig, build_config, config_hash, config_to_dict

logger = setup_logger(__name__)


class TrainingState(BaseModel):
    """Everything that changes across iterations"""

    model_config = {"arbitrary_types_allowed": True}

    population: Population
    theta: Optional[np.ndarray] = None
    reference_theta: Optional[np.ndarray] = None
    iteration: int = 0
    reward_history: List[float] = Field(default_factory=list)
    stopped: bool = False


def save_checkpoint(path: Union[str, Path], state: TrainingState, cfg: EsplConfig,
                    metrics_path: Optional[Union[str, Path]] = None) -> Path:
    """Versioned JSON written to a temp file in the same directory, then renamed into place"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "iteration": state.iteration,
        "population": population_to_dict(state.population),
        "theta": state.theta.tolist() if state.theta is not None else None,
        "reference_theta": state.reference_theta.tolist() if state.reference_theta is not None else None,
        "reward_history": list(state.reward_history),
        "stopped": state.stopped,
        "metrics_path": str(metrics_path) if metrics_path is not None else None,
    }
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True)
        os.replace(tmp_name, path)
    except Exception:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info(f"Checkpoint saved at iteration {state.iteration}: {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[EsplConfig, TrainingState, Optional[str]]:
    """Returns (config, state, metrics path recorded at save time)"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Checkpoint version {payload.get('version')} != {CHECKPOINT_VERSION}")
    cfg = build_config(payload["config"])
    if config_hash(cfg) != payload["config_hash"]:
        raise CheckpointError(f"Config hash mismatch in {path}; the stored config was altered")

    state = TrainingState(
        population=population_from_dict(payload["population"]),
        theta=np.array(payload["theta"], dtype=float) if payload["theta"] is not None else None,
        reference_theta=(np.array(payload["reference_theta"], dtype=float)
                         if payload["reference_theta"] is not None else None),
        iteration=payload["iteration"],
        reward_history=payload.get("reward_history", []),
        stopped=payload.get("stopped", False),
    )
    logger.info(f"Checkpoint loaded: iteration {state.iteration}, {len(state.population)} prompts")
    return cfg, state, payload.get("metrics_path")
