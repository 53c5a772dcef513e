import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from src.config import DEFAULT_API_KEY_ENV, EXAMPLE_PROBLEMS, SAMPLER_ENDPOINT, SAMPLER_MODEL, SYNTHETIC_FIXTURE
from src.exceptions import InvalidConfigError
from src.genetic.operators import GeneticConfig
from src.policy.toy_policy import RlConfig
from src.population.population import SelectionPolicy
from src.rating.trueskill import RatingConfig
from src.reflect.backends import ReflectorConfig


class SamplerConfig(BaseModel):
    backend: Literal["synthetic", "http"] = "synthetic"
    fixture: Path = SYNTHETIC_FIXTURE
    # Overrides the fixture's quality gain when set
    quality_gain: Optional[float] = Field(default=None, ge=0.0)
    problems_path: Path = EXAMPLE_PROBLEMS
    endpoint: str = SAMPLER_ENDPOINT
    model: str = SAMPLER_MODEL
    api_key_env: str = DEFAULT_API_KEY_ENV
    temperature: float = Field(default=1.0, ge=0.0, le=2.0)
    max_retries: int = Field(default=5, ge=0)
    request_timeout: float = Field(default=120.0, gt=0.0)
    concurrency: int = Field(default=1, ge=1)


class EsplConfig(BaseModel):
    """Every knob of a training run"""

    M: int = Field(default=3, ge=2)
    N: int = Field(default=5, ge=1)
    batch_size: int = Field(default=10, ge=1)
    K: int = Field(default=10, ge=1)
    lam: float = Field(default=2.0, alias="lambda")
    selection_mode: Literal["softmax", "simplified"] = "simplified"
    temperature: float = Field(default=1.0, gt=0.0)

    rating: RatingConfig = Field(default_factory=RatingConfig)
    genetic: GeneticConfig = Field(default_factory=GeneticConfig)
    rl: RlConfig = Field(default_factory=RlConfig)
    reflector: ReflectorConfig = Field(default_factory=ReflectorConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)

    iterations: int = Field(default=300, ge=0)
    seed: int = Field(default=0, ge=0)
    # None: take the root prompt from the synthetic fixture
    root_prompt: Optional[str] = None

    # Ablations: False/True is RL-only, True/False is evolution-only
    evolve_prompts: bool = True
    train_policy: bool = True

    checkpoint_every: int = Field(default=50, ge=0)
    max_iteration_retries: int = Field(default=3, ge=0)
    # Stop when the best window prompt's batch reward has not improved for this many iterations
    early_stop_patience: Optional[int] = Field(default=None, ge=1)
    early_stop_min_delta: float = Field(default=0.0, ge=0.0)

    model_config = {"populate_by_name": True}

    @model_validator(mode="after")
    def _sync_group_size(self) -> "EsplConfig":
        if self.rl.group_size != self.N:
            self.rl = self.rl.model_copy(update={"group_size": self.N})
        if self.reflector.backend == "mock" and self.sampler.backend != "synthetic":
            raise ValueError("the mock reflector only works with the synthetic sampler")
        return self

    def selection_policy(self) -> SelectionPolicy:
        return SelectionPolicy(mode=self.selection_mode, lam=self.lam, temperature=self.temperature, M=self.M)


def build_config(data: Optional[dict] = None, **overrides) -> EsplConfig:
    merged = dict(data or {})
    merged.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return EsplConfig.model_validate(merged)
    except ValidationError as e:
        raise InvalidConfigError(f"Invalid configuration: {e}") from e


def load_config(path: Union[str, Path], **overrides) -> EsplConfig:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise InvalidConfigError(f"{path} must contain a mapping at top level")
    return build_config(data, **overrides)


def config_to_dict(cfg: EsplConfig) -> dict:
    return cfg.model_dump(mode="json", by_alias=True)


def dump_config(cfg: EsplConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def config_hash(cfg: EsplConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
