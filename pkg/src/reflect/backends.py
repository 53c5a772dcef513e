from abc import ABC, abstractmethod
from pathlib import Path
from typing import List, Literal, Optional, Sequence

from pydantic import BaseModel, Field

from src.config import DEFAULT_API_KEY_ENV, PROMPTS_DIR, REFLECTOR_ENDPOINT, REFLECTOR_MODEL
from src.reflect.edits import Edit, EditScript
from src.rollout.types import Problem, Trajectory


class ReflectorConfig(BaseModel):
    backend: Literal["mock", "http"] = "mock"
    endpoint: str = REFLECTOR_ENDPOINT
    model: str = REFLECTOR_MODEL
    api_key_env: str = DEFAULT_API_KEY_ENV
    temperature: float = Field(default=0.7, ge=0.0, le=2.0)
    max_retries: int = Field(default=5, ge=0)
    request_timeout: float = Field(default=60.0, gt=0.0)
    max_in_flight: int = Field(default=4, ge=1)
    max_principle_chars: int = Field(default=500, ge=1)
    templates_dir: Path = PROMPTS_DIR
    # JSON-lines fixtures for offline runs
    record_path: Optional[Path] = None
    replay_path: Optional[Path] = None


class TrajectorySummary(BaseModel):
    problem_id: str
    label: Literal["success", "failure"]
    reward: float
    text: str


class ReflectionLesson(BaseModel):
    problem_id: str
    diagnosis: str
    edits: List[Edit] = Field(default_factory=list)


class CrossoverEvidence(BaseModel):
    prompt_index: int
    prompt_id: int
    prompt_text: str
    won_problems: List[str]


class ReflectorBackend(ABC):
    """
        The four mutation stages and the crossover stage. Backends return raw
        proposals; edit caps and text checks are applied by the caller.
    """

    @abstractmethod
    def summarize(self, prompt_text: str, problem: Problem,
                  rollouts: Sequence[Trajectory]) -> List[TrajectorySummary]:
        ...

    @abstractmethod
    def critique(self, summaries: Sequence[TrajectorySummary], prompt_text: str,
                 problem: Problem) -> ReflectionLesson:
        ...

    @abstractmethod
    def aggregate(self, prompt_text: str, lessons: Sequence[ReflectionLesson]) -> EditScript:
        ...

    @abstractmethod
    def crossover(self, top_prompt_text: str, evidence: Sequence[CrossoverEvidence]) -> EditScript:
        ...


def success_label(reward: float) -> str:
    return "success" if reward >= 0.5 else "failure"
