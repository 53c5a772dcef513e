import json
import re
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.config import SYNTHETIC_FIXTURE
from src.monitoring.logger import setup_logger
from src.rollout.types import Problem


class SyntheticProblemSpec(BaseModel):
    id: str
    question: str
    base_rate: float = Field(ge=0.0, le=1.0)
    hint_tokens: List[str]
    action_bonus: List[float]
    # feature_weights[a][l]: logit bonus for action a when lexicon token l is in the prompt
    feature_weights: List[List[float]]


class SyntheticFixture(BaseModel):
    lexicon: List[str]
    principles: Dict[str, str]
    quality_gain: float = Field(ge=0.0)
    n_actions: int = Field(ge=2)
    root_prompt: str
    problems: List[SyntheticProblemSpec]

    @model_validator(mode="after")
    def _check_tables(self) -> "SyntheticFixture":
        n_tokens = len(self.lexicon)
        for token in self.lexicon:
            if token not in self.principles:
                raise ValueError(f"lexicon token '{token}' has no principle phrase")
        for spec in self.problems:
            if len(spec.action_bonus) != self.n_actions:
                raise ValueError(f"problem {spec.id}: action_bonus needs {self.n_actions} entries")
            if len(spec.feature_weights) != self.n_actions or any(len(row) != n_tokens for row in spec.feature_weights):
                raise ValueError(f"problem {spec.id}: feature_weights must be {self.n_actions}x{n_tokens}")
            unknown = set(spec.hint_tokens) - set(self.lexicon)
            if unknown:
                raise ValueError(f"problem {spec.id}: hint tokens {sorted(unknown)} not in lexicon")
        return self


class SyntheticEnv:
    """
        Desk-scale stand-in for an LLM policy.

        A prompt's quality is the number of distinct lexicon tokens it mentions.
        A rollout on problem x with action a succeeds with probability
        clamp(base_rate[x] + quality_gain * quality + action_bonus[x][a], 0, 1).
        The toy policy reads the same tokens through per-problem feature weights.
    """

    def __init__(self, fixture: SyntheticFixture, quality_gain: Optional[float] = None):
        self.fixture = fixture
        self.lexicon = list(fixture.lexicon)
        self.quality_gain = fixture.quality_gain if quality_gain is None else quality_gain
        self.n_actions = fixture.n_actions
        self.root_prompt = fixture.root_prompt
        self._specs = {spec.id: spec for spec in fixture.problems}
        self._patterns = [re.compile(rf"\b{re.escape(token)}\b", re.IGNORECASE) for token in self.lexicon]
        self.logger = setup_logger(__name__)

    @classmethod
    def from_fixture(cls, path: Union[str, Path] = SYNTHETIC_FIXTURE,
                     quality_gain: Optional[float] = None) -> "SyntheticEnv":
        with open(path, "r", encoding="utf-8") as f:
            fixture = SyntheticFixture.model_validate(json.load(f))
        return cls(fixture, quality_gain=quality_gain)

    def problems(self) -> List[Problem]:
        return [
            Problem(
                id=spec.id,
                payload={"question": spec.question, "hint_tokens": list(spec.hint_tokens)},
                grader_key="synthetic_bernoulli",
            )
            for spec in self.fixture.problems
        ]

    def spec(self, problem_id: str) -> SyntheticProblemSpec:
        return self._specs[problem_id]

    def principle_for(self, token: str) -> str:
        return self.fixture.principles[token]

    def token_indicator(self, text: str) -> np.ndarray:
        return np.array([1.0 if pattern.search(text) else 0.0 for pattern in self._patterns])

    def tokens_in(self, text: str) -> List[str]:
        return [token for token, pattern in zip(self.lexicon, self._patterns) if pattern.search(text)]

    def quality(self, text: str) -> int:
        return int(self.token_indicator(text).sum())

    def feature_matrix(self, problem_id: str) -> np.ndarray:
        return np.asarray(self._specs[problem_id].feature_weights, dtype=float)

    def success_probability(self, prompt_text: str, problem: Union[Problem, str], action: int) -> float:
        spec = self._specs[problem if isinstance(problem, str) else problem.id]
        raw = spec.base_rate + self.quality_gain * self.quality(prompt_text) + spec.action_bonus[action]
        return float(min(max(raw, 0.0), 1.0))

    def expected_reward(self, prompt_text: str, problem: Union[Problem, str], action_probs: np.ndarray) -> float:
        return float(sum(
            p * self.success_probability(prompt_text, problem, a) for a, p in enumerate(action_probs)
        ))
