from typing import Optional, Sequence

import numpy as np
import pytest

from src.population.population import Origin, Population
from src.rating.trueskill import Rating, RatingConfig
from src.rollout.synthetic import SyntheticEnv
from src.rollout.types import Problem, RolloutBatch, Trajectory
from src.training.config import EsplConfig, build_config


@pytest.fixture(scope="session")
def env() -> SyntheticEnv:
    return SyntheticEnv.from_fixture()


@pytest.fixture
def rating_cfg() -> RatingConfig:
    return RatingConfig()


def make_problems(n: int, grader_key: str = "exact_match") -> list:
    return [
        Problem(id=f"q{b}", payload={"question": f"question {b}"}, grader_key=grader_key,
                grader_args={"target": str(b)})
        for b in range(n)
    ]


def make_batch(rewards, prompt_ids: Optional[Sequence[int]] = None,
               prompt_texts: Optional[Sequence[str]] = None,
               problems: Optional[Sequence[Problem]] = None,
               actions=None) -> RolloutBatch:
    """Batch with prescribed (M, B, N) rewards; actions default to 0"""
    rewards = np.asarray(rewards, dtype=float)
    M, B, N = rewards.shape
    prompt_ids = list(prompt_ids) if prompt_ids is not None else list(range(M))
    prompt_texts = list(prompt_texts) if prompt_texts is not None else [f"prompt {i}" for i in prompt_ids]
    problems = list(problems) if problems is not None else make_problems(B)
    actions = np.zeros((M, B, N), dtype=int) if actions is None else np.asarray(actions)
    trajectories = [
        Trajectory(prompt_id=prompt_ids[i], problem_id=problems[b].id,
                   content={"action": int(actions[i, b, j])}, reward=float(rewards[i, b, j]))
        for i in range(M) for b in range(B) for j in range(N)
    ]
    return RolloutBatch.build(prompt_ids=prompt_ids, prompt_texts=prompt_texts, problems=problems,
                              group_size=N, trajectories=trajectories)


def make_population(ratings: Sequence[Rating], window_size: int = 10,
                    texts: Optional[Sequence[str]] = None) -> Population:
    """Root with ratings[0]; every further rating becomes a mutation child of the root"""
    texts = list(texts) if texts is not None else [f"prompt {idx}" for idx in range(len(ratings))]
    pop = Population.with_root(texts[0], ratings[0], window_size=window_size)
    for idx in range(1, len(ratings)):
        pop.append(pop.new_node(text=texts[idx], parent_ids=[0], origin=Origin.MUTATION,
                                birth_iteration=idx, rating=ratings[idx]))
    return pop


@pytest.fixture
def batch_factory():
    return make_batch


@pytest.fixture
def population_factory():
    return make_population


@pytest.fixture
def small_config() -> EsplConfig:
    """Synthetic run small enough for a test"""
    return build_config({
        "M": 3, "N": 3, "batch_size": 4, "K": 6, "iterations": 12, "seed": 3,
        "checkpoint_every": 5,
        "rl": {"learning_rate": 5.0},
        "genetic": {"p_crossover": 0.5},
    })
