from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from src.exceptions import RolloutTransportError
from src.monitoring.logger import setup_logger
from src.population.population import PromptNode
from src.rollout.graders import grade
from src.rollout.types import Problem, RolloutBatch, Trajectory
from src.training.rng import derive_rng

logger = setup_logger(__name__)


class RolloutSampler(ABC):
    """Produces the content of one rollout for a (prompt, problem) cell"""

    concurrency: int = 1

    @abstractmethod
    def generate(self, prompt_text: str, problem: Problem, rng: np.random.Generator) -> Dict[str, Any]:
        """Return the rollout content; grading happens in sample_batch"""


class SyntheticSampler(RolloutSampler):
    """Toy policy acting in the synthetic environment"""

    def __init__(self, env, policy):
        self.env = env
        self.policy = policy

    def generate(self, prompt_text: str, problem: Problem, rng: np.random.Generator) -> Dict[str, Any]:
        probs = self.policy.action_probs(prompt_text, problem.id)
        action = int(rng.choice(len(probs), p=probs))
        return {
            "action": action,
            "success_probability": self.env.success_probability(prompt_text, problem, action),
        }


class HttpChatSampler(RolloutSampler):
    """
        Rollouts from a chat-completions policy server. The system message is
        the prompt text and the user message the problem question.
    """

    def __init__(self, transport, concurrency: int = 4):
        self.transport = transport
        self.concurrency = concurrency

    def generate(self, prompt_text: str, problem: Problem, rng: np.random.Generator) -> Dict[str, Any]:
        messages = [("system", prompt_text), ("human", problem.question)]
        text = self.transport.complete(messages, stage="rollout")
        return {"text": text}


def _sample_cell(sampler: RolloutSampler, prompt: PromptNode, problem: Problem,
                 seed: int, i: int, b: int, j: int) -> Trajectory:
    rng = derive_rng(seed, "rollout", i, b, j)
    try:
        content = sampler.generate(prompt.text, problem, rng)
    except RolloutTransportError:
        raise
    except Exception as e:
        raise RolloutTransportError(f"Sampler failed: {e}", prompt_id=prompt.id, problem_id=problem.id) from e
    reward = grade(problem, content, rng)
    return Trajectory(prompt_id=prompt.id, problem_id=problem.id, content=content, reward=reward)


def sample_batch(sampler: RolloutSampler, prompts: Sequence[PromptNode], problems: Sequence[Problem],
                 N: int, rng: np.random.Generator) -> RolloutBatch:
    """
        M x B x N rollouts. Each cell draws from its own stream derived from a
        key taken from rng, so results do not depend on worker scheduling.
        Any cell failure fails the whole batch.
    """
    if N < 1:
        raise ValueError(f"group size N must be >= 1, got {N}")
    if not prompts or not problems:
        raise ValueError("sample_batch needs at least one prompt and one problem")

    seed = int(rng.integers(0, 2 ** 63))
    cells: List[Tuple[int, int, int]] = [
        (i, b, j) for i in range(len(prompts)) for b in range(len(problems)) for j in range(N)
    ]

    def run(cell: Tuple[int, int, int]) -> Trajectory:
        i, b, j = cell
        return _sample_cell(sampler, prompts[i], problems[b], seed, i, b, j)

    if sampler.concurrency > 1:
        with ThreadPoolExecutor(max_workers=sampler.concurrency) as pool:
            trajectories = list(pool.map(run, cells))
    else:
        trajectories = [run(cell) for cell in cells]

    batch = RolloutBatch.build(
        prompt_ids=[p.id for p in prompts],
        prompt_texts=[p.text for p in prompts],
        problems=list(problems),
        group_size=N,
        trajectories=trajectories,
    )
    logger.debug(f"Sampled {len(trajectories)} rollouts, mean reward {batch.mean_reward():.4f}")
    return batch
