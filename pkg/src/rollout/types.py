import math
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, Field

from src.exceptions import BatchShapeError


class Problem(BaseModel):
    id: str
    payload: Dict[str, Any] = Field(default_factory=dict)
    grader_key: str
    grader_args: Dict[str, Any] = Field(default_factory=dict)

    @property
    def question(self) -> str:
        return str(self.payload.get("question", ""))


class Trajectory(BaseModel):
    prompt_id: int
    problem_id: str
    content: Dict[str, Any] = Field(default_factory=dict)
    reward: float = Field(ge=0.0, le=1.0)


class RolloutBatch(BaseModel):
    """
        All rollouts of one iteration, stored in (prompt i, problem b, sample j)
        order. values[i, b] is the mean reward of the (i, b) group and doubles
        as the score matrix used by crossover.
    """

    prompt_ids: List[int]
    prompt_texts: List[str]
    problems: List[Problem]
    group_size: int = Field(ge=1)
    trajectories: List[Trajectory]

    @classmethod
    def build(cls, **fields: Any) -> "RolloutBatch":
        batch = cls(**fields)
        batch.check_shape()
        return batch

    def check_shape(self) -> None:
        M, B, N = self.shape
        if M == 0 or B == 0:
            raise BatchShapeError("A batch needs at least one prompt and one problem")
        if len(self.prompt_texts) != M:
            raise BatchShapeError(f"{M} prompt ids but {len(self.prompt_texts)} prompt texts")
        if len(self.trajectories) != M * B * N:
            raise BatchShapeError(f"Expected {M}x{B}x{N}={M * B * N} trajectories, got {len(self.trajectories)}")
        for flat, traj in enumerate(self.trajectories):
            i, rest = divmod(flat, B * N)
            b = rest // N
            if traj.prompt_id != self.prompt_ids[i] or traj.problem_id != self.problems[b].id:
                raise BatchShapeError(
                    f"Trajectory {flat} is ({traj.prompt_id}, {traj.problem_id}), "
                    f"expected ({self.prompt_ids[i]}, {self.problems[b].id})"
                )

    @property
    def shape(self) -> Tuple[int, int, int]:
        return len(self.prompt_ids), len(self.problems), self.group_size

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.trajectories], dtype=float).reshape(self.shape)

    @property
    def values(self) -> np.ndarray:
        return self.rewards.mean(axis=2)

    @property
    def phi(self) -> np.ndarray:
        return self.values

    def group(self, i: int, b: int) -> List[Trajectory]:
        M, B, N = self.shape
        start = (i * B + b) * N
        return self.trajectories[start:start + N]

    def prompt_totals(self) -> List[float]:
        """Summed reward of every prompt; exact and independent of problem order"""
        M, B, N = self.shape
        return [math.fsum(row) for row in self.rewards.reshape(M, B * N)]

    def prompt_values(self) -> List[float]:
        """V_i, the mean reward of prompt i over its whole batch"""
        M, B, N = self.shape
        return [total / (B * N) for total in self.prompt_totals()]

    def mean_reward(self) -> float:
        return float(self.rewards.mean())


def best_prompt(batch: RolloutBatch) -> int:
    """Row with the largest sum of per-problem values, ties to the lowest index"""
    # np.argmax returns the first maximal index
    return int(np.argmax(batch.prompt_totals()))


def per_problem_winners(batch: RolloutBatch) -> List[Tuple[int, List[int]]]:
    """
        Assign every problem to the prompt with the highest value on it.
        Returns (prompt index, won problem indices) for every prompt, in prompt order.
    """
    winners = np.argmax(batch.phi, axis=0)
    won: Dict[int, List[int]] = {i: [] for i in range(len(batch.prompt_ids))}
    for b, i in enumerate(winners):
        won[int(i)].append(b)
    return [(i, won[i]) for i in range(len(batch.prompt_ids))]


def reflection_eligible(batch: RolloutBatch, i: int) -> List[int]:
    """Problems where prompt i both failed and succeeded at least once"""
    row = batch.values[i]
    return [b for b, v in enumerate(row) if 0.0 < v < 1.0]

