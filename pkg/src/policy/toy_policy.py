from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import special

from src.exceptions import BatchShapeError
from src.monitoring.logger import setup_logger
from src.rollout.synthetic import SyntheticEnv
from src.rollout.types import RolloutBatch

logger = setup_logger(__name__)

Featurizer = Callable[[str], np.ndarray]


class RlConfig(BaseModel):
    learning_rate: float = Field(default=0.1, gt=0.0)
    kl_beta: float = Field(default=0.0, ge=0.0)
    group_size: int = Field(default=5, ge=1)


class ToyPolicy:
    """
        Tabular softmax policy over a small action set.

        For problem x and system prompt s the logits are
        theta[x] + W[x] @ tokens(s), where W[x] is the per-problem feature table
        of the synthetic fixture and tokens(s) the prompt's lexicon indicator.
    """

    def __init__(self, theta: np.ndarray, problem_ids: Sequence[str],
                 feature_weights: Dict[str, np.ndarray], featurizer: Featurizer,
                 reference_theta: Optional[np.ndarray] = None):
        self.theta = np.array(theta, dtype=float)
        if self.theta.ndim != 2 or self.theta.shape[0] != len(problem_ids):
            raise ValueError(f"theta must be (problems x actions), got {self.theta.shape}")
        self.problem_ids = list(problem_ids)
        self.row = {pid: idx for idx, pid in enumerate(self.problem_ids)}
        self.feature_weights = feature_weights
        self.featurizer = featurizer
        self.reference_theta = (self.theta.copy() if reference_theta is None
                                else np.array(reference_theta, dtype=float))
        self.reference_theta.setflags(write=False)

    @classmethod
    def from_env(cls, env: SyntheticEnv, theta: Optional[np.ndarray] = None) -> "ToyPolicy":
        problem_ids = [p.id for p in env.problems()]
        if theta is None:
            theta = np.zeros((len(problem_ids), env.n_actions))
        weights = {pid: env.feature_matrix(pid) for pid in problem_ids}
        return cls(theta, problem_ids, weights, env.token_indicator)

    @property
    def n_actions(self) -> int:
        return self.theta.shape[1]

    def with_theta(self, theta: np.ndarray) -> "ToyPolicy":
        return ToyPolicy(theta, self.problem_ids, self.feature_weights, self.featurizer, self.reference_theta)

    def _row(self, problem_id: str) -> int:
        try:
            return self.row[problem_id]
        except KeyError:
            raise IndexError(f"Unknown problem '{problem_id}'") from None

    def _check_action(self, action: int) -> None:
        if not 0 <= action < self.n_actions:
            raise IndexError(f"Action {action} out of range [0, {self.n_actions})")

    def prompt_feature(self, prompt_text: str, problem_id: str, action: int) -> float:
        self._check_action(action)
        return float(self.feature_weights[problem_id][action] @ self.featurizer(prompt_text))

    def logits(self, prompt_text: str, problem_id: str, theta: Optional[np.ndarray] = None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        x = self._row(problem_id)
        return theta[x] + self.feature_weights[problem_id] @ self.featurizer(prompt_text)

    def action_probs(self, prompt_text: str, problem_id: str) -> np.ndarray:
        return special.softmax(self.logits(prompt_text, problem_id))

    def logprob(self, prompt_text: str, problem_id: str, action: int) -> float:
        self._check_action(action)
        return float(special.log_softmax(self.logits(prompt_text, problem_id))[action])

    def _groups(self, batch: RolloutBatch) -> List[Tuple[int, str, str, np.ndarray, np.ndarray]]:
        """(theta row, problem id, prompt text, actions, advantages) per (prompt, problem) group"""
        M, B, N = batch.shape
        values = batch.values
        groups = []
        for i in range(M):
            for b, problem in enumerate(batch.problems):
                if problem.id not in self.row:
                    raise BatchShapeError(f"Batch problem '{problem.id}' unknown to the policy")
                trajs = batch.group(i, b)
                try:
                    actions = np.array([int(t.content["action"]) for t in trajs])
                except KeyError:
                    raise BatchShapeError("Trajectories carry no 'action'; batch not produced by this policy") from None
                if actions.min() < 0 or actions.max() >= self.n_actions:
                    raise BatchShapeError(f"Action out of range in group ({i}, {b})")
                advantages = np.array([t.reward for t in trajs]) - values[i, b]
                groups.append((self.row[problem.id], problem.id, batch.prompt_texts[i], actions, advantages))
        return groups

    def surrogate_objective(self, batch: RolloutBatch, theta: Optional[np.ndarray] = None) -> float:
        """
            J = (1/B) sum_b (1/(N M)) sum_{i,j} (r_ijb - V_ib) log pi(a_ijb | s_i, x_b),
            with the advantages held fixed.
        """
        theta = self.theta if theta is None else theta
        M, B, N = batch.shape
        total = 0.0
        for _, problem_id, prompt_text, actions, advantages in self._groups(batch):
            log_probs = special.log_softmax(self.logits(prompt_text, problem_id, theta))
            total += float(advantages @ log_probs[actions])
        return total / (B * N * M)

    def policy_gradient(self, batch: RolloutBatch) -> np.ndarray:
        M, B, N = batch.shape
        grad = np.zeros_like(self.theta)
        for x, problem_id, prompt_text, actions, advantages in self._groups(batch):
            probs = self.action_probs(prompt_text, problem_id)
            # sum_j A_j (e_{a_j} - pi)
            np.add.at(grad[x], actions, advantages)
            grad[x] -= advantages.sum() * probs
        return grad / (B * N * M)

    def kl_to_reference(self) -> Tuple[float, np.ndarray]:
        """
            Mean over problems of KL(pi_theta(.|x) || pi_ref(.|x)) on the
            prompt-free logits, and its exact gradient.
        """
        log_p = special.log_softmax(self.theta, axis=1)
        log_q = special.log_softmax(self.reference_theta, axis=1)
        p = np.exp(log_p)
        per_problem = (p * (log_p - log_q)).sum(axis=1)
        n_problems = self.theta.shape[0]
        grad = p * (log_p - log_q - per_problem[:, None]) / n_problems
        return float(per_problem.mean()), grad

    def step(self, batch: RolloutBatch, cfg: RlConfig) -> "ToyPolicy":
        """One ascent step on J - kl_beta * KL"""
        direction = self.policy_gradient(batch)
        if cfg.kl_beta > 0.0:
            _, kl_grad = self.kl_to_reference()
            direction = direction - cfg.kl_beta * kl_grad
        logger.debug(f"Policy step: |grad|={np.linalg.norm(direction):.4e}, alpha={cfg.learning_rate}")
        return self.with_theta(self.theta + cfg.learning_rate * direction)
