from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel
from scipy import stats

from src.monitoring.logger import setup_logger
from src.policy.toy_policy import ToyPolicy
from src.population.population import PromptNode
from src.rollout.synthetic import SyntheticEnv
from src.training.checkpoint import TrainingState
from src.training.config import EsplConfig
from src.training.orchestrator import EsplTrainer

logger = setup_logger(__name__)

ABLATIONS: Dict[str, Dict[str, bool]] = {
    "full": {"evolve_prompts": True, "train_policy": True},
    "rl_only": {"evolve_prompts": False, "train_policy": True},
    "evolution_only": {"evolve_prompts": True, "train_policy": False},
}


class AblationSummary(BaseModel):
    rewards: Dict[str, List[float]]

    def mean(self, mode: str) -> float:
        return float(np.mean(self.rewards[mode]))


def best_window_prompt(state: TrainingState) -> PromptNode:
    """Highest-mu prompt of the selection window, ties to the lowest id"""
    window = state.population.window()
    return min(window, key=lambda node: (-node.rating.mu, node.id))


def expected_reward_of(prompt_text: str, policy: ToyPolicy, env: SyntheticEnv) -> float:
    """Exact mean success probability over all fixture problems"""
    rewards = [
        env.expected_reward(prompt_text, problem, policy.action_probs(prompt_text, problem.id))
        for problem in env.problems()
    ]
    return float(np.mean(rewards))


def expected_final_reward(state: TrainingState, trainer: EsplTrainer) -> float:
    policy = trainer.policy_for(state)
    if policy is None or trainer.env is None:
        raise ValueError("expected reward needs the synthetic environment")
    return expected_reward_of(best_window_prompt(state).text, policy, trainer.env)


def run_ablation(cfg: EsplConfig, seeds: Sequence[int], modes: Optional[Sequence[str]] = None) -> AblationSummary:
    """
    Final expected reward of each ablation mode, one run per seed.
    """
    modes = list(modes or ABLATIONS)
    rewards: Dict[str, List[float]] = {mode: [] for mode in modes}
    for mode in modes:
        for seed in seeds:
            run_cfg = cfg.model_copy(update={**ABLATIONS[mode], "seed": seed})
            trainer = EsplTrainer(run_cfg)
            state = trainer.run()
            reward = expected_final_reward(state, trainer)
            rewards[mode].append(reward)
            logger.info(f"Ablation {mode} seed {seed}: expected final reward {reward:.4f}")
    summary = AblationSummary(rewards=rewards)
    for mode in modes:
        logger.info(f"Ablation {mode}: mean {summary.mean(mode):.4f} over {len(seeds)} seeds")
    return summary


def spearman_recovery(estimates: Sequence[float], latent: Sequence[float]) -> float:
    """Spearman rank correlation between estimated skill and latent strength"""
    rho = stats.spearmanr(estimates, latent).statistic
    return float(rho)
