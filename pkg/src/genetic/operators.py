from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from src.guardrails.safety import PromptGuardrails
from src.monitoring.logger import setup_logger
from src.population.population import Origin, Population, PromptNode
from src.rating.trueskill import RatingConfig, crossover_fusion_rating, mutation_child_rating
from src.reflect.backends import CrossoverEvidence, ReflectionLesson, ReflectorBackend
from src.reflect.edits import apply_edits
from src.reflect.pipeline import aggregate, critique, crossover_reflect, summarize_trajectories
from src.rollout.types import RolloutBatch, best_prompt, per_problem_winners, reflection_eligible

logger = setup_logger(__name__)


class GeneticConfig(BaseModel):
    delta_sigma: float = Field(default=1.0, ge=0.0)
    p_crossover: float = Field(default=0.2, ge=0.0, le=1.0)
    k_ops: int = Field(default=2, ge=1)
    reflection_workers: int = Field(default=1, ge=1)


class CrossoverOutcome(BaseModel):
    fired: bool
    child: Optional[PromptNode] = None
    reason: str = ""


def _reflect_on_problem(backend: ReflectorBackend, guardrails: PromptGuardrails, batch: RolloutBatch,
                        k: int, b: int) -> ReflectionLesson:
    problem = batch.problems[b]
    prompt_text = batch.prompt_texts[k]
    summaries = summarize_trajectories(backend, prompt_text, problem, batch.group(k, b))
    return critique(backend, summaries, prompt_text, problem, guardrails)


def mutate(batch: RolloutBatch, participants: Sequence[PromptNode], backend: ReflectorBackend,
           cfg: GeneticConfig, population: Population, iteration: int,
           guardrails: Optional[PromptGuardrails] = None,
           rating_cfg: Optional[RatingConfig] = None) -> Optional[PromptNode]:
    """
        Reflect on the best prompt of the batch and return its edited child,
        or None when nothing is eligible or reflection fails. Never touches
        the population beyond allocating the child's id.
    """
    guardrails = guardrails or PromptGuardrails(k_ops=cfg.k_ops)
    rating_cfg = rating_cfg or RatingConfig()
    k = best_prompt(batch)
    parent = population.get(batch.prompt_ids[k])
    if participants and participants[k].id != parent.id:
        raise ValueError("participants are not in batch order")

    eligible = reflection_eligible(batch, k)
    if not eligible:
        logger.info(f"No reflection-eligible problem for prompt {parent.id}, no mutation")
        return None

    try:
        if cfg.reflection_workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.reflection_workers) as pool:
                lessons: List[ReflectionLesson] = list(
                    pool.map(lambda b: _reflect_on_problem(backend, guardrails, batch, k, b), eligible)
                )
        else:
            lessons = [_reflect_on_problem(backend, guardrails, batch, k, b) for b in eligible]
        script = aggregate(backend, parent.text, lessons, guardrails)
        if not script.edits:
            logger.info(f"Empty revision plan for prompt {parent.id}, no mutation")
            return None
        child_text = apply_edits(parent.text, script)
    except Exception as e:
        logger.error(f"Mutation of prompt {parent.id} failed, no child this iteration: {e}", exc_info=True)
        return None

    child = population.new_node(
        text=child_text,
        parent_ids=[parent.id],
        origin=Origin.MUTATION,
        birth_iteration=iteration + 1,
        rating=mutation_child_rating(parent.rating, cfg.delta_sigma, rating_cfg.child_sigma_rule),
    )
    logger.info(f"Mutation child {child.id} of prompt {parent.id} from {len(lessons)} lessons, "
                f"{len(script.edits)} edits")
    return child


def maybe_crossover(batch: RolloutBatch, participants: Sequence[PromptNode], backend: ReflectorBackend,
                    cfg: GeneticConfig, rng: np.random.Generator, population: Population, iteration: int,
                    guardrails: Optional[PromptGuardrails] = None) -> CrossoverOutcome:
    """
        With probability p_crossover, recombine the principles of the per-problem
        winners into the best prompt. The child's rating fuses all participants;
        its tree parents are the winners plus the best prompt.
    """
    if not cfg.p_crossover > rng.random():
        return CrossoverOutcome(fired=False, reason="not drawn")

    guardrails = guardrails or PromptGuardrails(k_ops=cfg.k_ops)
    k = best_prompt(batch)
    top = population.get(batch.prompt_ids[k])
    evidence = [
        CrossoverEvidence(
            prompt_index=i,
            prompt_id=batch.prompt_ids[i],
            prompt_text=batch.prompt_texts[i],
            won_problems=[batch.problems[b].id for b in won],
        )
        for i, won in per_problem_winners(batch) if won
    ]
    if len(evidence) < 2:
        logger.info(f"Crossover drawn but only {len(evidence)} winning prompt(s), skipped")
        return CrossoverOutcome(fired=True, reason="fewer than two winners")

    try:
        script = crossover_reflect(backend, top.text, evidence, guardrails)
        if script is None or not script.edits:
            logger.info(f"Crossover produced no edits for prompt {top.id}")
            return CrossoverOutcome(fired=True, reason="no edits")
        child_text = apply_edits(top.text, script)
    except Exception as e:
        logger.error(f"Crossover on prompt {top.id} failed, no child this iteration: {e}", exc_info=True)
        return CrossoverOutcome(fired=True, reason=f"error: {e}")

    parent_ids = [top.id] + [item.prompt_id for item in evidence if item.prompt_id != top.id]
    rating = crossover_fusion_rating([population.get(pid).rating for pid in batch.prompt_ids], cfg.delta_sigma)
    child = population.new_node(
        text=child_text,
        parent_ids=parent_ids,
        origin=Origin.CROSSOVER,
        birth_iteration=iteration + 1,
        rating=rating,
    )
    logger.info(f"Crossover child {child.id} of {parent_ids}")
    return CrossoverOutcome(fired=True, child=child, reason="child created")
