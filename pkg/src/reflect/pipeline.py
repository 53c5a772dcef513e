from typing import List, Optional, Sequence

from src.guardrails.safety import PromptGuardrails
from src.monitoring.logger import setup_logger
from src.reflect.backends import (
    CrossoverEvidence,
    ReflectionLesson,
    ReflectorBackend,
    ReflectorConfig,
    TrajectorySummary,
)
from src.reflect.edits import EditScript
from src.reflect.http_backend import HttpReflector, load_templates
from src.reflect.mock_backend import MockReflector
from src.reflect.transport import ChatTransport, LangChainChatTransport, RecordingTransport, ReplayTransport
from src.rollout.types import Problem, Trajectory

logger = setup_logger(__name__)


def summarize_trajectories(backend: ReflectorBackend, prompt_text: str, problem: Problem,
                           rollouts: Sequence[Trajectory]) -> List[TrajectorySummary]:
    summaries = backend.summarize(prompt_text, problem, rollouts)
    if len(summaries) != len(rollouts):
        raise ValueError(f"{len(rollouts)} rollouts produced {len(summaries)} summaries")
    return summaries


def critique(backend: ReflectorBackend, summaries: Sequence[TrajectorySummary], prompt_text: str,
             ground_truth: Problem, guardrails: PromptGuardrails) -> ReflectionLesson:
    """Lesson for one problem, capped at k_ops local edits"""
    labels = {s.label for s in summaries}
    if labels != {"success", "failure"}:
        logger.warning(f"Critique on {ground_truth.id} without contrasting outcomes: {sorted(labels)}")
    lesson = backend.critique(summaries, prompt_text, ground_truth)
    return lesson.model_copy(update={"edits": guardrails.cap_local_edits(lesson.edits)})


def aggregate(backend: ReflectorBackend, prompt_text: str, lessons: Sequence[ReflectionLesson],
              guardrails: PromptGuardrails) -> EditScript:
    if not lessons:
        raise ValueError("aggregate needs at least one lesson")
    return guardrails.check_script(backend.aggregate(prompt_text, lessons))


def crossover_reflect(backend: ReflectorBackend, top_prompt_text: str, evidence: Sequence[CrossoverEvidence],
                      guardrails: PromptGuardrails) -> Optional[EditScript]:
    """None when fewer than two prompts won any problem"""
    winners = [item for item in evidence if item.won_problems]
    if len({item.prompt_id for item in winners}) < 2:
        return None
    return guardrails.check_script(backend.crossover(top_prompt_text, winners))


def create_transport(cfg: ReflectorConfig, langfuse_handler=None) -> ChatTransport:
    if cfg.replay_path is not None:
        logger.info(f"Replaying reflector responses from {cfg.replay_path}")
        return ReplayTransport(cfg.replay_path)
    transport: ChatTransport = LangChainChatTransport(
        endpoint=cfg.endpoint,
        model=cfg.model,
        api_key_env=cfg.api_key_env,
        temperature=cfg.temperature,
        max_retries=cfg.max_retries,
        timeout=cfg.request_timeout,
        max_in_flight=cfg.max_in_flight,
        langfuse_handler=langfuse_handler,
    )
    if cfg.record_path is not None:
        transport = RecordingTransport(transport, cfg.record_path)
    return transport


def create_backend(cfg: ReflectorConfig, k_ops: int = 2, env=None, langfuse_handler=None) -> ReflectorBackend:
    """The reflector always runs on the fixed reference model, never the trained policy"""
    if cfg.backend == "mock":
        if env is None:
            raise ValueError("mock reflector needs the synthetic environment")
        return MockReflector(env)
    return HttpReflector(create_transport(cfg, langfuse_handler), load_templates(cfg.templates_dir), k_ops=k_ops)
