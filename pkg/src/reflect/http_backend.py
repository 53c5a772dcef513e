import json
from pathlib import Path
from typing import Dict, List, Sequence, Type, TypeVar

from langchain_core.exceptions import OutputParserException
from langchain_core.output_parsers import JsonOutputParser
from langchain_core.prompts import ChatPromptTemplate
from pydantic import BaseModel, ValidationError

from src.exceptions import ReflectionParseError
from src.monitoring.logger import setup_logger
from src.reflect.backends import (
    CrossoverEvidence,
    ReflectionLesson,
    ReflectorBackend,
    TrajectorySummary,
    success_label,
)
from src.reflect.document import PromptDocument
from src.reflect.edits import Edit, EditScript
from src.reflect.transport import ChatTransport, Message
from src.rollout.types import Problem, Trajectory

STAGES = ("summarize", "critique", "aggregate", "crossover", "repair")

T = TypeVar("T", bound=BaseModel)


class _SummaryItem(BaseModel):
    index: int
    summary: str


class SummaryResponse(BaseModel):
    summaries: List[_SummaryItem]


class CritiqueResponse(BaseModel):
    diagnosis: str = ""
    edits: List[Edit] = []


class ScriptResponse(BaseModel):
    edits: List[Edit] = []


def load_template(path: Path) -> ChatPromptTemplate:
    """Template file with '### system' and '### human' sections"""
    sections: Dict[str, List[str]] = {}
    current = None
    for line in path.read_text(encoding="utf-8").splitlines():
        header = line.strip().lower()
        if header in ("### system", "### human"):
            current = header[4:]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    if set(sections) != {"system", "human"}:
        raise ValueError(f"{path} must contain a '### system' and a '### human' section")
    return ChatPromptTemplate.from_messages([
        ("system", "\n".join(sections["system"]).strip()),
        ("human", "\n".join(sections["human"]).strip()),
    ])


def load_templates(templates_dir: Path) -> Dict[str, ChatPromptTemplate]:
    return {stage: load_template(Path(templates_dir) / f"{stage}.txt") for stage in STAGES}


class HttpReflector(ReflectorBackend):
    """
        Reflection through a chat-completions model. Every stage expects one
        fenced JSON block; a reply that does not parse gets one repair
        reprompt before the stage fails with ReflectionParseError.
    """

    def __init__(self, transport: ChatTransport, templates: Dict[str, ChatPromptTemplate], k_ops: int = 2):
        self.transport = transport
        self.templates = templates
        self.k_ops = k_ops
        self.parser = JsonOutputParser()
        self.logger = setup_logger(__name__)

    def _parse(self, text: str, schema: Type[T]) -> T:
        data = self.parser.parse(text)
        return schema.model_validate(data)

    def _ask(self, stage: str, schema: Type[T], **variables) -> T:
        messages: List[Message] = [
            (m.type, str(m.content)) for m in self.templates[stage].format_messages(**variables)
        ]
        reply = self.transport.complete(messages, stage=stage)
        try:
            return self._parse(reply, schema)
        except (OutputParserException, ValidationError) as first_error:
            self.logger.warning(f"Unparseable {stage} reply, sending repair reprompt: {first_error}")
            repair = [
                (m.type, str(m.content))
                for m in self.templates["repair"].format_messages(error=str(first_error), previous=reply)
            ]
            retry_reply = self.transport.complete(messages + [("ai", reply)] + repair, stage="repair")
            try:
                return self._parse(retry_reply, schema)
            except (OutputParserException, ValidationError) as e:
                raise ReflectionParseError(f"{stage}: reply still invalid after repair: {e}") from e

    def summarize(self, prompt_text: str, problem: Problem,
                  rollouts: Sequence[Trajectory]) -> List[TrajectorySummary]:
        rendered = "\n\n".join(
            f"Rollout {idx} (reward {traj.reward:.2f}):\n{traj.content.get('text', json.dumps(traj.content))}"
            for idx, traj in enumerate(rollouts)
        )
        response = self._ask("summarize", SummaryResponse, prompt=prompt_text,
                             question=problem.question, rollouts=rendered)
        by_index = {item.index: item.summary for item in response.summaries}
        missing = [idx for idx in range(len(rollouts)) if idx not in by_index]
        if missing:
            raise ReflectionParseError(f"summarize: no summary for rollouts {missing}")
        return [
            TrajectorySummary(problem_id=problem.id, label=success_label(traj.reward),
                              reward=traj.reward, text=by_index[idx])
            for idx, traj in enumerate(rollouts)
        ]

    def critique(self, summaries: Sequence[TrajectorySummary], prompt_text: str,
                 problem: Problem) -> ReflectionLesson:
        rendered = "\n".join(f"- [{s.label}] {s.text}" for s in summaries)
        ground_truth = problem.grader_args.get("target", problem.payload.get("answer", "unknown"))
        response = self._ask("critique", CritiqueResponse, k_ops=self.k_ops,
                             principles=PromptDocument.parse(prompt_text).numbered(),
                             question=problem.question, ground_truth=ground_truth, summaries=rendered)
        return ReflectionLesson(problem_id=problem.id, diagnosis=response.diagnosis, edits=response.edits)

    def aggregate(self, prompt_text: str, lessons: Sequence[ReflectionLesson]) -> EditScript:
        rendered = "\n\n".join(
            f"Task {lesson.problem_id}: {lesson.diagnosis}\nProposed edits: "
            f"{json.dumps([e.model_dump() for e in lesson.edits])}"
            for lesson in lessons
        )
        response = self._ask("aggregate", ScriptResponse,
                             principles=PromptDocument.parse(prompt_text).numbered(), lessons=rendered)
        return EditScript(edits=response.edits)

    def crossover(self, top_prompt_text: str, evidence: Sequence[CrossoverEvidence]) -> EditScript:
        rendered = "\n\n".join(
            f"Prompt #{item.prompt_id} won tasks {', '.join(item.won_problems)}:\n{item.prompt_text}"
            for item in evidence
        )
        response = self._ask("crossover", ScriptResponse,
                             principles=PromptDocument.parse(top_prompt_text).numbered(), evidence=rendered)
        return EditScript(edits=response.edits)
