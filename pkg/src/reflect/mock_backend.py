import hashlib
import json
from typing import Dict, List, Sequence

from src.monitoring.logger import setup_logger
from src.reflect.backends import (
    CrossoverEvidence,
    ReflectionLesson,
    ReflectorBackend,
    TrajectorySummary,
    success_label,
)
from src.reflect.document import PromptDocument
from src.reflect.edits import AddEdit, Edit, EditScript, MergeEdit, ModifyEdit
from src.rollout.synthetic import SyntheticEnv
from src.rollout.types import Problem, Trajectory


def content_digest(content: dict) -> str:
    payload = json.dumps(content, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()[:12]


class MockReflector(ReflectorBackend):
    """
        Deterministic reflector for the synthetic environment. It knows the
        token lexicon: a critique proposes the principles of the problem's hint
        tokens that the prompt is missing, crossover imports the strongest
        principle each other winner has and the top prompt lacks.
    """

    def __init__(self, env: SyntheticEnv):
        self.env = env
        self.logger = setup_logger(__name__)

    def summarize(self, prompt_text: str, problem: Problem,
                  rollouts: Sequence[Trajectory]) -> List[TrajectorySummary]:
        summaries = []
        for traj in rollouts:
            label = success_label(traj.reward)
            summaries.append(TrajectorySummary(
                problem_id=problem.id,
                label=label,
                reward=traj.reward,
                text=(f"[{label}] action={traj.content.get('action')} reward={traj.reward:.2f} "
                      f"digest={content_digest(traj.content)}"),
            ))
        return summaries

    def critique(self, summaries: Sequence[TrajectorySummary], prompt_text: str,
                 problem: Problem) -> ReflectionLesson:
        present = set(self.env.tokens_in(prompt_text))
        missing = [t for t in problem.payload.get("hint_tokens", []) if t not in present]
        n_success = sum(1 for s in summaries if s.label == "success")
        diagnosis = (f"{n_success}/{len(summaries)} rollouts succeeded on {problem.id}; "
                     f"missing strategies: {', '.join(missing) if missing else 'none'}")
        edits: List[Edit] = [AddEdit(text=self.env.principle_for(token)) for token in missing]
        return ReflectionLesson(problem_id=problem.id, diagnosis=diagnosis, edits=edits)

    def aggregate(self, prompt_text: str, lessons: Sequence[ReflectionLesson]) -> EditScript:
        """
            Consolidate local proposals: modifies of the same principle are
            concatenated, duplicate adds and merges dropped. Modifies go first
            since they address the current numbering, then merges, then adds.
        """
        modifies: Dict[int, List[str]] = {}
        merges: List[MergeEdit] = []
        adds: List[AddEdit] = []
        seen_adds = set()
        for lesson in lessons:
            for edit in lesson.edits:
                if isinstance(edit, ModifyEdit):
                    modifies.setdefault(edit.principle_index, []).append(edit.new_text)
                elif isinstance(edit, MergeEdit):
                    if edit not in merges:
                        merges.append(edit)
                elif isinstance(edit, AddEdit):
                    key = " ".join(edit.text.lower().split())
                    if key not in seen_adds:
                        seen_adds.add(key)
                        adds.append(edit)

        edits: List[Edit] = [
            ModifyEdit(principle_index=idx, new_text=" ".join(texts)) for idx, texts in sorted(modifies.items())
        ]
        edits.extend(merges)
        edits.extend(adds)
        return EditScript(edits=edits)

    def crossover(self, top_prompt_text: str, evidence: Sequence[CrossoverEvidence]) -> EditScript:
        present = set(self.env.tokens_in(top_prompt_text))
        edits: List[Edit] = []
        for item in evidence:
            if item.prompt_text == top_prompt_text:
                continue
            best_text, best_gain = None, 0
            for principle in PromptDocument.parse(item.prompt_text).principles:
                gain = len(set(self.env.tokens_in(principle)) - present)
                if gain > best_gain:
                    best_text, best_gain = principle, gain
            if best_text is not None:
                edits.append(AddEdit(text=best_text))
                present.update(self.env.tokens_in(best_text))
        return EditScript(edits=edits)
