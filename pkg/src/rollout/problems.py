import json
from pathlib import Path
from typing import List, Union

from src.monitoring.logger import setup_logger
from src.rollout.graders import GRADERS
from src.rollout.types import Problem

logger = setup_logger(__name__)


def load_problems(path: Union[str, Path]) -> List[Problem]:
    """
    Read a JSON-lines problem set: one object per line with
    id, payload, grader_key and optional grader_args.
    """
    problems: List[Problem] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                problem = Problem.model_validate(json.loads(line))
            except (json.JSONDecodeError, ValueError) as e:
                raise ValueError(f"{path}:{line_no}: invalid problem record: {e}") from e
            if problem.id in seen:
                raise ValueError(f"{path}:{line_no}: duplicate problem id '{problem.id}'")
            if problem.grader_key not in GRADERS:
                raise ValueError(f"{path}:{line_no}: unknown grader '{problem.grader_key}'")
            seen.add(problem.id)
            problems.append(problem)

    logger.info(f"Loaded {len(problems)} problems from {path}")
    return problems
