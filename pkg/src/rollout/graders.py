import re
from typing import Any, Callable, Dict, Mapping

import numpy as np

from src.rollout.types import Problem

Grader = Callable[[Problem, Mapping[str, Any], np.random.Generator], float]

_ANSWER_LINE = re.compile(r"^\s*answer\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)


def normalize_answer(text: str) -> str:
    return " ".join(text.strip().lower().split())


def extract_answer(text: str) -> str:
    """Last 'Answer:' line if present, otherwise the whole text"""
    matches = _ANSWER_LINE.findall(text)
    return matches[-1] if matches else text


def exact_match(problem: Problem, content: Mapping[str, Any], rng: np.random.Generator) -> float:
    target = problem.grader_args.get("target")
    if target is None:
        raise ValueError(f"Problem {problem.id} has no 'target' for exact_match")
    answer = extract_answer(str(content.get("text", "")))
    return 1.0 if normalize_answer(answer) == normalize_answer(str(target)) else 0.0


def synthetic_bernoulli(problem: Problem, content: Mapping[str, Any], rng: np.random.Generator) -> float:
    """One Bernoulli draw at the success probability the environment attached to the rollout"""
    p = float(content["success_probability"])
    return 1.0 if rng.random() < p else 0.0


GRADERS: Dict[str, Grader] = {
    "exact_match": exact_match,
    "synthetic_bernoulli": synthetic_bernoulli,
}


def grade(problem: Problem, content: Mapping[str, Any], rng: np.random.Generator) -> float:
    try:
        grader = GRADERS[problem.grader_key]
    except KeyError:
        raise ValueError(f"Unknown grader '{problem.grader_key}' for problem {problem.id}") from None
    return grader(problem, content, rng)
