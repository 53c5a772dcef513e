import re
from typing import List

from pydantic import BaseModel, Field

_PRINCIPLE_LINE = re.compile(r"^\s*(\d+)\.\s+(.*\S)\s*$")


class PromptDocument(BaseModel):
    """
        A system prompt as free preamble lines followed by numbered principles.
        Numbering is positional: rendering always renumbers from 1.
    """

    preamble: List[str] = Field(default_factory=list)
    principles: List[str] = Field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> "PromptDocument":
        preamble: List[str] = []
        principles: List[str] = []
        for line in text.splitlines():
            match = _PRINCIPLE_LINE.match(line)
            if match:
                principles.append(match.group(2))
            elif not line.strip():
                continue
            elif principles:
                # wrapped continuation of the previous principle
                principles[-1] = f"{principles[-1]} {line.strip()}"
            else:
                preamble.append(line.rstrip())
        return cls(preamble=preamble, principles=principles)

    def render(self) -> str:
        lines = list(self.preamble)
        lines.extend(f"{idx}. {text}" for idx, text in enumerate(self.principles, start=1))
        return "\n".join(lines)

    def numbered(self) -> str:
        """Principles with the 0-based indices edit scripts refer to"""
        return "\n".join(f"[{idx}] {text}" for idx, text in enumerate(self.principles))
