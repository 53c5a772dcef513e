import re
from typing import List, Sequence

from src.exceptions import EditValidationError
from src.monitoring.logger import setup_logger
from src.reflect.edits import AddEdit, Edit, EditScript, MergeEdit, ModifyEdit

# "3. ", "3) ", "- ", "* " prefixes a backend sometimes copies into principle text
_LEADING_MARKER = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s+")


class PromptGuardrails:
    """
        Checks every backend-proposed edit before it can reach a prompt:
        principle text is cleaned, must be non-empty and short, and local
        proposals are capped at k_ops edits.
    """

    def __init__(self, max_principle_chars: int = 500, k_ops: int = 2):
        if max_principle_chars < 1 or k_ops < 1:
            raise ValueError("max_principle_chars and k_ops must be >= 1")
        self.max_principle_chars = max_principle_chars
        self.k_ops = k_ops
        self.logger = setup_logger(__name__)

    def clean_principle(self, text: str) -> str:
        """
            Strip stray numbering and collapse whitespace. Over-long text is an
            error, never silently truncated.
        """
        cleaned = " ".join(_LEADING_MARKER.sub("", text).split())
        if not cleaned:
            raise EditValidationError("Principle text is empty")
        if len(cleaned) > self.max_principle_chars:
            raise EditValidationError(
                f"Principle has {len(cleaned)} characters, limit is {self.max_principle_chars}"
            )
        return cleaned

    def clean_edit(self, edit: Edit) -> Edit:
        if isinstance(edit, AddEdit):
            return AddEdit(text=self.clean_principle(edit.text))
        if isinstance(edit, ModifyEdit):
            return ModifyEdit(principle_index=edit.principle_index, new_text=self.clean_principle(edit.new_text))
        if isinstance(edit, MergeEdit):
            return MergeEdit(principle_indices=list(edit.principle_indices),
                             new_text=self.clean_principle(edit.new_text))
        raise EditValidationError(f"Unsupported edit type {type(edit).__name__}")

    def cap_local_edits(self, edits: Sequence[Edit]) -> List[Edit]:
        if len(edits) > self.k_ops:
            self.logger.warning(f"Backend proposed {len(edits)} edits, keeping the first {self.k_ops}")
        return [self.clean_edit(edit) for edit in edits[:self.k_ops]]

    def check_script(self, script: EditScript) -> EditScript:
        return EditScript(edits=[self.clean_edit(edit) for edit in script.edits])
