from typing import Annotated, Any, List, Literal, Union

from pydantic import BaseModel, Field, ValidationError, field_validator

from src.exceptions import EditApplicationError, EditValidationError
from src.reflect.document import PromptDocument


def _squash(text: str) -> str:
    return " ".join(text.split())


class AddEdit(BaseModel):
    op: Literal["add"] = "add"
    text: str = Field(min_length=1)

    @field_validator("text")
    @classmethod
    def _not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("added principle is blank")
        return value


class ModifyEdit(BaseModel):
    op: Literal["modify"] = "modify"
    principle_index: int = Field(ge=0)
    new_text: str = Field(min_length=1)

    @field_validator("new_text")
    @classmethod
    def _not_blank(cls, value: str) -> str:
        # Deleting a principle goes through merge, never through an empty modify
        if not value.strip():
            raise ValueError("modify cannot empty a principle")
        return value


class MergeEdit(BaseModel):
    op: Literal["merge"] = "merge"
    principle_indices: List[int] = Field(min_length=2)
    new_text: str = Field(min_length=1)

    @field_validator("principle_indices")
    @classmethod
    def _distinct(cls, value: List[int]) -> List[int]:
        if len(set(value)) != len(value):
            raise ValueError(f"merge indices must be distinct: {value}")
        if any(idx < 0 for idx in value):
            raise ValueError(f"merge indices must be >= 0: {value}")
        return value


Edit = Annotated[Union[AddEdit, ModifyEdit, MergeEdit], Field(discriminator="op")]


class EditScript(BaseModel):
    edits: List[Edit] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.edits)

    def to_json(self) -> str:
        return self.model_dump_json()

    @classmethod
    def from_json(cls, data: str) -> "EditScript":
        return parse_edit_script(data)


def parse_edit_script(data: Union[str, bytes, dict, Any]) -> EditScript:
    """Validate raw JSON (text or decoded) into an EditScript"""
    try:
        if isinstance(data, (str, bytes)):
            return EditScript.model_validate_json(data)
        if isinstance(data, list):
            data = {"edits": data}
        return EditScript.model_validate(data)
    except ValidationError as e:
        raise EditValidationError(f"Invalid edit script: {e}") from e


def apply_edits(prompt_text: str, script: EditScript) -> str:
    """
        Apply edits in order to the prompt's numbered principles.

        Indices of each edit refer to the principle list as left by the previous
        edits. A merge removes its sources and appends the merged principle.
    """
    if not script.edits:
        return prompt_text

    doc = PromptDocument.parse(prompt_text)
    principles = list(doc.principles)
    for edit_index, edit in enumerate(script.edits):
        if isinstance(edit, AddEdit):
            principles.append(_squash(edit.text))
        elif isinstance(edit, ModifyEdit):
            if edit.principle_index >= len(principles):
                raise EditApplicationError(
                    f"modify index {edit.principle_index} out of range for {len(principles)} principles",
                    edit_index, edit,
                )
            principles[edit.principle_index] = _squash(edit.new_text)
        elif isinstance(edit, MergeEdit):
            if len(edit.principle_indices) < 2:
                raise EditValidationError(f"Edit #{edit_index}: merge needs at least 2 principles")
            bad = [idx for idx in edit.principle_indices if not 0 <= idx < len(principles)]
            if bad:
                raise EditApplicationError(
                    f"merge indices {bad} out of range for {len(principles)} principles",
                    edit_index, edit,
                )
            sources = set(edit.principle_indices)
            principles = [p for idx, p in enumerate(principles) if idx not in sources]
            principles.append(_squash(edit.new_text))
        else:
            raise EditApplicationError(f"unsupported edit {type(edit).__name__}", edit_index, edit)

    return PromptDocument(preamble=doc.preamble, principles=principles).render()
