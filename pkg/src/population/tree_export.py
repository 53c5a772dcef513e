import json
from typing import Any, Dict, List

from src.exceptions import UnknownFormatError
from src.population.population import Population, PromptNode

TREE_FORMATS = ("dot", "json")


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def _dot_label(node: PromptNode, preview_chars: int) -> str:
    preview = node.text.strip().splitlines()[-1] if node.text.strip() else ""
    if len(preview) > preview_chars:
        preview = preview[:preview_chars - 3] + "..."
    return (f"#{node.id} ({node.origin.value}, it {node.birth_iteration})\\n"
            f"mu={node.rating.mu:.2f} sigma={node.rating.sigma:.2f}\\n{_dot_escape(preview)}")


def _to_dot(pop: Population, preview_chars: int = 40) -> str:
    lines: List[str] = ["digraph espl {", "  rankdir=TB;", "  node [shape=box, fontsize=10];"]
    for node in pop.nodes:
        lines.append(f'  n{node.id} [label="{_dot_label(node, preview_chars)}"];')
    for node in pop.nodes:
        for parent_id in node.parent_ids:
            lines.append(f'  n{parent_id} -> n{node.id} [label="{node.origin.value}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def population_to_dict(pop: Population) -> Dict[str, Any]:
    return {
        "window_size": pop.window_size,
        "next_id": pop.next_id,
        "nodes": [node.model_dump(mode="json") for node in pop.nodes],
    }


def population_from_dict(payload: Dict[str, Any]) -> Population:
    pop = Population(window_size=payload["window_size"])
    for raw in payload["nodes"]:
        pop.append(PromptNode.model_validate(raw))
    pop.restore_counter(payload.get("next_id", 0))
    return pop


def _to_json(pop: Population) -> str:
    return json.dumps(population_to_dict(pop), indent=2, sort_keys=True)


def export_tree(pop: Population, format: str = "dot") -> bytes:
    """
        Serialize the evolutionary tree. DOT draws one edge per parent link
        labelled with the child's origin; JSON round-trips through import_tree.
    """
    if format == "dot":
        return _to_dot(pop).encode("utf-8")
    if format == "json":
        return _to_json(pop).encode("utf-8")
    raise UnknownFormatError(f"Unknown tree format '{format}', expected one of {TREE_FORMATS}")


def import_tree(data: bytes) -> Population:
    payload = json.loads(data.decode("utf-8") if isinstance(data, bytes) else data)
    return population_from_dict(payload)
