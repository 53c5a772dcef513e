from enum import Enum
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import special

from src.exceptions import NodeLookupError
from src.monitoring.logger import setup_logger
from src.rating.trueskill import Rating, RatingConfig, Ranking, rank_update, ucb_score


class Origin(str, Enum):
    ROOT = "root"
    MUTATION = "mutation"
    CROSSOVER = "crossover"


class PromptNode(BaseModel):
    id: int = Field(ge=0)
    text: str
    parent_ids: List[int] = Field(default_factory=list)
    origin: Origin = Origin.ROOT
    birth_iteration: int = Field(default=0, ge=0)
    rating: Rating = Field(default_factory=Rating)

    @model_validator(mode="after")
    def _check_lineage(self) -> "PromptNode":
        if self.origin == Origin.ROOT and self.parent_ids:
            raise ValueError("root node cannot have parents")
        if self.origin == Origin.MUTATION and len(self.parent_ids) != 1:
            raise ValueError("mutation node needs exactly one parent")
        if self.origin == Origin.CROSSOVER and not self.parent_ids:
            raise ValueError("crossover node needs at least one parent")
        return self


class SelectionPolicy(BaseModel):
    mode: Literal["softmax", "simplified"] = "simplified"
    lam: float = Field(default=2.0, alias="lambda")
    temperature: float = Field(default=1.0, gt=0.0)
    M: int = Field(default=3, ge=2)

    model_config = {"populate_by_name": True}


class TournamentResult(BaseModel):
    participant_ids: List[int]
    values: List[float]
    ranking: Ranking
    posteriors: Dict[int, Rating]


class Population:
    """
        Append-only evolutionary tree of prompt nodes. The window restricts
        which nodes can be selected, never which nodes are kept.
    """

    def __init__(self, window_size: int = 10):
        if window_size < 1:
            raise ValueError(f"window size must be >= 1, got {window_size}")
        self.window_size = window_size
        self.nodes: List[PromptNode] = []
        self._index: Dict[int, int] = {}
        self._next_id = 0
        self.logger = setup_logger(__name__)

    @classmethod
    def with_root(cls, text: str, rating: Rating, window_size: int = 10) -> "Population":
        pop = cls(window_size)
        pop.append(pop.new_node(text=text, parent_ids=[], origin=Origin.ROOT, birth_iteration=0, rating=rating))
        return pop

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def next_id(self) -> int:
        return self._next_id

    def new_node(self, text: str, parent_ids: Sequence[int], origin: Origin,
                 birth_iteration: int, rating: Rating) -> PromptNode:
        """Allocate an id and build a node without appending it"""
        node = PromptNode(id=self._next_id, text=text, parent_ids=list(parent_ids),
                          origin=origin, birth_iteration=birth_iteration, rating=rating)
        self._next_id += 1
        return node

    def append(self, node: PromptNode) -> None:
        if node.id in self._index:
            raise ValueError(f"Node id {node.id} already present")
        for parent_id in node.parent_ids:
            parent = self.get(parent_id)
            if parent.birth_iteration >= node.birth_iteration:
                raise ValueError(
                    f"Parent {parent_id} (born {parent.birth_iteration}) must predate child "
                    f"{node.id} (born {node.birth_iteration})"
                )
        self._index[node.id] = len(self.nodes)
        self.nodes.append(node)
        self._next_id = max(self._next_id, node.id + 1)
        self.logger.info(f"Appended node {node.id} ({node.origin.value}, parents={node.parent_ids}, "
                         f"mu={node.rating.mu:.3f}, sigma={node.rating.sigma:.3f})")

    def get(self, node_id: int) -> PromptNode:
        try:
            return self.nodes[self._index[node_id]]
        except KeyError:
            raise NodeLookupError(node_id) from None

    def set_rating(self, node_id: int, rating: Rating) -> None:
        position = self._index.get(node_id)
        if position is None:
            raise NodeLookupError(node_id)
        self.nodes[position] = self.nodes[position].model_copy(update={"rating": rating})

    def window(self) -> List[PromptNode]:
        """Latest K nodes by append order"""
        return list(self.nodes[-self.window_size:])

    def restore_counter(self, next_id: int) -> None:
        self._next_id = max(self._next_id, next_id)


def _argmax_lowest_id(nodes: Sequence[PromptNode], scores: Sequence[float]) -> int:
    best = 0
    for idx in range(1, len(nodes)):
        if scores[idx] > scores[best] or (scores[idx] == scores[best] and nodes[idx].id < nodes[best].id):
            best = idx
    return best


def selection_probabilities(nodes: Sequence[PromptNode], policy: SelectionPolicy) -> np.ndarray:
    """p_i proportional to exp((mu_i + lambda * sigma_i) / T)"""
    scores = np.array([ucb_score(n.rating, policy.lam) for n in nodes])
    return special.softmax(scores / policy.temperature)


def select(pop: Population, policy: SelectionPolicy, rng: np.random.Generator) -> List[PromptNode]:
    """
        Pick min(M, |window|) distinct prompts from the window.
    """
    candidates = pop.window()
    if not candidates:
        raise ValueError("cannot select from an empty population")
    m = min(policy.M, len(candidates))
    if m == len(candidates) and policy.mode == "simplified":
        return candidates

    scores = [ucb_score(n.rating, policy.lam) for n in candidates]
    if policy.mode == "softmax":
        # Gumbel-top-m: the first pick follows the softmax, each later pick the
        # softmax renormalised over what is left
        keys = np.asarray(scores) / policy.temperature + rng.gumbel(size=len(candidates))
        picked = np.argsort(-keys, kind="stable")[:m]
        return [candidates[idx] for idx in picked]

    top = _argmax_lowest_id(candidates, scores)
    rest = [idx for idx in range(len(candidates)) if idx != top]
    picked = rng.choice(len(rest), size=m - 1, replace=False) if m > 1 else []
    return [candidates[top]] + [candidates[rest[idx]] for idx in picked]


def build_ranking(participant_ids: Sequence[int], values: Sequence[float]) -> Ranking:
    """
        Descending by value; exactly equal values share a tie group. Equal values
        are ordered by node id so the chain does not depend on participant order.
    """
    order = sorted(range(len(values)), key=lambda idx: (-values[idx], participant_ids[idx]))
    ties: List[int] = []
    group = 0
    for position, idx in enumerate(order):
        if position > 0 and values[idx] != values[order[position - 1]]:
            group += 1
        ties.append(group)
    return Ranking(order=order, ties=ties)


def record_tournament(pop: Population, participants: Sequence[int], values: Sequence[float],
                      cfg: RatingConfig) -> TournamentResult:
    """
        Rank participants by value, run the TrueSkill update and write the
        posteriors back into the population.
    """
    if len(participants) != len(values):
        raise ValueError(f"{len(participants)} participants but {len(values)} values")
    if len(set(participants)) != len(participants):
        raise ValueError(f"participants must be distinct: {list(participants)}")

    nodes = [pop.get(node_id) for node_id in participants]
    ranking = build_ranking(participants, values)
    posteriors = rank_update([n.rating for n in nodes], ranking, cfg)
    for node, rating in zip(nodes, posteriors):
        pop.set_rating(node.id, rating)

    pop.logger.info(
        f"Tournament {list(participants)} values={[round(v, 4) for v in values]} "
        f"order={ranking.order} ties={ranking.ties}"
    )
    return TournamentResult(
        participant_ids=list(participants),
        values=list(values),
        ranking=ranking,
        posteriors={node.id: rating for node, rating in zip(nodes, posteriors)},
    )


def ratings_table(pop: Population, lam: float) -> List[Tuple[int, float, float, float]]:
    """(id, mu, sigma, ucb) for every node, best UCB first"""
    rows = [(n.id, n.rating.mu, n.rating.sigma, ucb_score(n.rating, lam)) for n in pop.nodes]
    return sorted(rows, key=lambda row: (-row[3], row[0]))
