import json

import numpy as np
import pytest
from pydantic import ValidationError

from src.exceptions import NodeLookupError, UnknownFormatError
from src.population.population import (
    Origin,
    Population,
    PromptNode,
    SelectionPolicy,
    build_ranking,
    ratings_table,
    record_tournament,
    select,
    selection_probabilities,
)
from src.population.tree_export import export_tree, import_tree
from src.rating.trueskill import Rating, RatingConfig, ucb_score


THREE = [Rating(mu=25.0, sigma=1.0), Rating(mu=26.0, sigma=1.0), Rating(mu=24.5, sigma=1.5)]


def test_with_root():
    pop = Population.with_root("root text", Rating(), window_size=4)
    assert len(pop) == 1
    root = pop.get(0)
    assert root.origin == Origin.ROOT and root.parent_ids == [] and root.birth_iteration == 0
    assert pop.next_id == 1


def test_new_node_allocates_without_appending():
    pop = Population.with_root("root", Rating())
    child = pop.new_node("child", [0], Origin.MUTATION, 1, Rating())
    assert child.id == 1 and len(pop) == 1
    other = pop.new_node("other", [0], Origin.MUTATION, 1, Rating())
    assert other.id == 2
    pop.append(child)
    pop.append(other)
    assert [n.id for n in pop.nodes] == [0, 1, 2]


def test_append_checks_ids_and_lineage():
    pop = Population.with_root("root", Rating())
    child = pop.new_node("child", [0], Origin.MUTATION, 1, Rating())
    pop.append(child)
    with pytest.raises(ValueError):
        pop.append(child)
    with pytest.raises(ValueError):
        pop.append(pop.new_node("same-iteration", [1], Origin.MUTATION, 1, Rating()))
    with pytest.raises(NodeLookupError):
        pop.append(pop.new_node("orphan", [99], Origin.MUTATION, 5, Rating()))


def test_node_lineage_rules():
    with pytest.raises(ValidationError):
        PromptNode(id=1, text="x", parent_ids=[], origin=Origin.MUTATION, birth_iteration=1)
    with pytest.raises(ValidationError):
        PromptNode(id=1, text="x", parent_ids=[0, 2], origin=Origin.MUTATION, birth_iteration=1)
    with pytest.raises(ValidationError):
        PromptNode(id=0, text="x", parent_ids=[3], origin=Origin.ROOT)
    PromptNode(id=4, text="x", parent_ids=[0, 2, 3], origin=Origin.CROSSOVER, birth_iteration=2)


def test_get_unknown_node():
    pop = Population.with_root("root", Rating())
    with pytest.raises(NodeLookupError) as info:
        pop.get(7)
    assert info.value.node_id == 7
    with pytest.raises(NodeLookupError):
        pop.set_rating(7, Rating())


def test_window_is_latest_by_append_order(population_factory):
    pop = population_factory([Rating()] * 12, window_size=10)
    assert [n.id for n in pop.window()] == list(range(2, 12))
    assert len(pop) == 12


def test_set_rating_replaces_node():
    pop = Population.with_root("root", Rating())
    pop.set_rating(0, Rating(mu=30.0, sigma=2.0))
    assert pop.get(0).rating == Rating(mu=30.0, sigma=2.0)
    assert pop.get(0).text == "root"


# --- selection ---------------------------------------------------------------

def test_selection_probabilities_are_softmax_of_ucb(population_factory):
    pop = population_factory(THREE)
    probs = selection_probabilities(pop.nodes, SelectionPolicy(mode="softmax"))
    scores = np.array([27.0, 28.0, 27.5])
    expected = np.exp(scores - scores.max()) / np.exp(scores - scores.max()).sum()
    np.testing.assert_allclose(probs, expected, rtol=1e-12)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
def test_softmax_selection_frequencies(population_factory):
    pop = population_factory(THREE)
    policy = SelectionPolicy(mode="softmax", M=2)
    p = selection_probabilities(pop.nodes, policy)
    rng = np.random.default_rng(11)
    draws = 100_000
    first = np.zeros(3)
    included = np.zeros(3)
    for _ in range(draws):
        picked = [n.id for n in select(pop, policy, rng)]
        first[picked[0]] += 1
        included[picked] += 1
    # Inclusion in a draw of two without replacement
    inclusion = np.array([p[i] + sum(p[j] * p[i] / (1.0 - p[j]) for j in range(3) if j != i) for i in range(3)])
    np.testing.assert_allclose(first / draws, p, atol=0.01)
    np.testing.assert_allclose(included / draws, inclusion, atol=0.01)


def test_softmax_selection_concentrates_at_low_temperature(population_factory):
    pop = population_factory(THREE)
    policy = SelectionPolicy(mode="softmax", M=2, temperature=1e-3)
    rng = np.random.default_rng(0)
    for _ in range(500):
        picked = select(pop, policy, rng)
        assert picked[0].id == 1
        assert len({n.id for n in picked}) == 2


def test_simplified_selection_always_includes_argmax(population_factory):
    ratings = [Rating(mu=20.0 + k, sigma=8.0 - k) for k in range(6)]
    pop = population_factory(ratings)
    policy = SelectionPolicy(mode="simplified", M=3, lam=2.0)
    best = max(pop.nodes, key=lambda n: ucb_score(n.rating, 2.0)).id
    for seed in range(200):
        picked = select(pop, policy, np.random.default_rng(seed))
        assert picked[0].id == best
        assert len(picked) == 3 and len({n.id for n in picked}) == 3


def test_simplified_selection_tie_goes_to_lowest_id(population_factory):
    pop = population_factory([Rating(mu=20.0, sigma=2.0), Rating(mu=30.0, sigma=2.0),
                              Rating(mu=30.0, sigma=2.0), Rating(mu=10.0, sigma=2.0)])
    picked = select(pop, SelectionPolicy(M=2), np.random.default_rng(0))
    assert picked[0].id == 1


def test_simplified_selection_second_slot_is_uniform(population_factory):
    # UCB scores 41.67, 41.67 and 30.0
    pop = population_factory([Rating(mu=25.0, sigma=25.0 / 3), Rating(mu=25.0, sigma=25.0 / 3),
                              Rating(mu=10.0, sigma=10.0)])
    policy = SelectionPolicy(M=2, lam=2.0)
    rng = np.random.default_rng(0)
    seconds = []
    for _ in range(10_000):
        picked = select(pop, policy, rng)
        assert picked[0].id == 0 and len(picked) == 2
        seconds.append(picked[1].id)
    assert set(seconds) == {1, 2}
    assert seconds.count(1) / len(seconds) == pytest.approx(0.5, abs=0.02)


def test_selection_takes_whole_small_window(population_factory):
    pop = population_factory([Rating(), Rating(mu=30.0)])
    picked = select(pop, SelectionPolicy(M=3), np.random.default_rng(0))
    assert [n.id for n in picked] == [0, 1]
    single = select(Population.with_root("root", Rating()), SelectionPolicy(M=3), np.random.default_rng(0))
    assert [n.id for n in single] == [0]


def test_selection_ignores_nodes_outside_window(population_factory):
    ratings = [Rating(mu=50.0, sigma=1.0)] + [Rating(mu=20.0, sigma=1.0)] * 5
    pop = population_factory(ratings, window_size=3)
    for seed in range(20):
        picked = select(pop, SelectionPolicy(M=2), np.random.default_rng(seed))
        assert all(n.id >= 3 for n in picked)


# --- tournaments -------------------------------------------------------------

def test_build_ranking_orders_and_ties():
    ranking = build_ranking([4, 7, 2], [0.5, 0.8, 0.5])
    assert ranking.order == [1, 2, 0]
    assert ranking.ties == [0, 1, 1]
    assert not ranking.is_draw(0) and ranking.is_draw(1)


def test_record_tournament_updates_population(population_factory):
    pop = population_factory([Rating()] * 3)
    result = record_tournament(pop, [0, 1, 2], [0.2, 0.9, 0.5], RatingConfig())
    assert result.ranking.order == [1, 2, 0]
    mus = {node_id: pop.get(node_id).rating.mu for node_id in (0, 1, 2)}
    assert mus[1] > mus[2] > mus[0]
    assert result.posteriors[1] == pop.get(1).rating


def test_record_tournament_is_order_independent(population_factory):
    ratings = [Rating(mu=24.0, sigma=6.0), Rating(mu=27.0, sigma=4.0), Rating(mu=25.0, sigma=7.0)]
    first = population_factory(ratings)
    second = population_factory(ratings)
    record_tournament(first, [0, 1, 2], [0.4, 0.4, 0.7], RatingConfig())
    record_tournament(second, [2, 0, 1], [0.7, 0.4, 0.4], RatingConfig())
    for node_id in (0, 1, 2):
        assert first.get(node_id).rating == second.get(node_id).rating


def test_record_tournament_rejects_bad_input(population_factory):
    pop = population_factory([Rating()] * 3)
    with pytest.raises(ValueError):
        record_tournament(pop, [0, 1], [0.5], RatingConfig())
    with pytest.raises(ValueError):
        record_tournament(pop, [0, 0], [0.5, 0.2], RatingConfig())
    with pytest.raises(NodeLookupError):
        record_tournament(pop, [0, 9], [0.5, 0.2], RatingConfig())


def test_ratings_table_sorted_by_ucb(population_factory):
    pop = population_factory(THREE)
    table = ratings_table(pop, 2.0)
    assert [row[0] for row in table] == [1, 2, 0]
    assert table[0][3] == pytest.approx(28.0)


# --- tree export -------------------------------------------------------------

def _small_tree() -> Population:
    pop = Population.with_root("You are a solver.\n1. Read carefully.", Rating())
    pop.append(pop.new_node('1. Say "hi"', [0], Origin.MUTATION, 1, Rating(mu=26.0, sigma=7.0)))
    pop.append(pop.new_node("3. Merge", [1, 0], Origin.CROSSOVER, 2, Rating(mu=27.0, sigma=6.0)))
    return pop


def test_export_dot():
    dot = export_tree(_small_tree(), "dot").decode("utf-8")
    assert dot.startswith("digraph espl {")
    assert 'n0 -> n1 [label="mutation"];' in dot
    assert 'n1 -> n2 [label="crossover"];' in dot
    assert 'n0 -> n2 [label="crossover"];' in dot
    assert '\\"hi\\"' in dot
    assert "mu=26.00 sigma=7.00" in dot


def test_export_json_round_trip():
    pop = _small_tree()
    pop.new_node("allocated but dropped", [0], Origin.MUTATION, 3, Rating())
    data = export_tree(pop, "json")
    restored = import_tree(data)
    assert [n.model_dump() for n in restored.nodes] == [n.model_dump() for n in pop.nodes]
    assert restored.next_id == pop.next_id == 4
    assert json.loads(data)["window_size"] == pop.window_size


def test_export_unknown_format():
    with pytest.raises(UnknownFormatError):
        export_tree(_small_tree(), "graphml")
