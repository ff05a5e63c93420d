import re
from collections import Counter

import numpy as np
import pytest

from conftest import chain_genome, node
from topocoevo.exceptions import NoViableAnchor
from topocoevo.genome import DomainTag, Genome, Tier, make_genome, validate_genome
from topocoevo.initialization import TopologyKind
from topocoevo.prompts import default_pool, default_registry
from topocoevo.variation import (
    CrossoverPlan,
    MutationWeights,
    crossover_pmi,
    donor_module,
    mutate_radical,
    mutate_role,
    mutate_topology,
    rank_by_boundary,
    rank_weights,
    select_anchors,
)


def retained_payload(g: Genome, ids) -> dict:
    d = {n["id"]: n for n in g.to_dict()["nodes"]}
    return {i: (d[i]["role"], d[i]["tier"], d[i]["template"]) for i in ids}


def reservations_intact(parent: Genome, child: Genome) -> bool:
    return (
        child.input_node == parent.input_node
        and child.decision_node == parent.decision_node
        and child.node_map[child.input_node] == parent.node_map[parent.input_node]
        and child.node_map[child.decision_node] == parent.node_map[parent.decision_node]
    )


# -- anchors --------------------------------------------------------------------


def test_shared_role_is_matched():
    a = chain_genome(("Critic", "MathSolver"), "a")
    b = chain_genome(("MathSolver", "Planner", "Verifier"), "b")
    plan = select_anchors(a, b, np.random.default_rng(0))
    assert plan.matched_by == "role"
    assert a.role_of(plan.recipient_anchor).name == b.role_of(plan.donor_anchor).name == "MathSolver"
    assert plan.anchor_pairs == [(2, 1)]


def test_donor_without_free_nodes():
    with pytest.raises(NoViableAnchor):
        select_anchors(chain_genome(("Critic",)), chain_genome((), "empty"), np.random.default_rng(0))


def test_anchors_never_reserved(population):
    rng = np.random.default_rng(1)
    for i in range(40):
        a, b = population[i % 32], population[(i * 7 + 3) % 32]
        plan = select_anchors(a, b, rng)
        assert plan.donor_anchor in b.free_nodes()
        assert plan.recipient_anchor is None or plan.recipient_anchor in a.free_nodes()
        assert b.input_node not in plan.donor_module and b.decision_node not in plan.donor_module


def test_rank_frequencies_follow_inverse_rank():
    # star-ish donor with distinct boundary degrees, no role shared with the recipient
    nodes = [node(0, "Input", tier=Tier.GENERAL), node(1, "Critic"), node(2, "Planner"), node(3, "Verifier"),
             node(4, "Decision", tier=Tier.GENERAL, critical=True)]
    edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (1, 4), (2, 4), (3, 4)]
    donor = make_genome(nodes, edges, 0, 4, "d")
    recipient = chain_genome(("Summarizer",), "r")
    ranked = rank_by_boundary(donor, donor.free_nodes())
    assert [donor.boundary_degree(v) for v in ranked] == sorted((donor.boundary_degree(v) for v in ranked), reverse=True)
    rng = np.random.default_rng(5)
    counts = Counter(select_anchors(recipient, donor, rng).donor_anchor for _ in range(10_000))
    expected = rank_weights(3)
    for v, p in zip(ranked, expected):
        # binomial 4-sigma band
        assert abs(counts[v] / 10_000 - p) < 4 * np.sqrt(p * (1 - p) / 10_000)


def test_rank_ties_break_by_id(chain):
    assert rank_by_boundary(chain, [2, 1]) == [1, 2]


def test_module_radius(chain):
    assert donor_module(chain, 2, 0) == {2}
    assert donor_module(chain, 2, 1) == {1, 2}
    assert donor_module(chain, 2, 5) == {1, 2}


# -- PMI crossover -----------------------------------------------------------------


def test_empty_module_is_identity(chain):
    donor = chain_genome(("Critic",), "d")
    plan = CrossoverPlan(chain.genome_id, donor.genome_id, 1, 1, frozenset())
    assert crossover_pmi(chain, donor, plan) is chain


def test_one_node_module_byte_diff():
    special = "Cross-check each claim step by step against the question.\nFinal answer: <answer>"
    recipient = chain_genome(("MathSolver", "OptionVerifier", "Critic"), "r")
    donor = make_genome(
        [node(0, "Input", tier=Tier.GENERAL), node(1, "FactChecker", special),
         node(2, "Decision", tier=Tier.GENERAL, critical=True)], [(0, 1), (1, 2)], 0, 2, "d")
    plan = CrossoverPlan("r", "d", 2, 1, frozenset({1}), ((1, 1),), ((1, 3),))
    child = crossover_pmi(recipient, donor, plan)
    assert validate_genome(child) == []
    assert len(child.free_nodes()) == 3  # anchor 2 replaced by the one transplanted node
    retained = [v for v in recipient.node_ids if v != 2]
    assert retained_payload(child, retained) == retained_payload(recipient, retained)
    new = [v for v in child.node_ids if v not in recipient.node_map]
    assert len(new) == 1 and child.node_map[new[0]].template.body == special
    # appending instead of replacing: recipient anchor None keeps all three
    plan = CrossoverPlan("r", "d", None, 1, frozenset({1}), ((0, 1),), ((1, 4),))
    child = crossover_pmi(recipient, donor, plan)
    assert len(child.free_nodes()) == 4
    assert retained_payload(child, recipient.node_ids) == retained_payload(recipient, recipient.node_ids)


def test_invalid_stitch_is_rejected(chain):
    donor = chain_genome(("Critic",), "d")
    # wire the module back into the input: InputHasInEdge
    plan = CrossoverPlan(chain.genome_id, "d", 1, 1, frozenset({1}), ((0, 1),), ((1, 0),))
    out = crossover_pmi(chain, donor, plan)
    assert out.same_structure(chain) and out.lineage[-1] == "crossover:rejected"


def test_invalid_donor_template_gets_default():
    recipient = chain_genome(("MathSolver",), "r")
    donor = make_genome([node(0, "Input", tier=Tier.GENERAL), node(1, "Critic", "Just answer."),
                         node(2, "Decision", tier=Tier.GENERAL, critical=True)], [(0, 1), (1, 2)], 0, 2, "d")
    child = crossover_pmi(recipient, donor, select_anchors(recipient, donor, np.random.default_rng(0)))
    assert validate_genome(child) == []
    new = [v for v in child.node_ids if v not in recipient.node_map]
    assert child.node_map[new[0]].template.body != "Just answer."


def test_crossover_pmi_sweep(population):
    rng = np.random.default_rng(2)
    for _ in range(300):
        a, b = population[int(rng.integers(32))], population[int(rng.integers(32))]
        plan = select_anchors(a, b, rng)
        child = crossover_pmi(a, b, plan)
        assert validate_genome(child) == []
        assert reservations_intact(a, child)
        kept = [v for v in a.node_ids if v in child.node_map]
        assert retained_payload(child, kept) == retained_payload(a, kept)


# -- topology mutation --------------------------------------------------------------


ONLY = {
    "AddEdge": MutationWeights(1, 0, 0, 0),
    "RemoveEdge": MutationWeights(0, 1, 0, 0),
    "AddNode": MutationWeights(0, 0, 1, 0),
    "RemoveNode": MutationWeights(0, 0, 0, 1),
}


def test_remove_node_without_free_nodes():
    g = chain_genome((), "bare")
    out = mutate_topology(g, ONLY["RemoveNode"], np.random.default_rng(0))
    assert out.same_structure(g) and out.lineage[-1] == "topology:RemoveNode:unchanged"


def test_add_edge_on_complete_dag():
    ids = [0, 1, 2, 3]
    nodes = [node(0, "Input", tier=Tier.GENERAL), node(1, "Critic"), node(2, "Planner"),
             node(3, "Decision", tier=Tier.GENERAL, critical=True)]
    g = make_genome(nodes, [(u, v) for u in ids for v in ids if u < v], 0, 3, "full")
    out = mutate_topology(g, ONLY["AddEdge"], np.random.default_rng(0))
    assert out.same_structure(g) and "unchanged" in out.lineage[-1]


def test_each_operator_does_its_edit(population):
    rng = np.random.default_rng(3)
    g = max(population, key=lambda x: len(x.edges))
    n, e = len(g.nodes), len(g.edges)
    added = mutate_topology(g, ONLY["AddNode"], rng)
    assert len(added.nodes) == n + 1
    removed = mutate_topology(g, ONLY["RemoveNode"], rng)
    assert len(removed.nodes) == n - 1
    more = mutate_topology(g, ONLY["AddEdge"], rng)
    assert len(more.edges) in (e, e + 1)
    less = mutate_topology(g, ONLY["RemoveEdge"], rng)
    assert len(less.edges) in (e, e - 1)


def test_add_node_respects_cap(chain):
    out = mutate_topology(chain, ONLY["AddNode"], np.random.default_rng(0), max_free=2)
    assert out.same_structure(chain)


def test_topology_sweep(population):
    rng = np.random.default_rng(4)
    w = MutationWeights()
    for i in range(1000):
        g = population[i % 32]
        out = mutate_topology(g, w, rng)
        assert validate_genome(out) == [] and reservations_intact(g, out)


def test_weights_reject_all_zero():
    with pytest.raises(ValueError):
        MutationWeights(0, 0, 0, 0)


# -- role mutation ------------------------------------------------------------------


def test_only_output_critical_free_node_is_untouched():
    nodes = [node(0, "Input", tier=Tier.GENERAL), node(1, "Aggregator", tier=Tier.GENERAL, critical=True),
             node(2, "Decision", tier=Tier.GENERAL, critical=True)]
    g = make_genome(nodes, [(0, 1), (1, 2)], 0, 2, "agg")
    out = mutate_role(g, default_pool(), None, np.random.default_rng(0))
    assert out.same_structure(g) and out.lineage[-1] == "role:unchanged"


def test_role_change_to_inspector():
    pool = default_registry().pool(DomainTag.MATH_WORD).restricted({"MathSolver", "Inspector"})
    g = chain_genome(("MathSolver",), "m")
    out = mutate_role(g, pool, None, np.random.default_rng(0))
    assert out.role_of(1).name == "Inspector"
    first = out.node_map[1].template.body.splitlines()[0]
    assert re.match(r"^You are the Inspector\b", first)
    assert validate_genome(out) == []


def test_single_role_pool_regenerates_template():
    pool = default_registry().pool(DomainTag.MATH_WORD).restricted({"MathSolver"})
    g = chain_genome(("MathSolver",), "m")
    out = mutate_role(g, pool, None, np.random.default_rng(0))
    assert out.role_of(1).name == "MathSolver"
    assert out.node_map[1].template.body != g.node_map[1].template.body
    assert out.node_map[1].template.body.startswith("You are the Math Solver")


def test_role_mutation_falls_back_on_broken_mutator(chain):
    def broken(role, domain):
        raise RuntimeError("down")

    out = mutate_role(chain, default_pool(), broken, np.random.default_rng(0))
    assert validate_genome(out) == []
    assert out.lineage[-1].split(":")[-1] in ("registry", "fallback")


def test_role_sweep(population):
    rng = np.random.default_rng(6)
    pool = default_pool()
    for i in range(500):
        g = population[i % 32]
        out = mutate_role(g, pool, None, rng)
        assert validate_genome(out) == [] and reservations_intact(g, out)
        changed = [v for v in g.node_ids if out.node_map[v] != g.node_map[v]]
        assert len(changed) <= 1
        assert all(not g.role_of(v).output_critical for v in changed)


# -- radical mutation ----------------------------------------------------------------


def test_radical_to_chain():
    g = chain_genome(("Critic", "Planner", "Verifier"), "c")
    star = mutate_radical(g, np.random.default_rng(0), kind=TopologyKind.STAR, target_free=3)
    out = mutate_radical(star, np.random.default_rng(0), kind=TopologyKind.CHAIN, target_free=3)
    order = [v for v in star.topological_order() if v in star.free_nodes()]
    path = [0, *order, 4]
    assert sorted(out.edges) == sorted(zip(path, path[1:]))


def test_radical_conserves_roles_without_resize(population):
    rng = np.random.default_rng(7)
    for g in population[:16]:
        m = len(g.free_nodes())
        out = mutate_radical(g, rng, target_free=m)
        assert Counter(out.role_of(v).name for v in out.free_nodes()) == Counter(g.role_of(v).name for v in g.free_nodes())


def test_radical_resizing(population):
    g = max(population, key=lambda x: len(x.free_nodes()))
    m = len(g.free_nodes())
    smaller = mutate_radical(g, np.random.default_rng(0), kind=TopologyKind.TREE, target_free=m - 1)
    dropped = set(g.free_nodes()) - set(smaller.free_nodes())
    low = min(g.boundary_degree(v) for v in g.free_nodes())
    assert len(dropped) == 1 and g.boundary_degree(dropped.pop()) == low
    bigger = mutate_radical(g, np.random.default_rng(0), kind=TopologyKind.LAYERED, target_free=m + 2)
    assert len(bigger.free_nodes()) == m + 2 and validate_genome(bigger) == []


def test_radical_sweep(population):
    rng = np.random.default_rng(8)
    for i in range(1000):
        g = population[i % 32]
        out = mutate_radical(g, rng)
        assert validate_genome(out) == [] and reservations_intact(g, out)
        assert sum(1 for n in out.nodes if n.role.name == "Decision") == 1


# -- determinism -------------------------------------------------------------------


def test_operators_are_seed_deterministic(population):
    def run(seed):
        rng = np.random.default_rng(seed)
        a, b = population[3], population[9]
        child = crossover_pmi(a, b, select_anchors(a, b, rng))
        child = mutate_topology(child, MutationWeights(), rng)
        child = mutate_role(child, default_pool(), None, rng)
        return mutate_radical(child, rng).to_json()

    assert run(11) == run(11)
