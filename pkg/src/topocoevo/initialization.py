"""Initial population: Latin hypercube design, topology templates, roles, FDC probe."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .evaluation import PreferenceParams, preference_score
from .exceptions import DegenerateInputWarning, DomainError
from .genome import (
    DECISION_ROLE,
    INPUT_ROLE,
    DistanceWeights,
    Genome,
    NodeSpec,
    PromptTemplate,
    RoleId,
    Tier,
    genome_distance,
    validate_genome,
)
from .prompts import N_STYLES, TIERS, RolePool, default_pool, reserved_templates, template_for

# LHS coordinate layout
SIZE, DENSITY, PATTERN, COMPOSITION, STYLE = range(5)
LHS_DIMS = 5


class TopologyKind(str, Enum):
    CHAIN = "Chain"
    TREE = "Tree"
    STAR = "Star"
    LAYERED = "Layered"
    SPARSE_RANDOM_DAG = "SparseRandomDag"


KINDS = tuple(TopologyKind)
RADICAL_KINDS = (TopologyKind.CHAIN, TopologyKind.TREE, TopologyKind.STAR, TopologyKind.LAYERED)


def lhs_sample(n: int, d: int, seed=None) -> np.ndarray:
    """``n`` points in ``[0, 1)^d`` with one point per stratum on every axis."""
    if n < 1 or d < 1:
        raise DomainError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    out = np.empty((n, d))
    for j in range(d):
        out[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return out


@dataclass(frozen=True)
class TopologyGraph:
    """Role-free communication graph produced by a topology template."""

    node_ids: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    input_node: int
    decision_node: int
    kind: TopologyKind = TopologyKind.CHAIN

    def free_nodes(self) -> list[int]:
        return [i for i in self.node_ids if i not in (self.input_node, self.decision_node)]

    def skeleton(self) -> Genome:
        """Genome with placeholder roles, used for structural validation."""
        filler = RoleId("Planner", Tier.GENERAL)
        body = "Work step by step."
        nodes = []
        for i in self.node_ids:
            role = INPUT_ROLE if i == self.input_node else DECISION_ROLE if i == self.decision_node else filler
            nodes.append(NodeSpec(i, role, PromptTemplate(body, role)))
        return Genome(tuple(nodes), self.edges, self.input_node, self.decision_node, "skeleton")

    def violations(self) -> list[str]:
        return validate_genome(self.skeleton(), check_templates=False)


def _repair(order: Sequence[int], edges: set, input_node: int, decision_node: int) -> set:
    """Add the fewest links so every node sits on an input-to-decision path.

    ``order`` must be a topological order consistent with ``edges``; new
    links only go from the input or to the decision node, so no cycle can
    appear.
    """
    has_in = {v for _, v in edges}
    has_out = {u for u, _ in edges}
    for node in order:
        if node in (input_node, decision_node):
            continue
        if node not in has_in:
            edges.add((input_node, node))
        if node not in has_out:
            edges.add((node, decision_node))
    if not edges or not any(v == decision_node for _, v in edges):
        edges.add((input_node, decision_node))
    return edges


def template_edges(
    kind: TopologyKind,
    free: Sequence[int],
    input_node: int,
    decision_node: int,
    density: float = 0.0,
    rng: np.random.Generator | None = None,
) -> set[tuple[int, int]]:
    """Edges for ``kind`` over free nodes taken in the given order.

    Every edge points forward in ``[input] + free + [decision]``, so the
    result is acyclic for any ordering of ``free``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    free = list(free)
    m = len(free)
    edges: set[tuple[int, int]] = set()
    if m == 0:
        return {(input_node, decision_node)}

    if kind is TopologyKind.CHAIN:
        path = [input_node, *free, decision_node]
        edges.update(zip(path, path[1:]))
    elif kind is TopologyKind.TREE:
        heap = [input_node, *free]
        for k in range(1, len(heap)):
            edges.add((heap[(k - 1) // 2], heap[k]))
    elif kind is TopologyKind.STAR:
        hub, spokes = free[0], free[1:]
        edges.add((input_node, hub))
        for s in spokes:
            edges.add((hub, s))
    elif kind is TopologyKind.LAYERED:
        n_layers = max(1, math.ceil(math.sqrt(m)))
        layers = [list(chunk) for chunk in np.array_split(np.array(free), n_layers) if len(chunk)]
        layers = [[int(x) for x in layer] for layer in layers]
        p = 0.35 + 0.65 * float(density)
        for u in layers[0]:
            edges.add((input_node, u))
        for upper, lower in zip(layers, layers[1:]):
            for u in upper:
                for v in lower:
                    if rng.random() < p:
                        edges.add((u, v))
            for v in lower:
                if not any((u, v) in edges for u in upper):
                    edges.add((upper[int(rng.integers(len(upper)))], v))
            for u in upper:
                if not any((u, v) in edges for v in lower):
                    edges.add((u, lower[int(rng.integers(len(lower)))]))
        for u in layers[-1]:
            edges.add((u, decision_node))
    elif kind is TopologyKind.SPARSE_RANDOM_DAG:
        order = [input_node, *free]
        for k in range(1, len(order)):
            edges.add((order[int(rng.integers(k))], order[k]))
        edges = _repair(free, edges, input_node, decision_node)
        full = [input_node, *free, decision_node]
        candidates = [
            (full[a], full[b])
            for a in range(len(full))
            for b in range(a + 1, len(full))
            if (full[a], full[b]) not in edges and not (a == 0 and b == len(full) - 1)
        ]
        n_extra = int(round(float(density) * 0.6 * len(candidates)))
        if n_extra:
            picks = rng.choice(len(candidates), size=n_extra, replace=False)
            edges.update(candidates[int(i)] for i in sorted(picks))
    else:  # pragma: no cover
        raise ValueError(kind)
    return _repair(free, edges, input_node, decision_node)


def agents_from_coordinate(x: float, min_agents: int = 2, max_agents: int = 8) -> int:
    span = max_agents - min_agents + 1
    return min(max_agents, min_agents + int(math.floor(x * span)))


def kind_from_coordinate(x: float, kinds: Sequence[TopologyKind] = KINDS) -> TopologyKind:
    return kinds[min(len(kinds) - 1, int(math.floor(x * len(kinds))))]


def instantiate_topology(sample: Sequence[float], seed=None, min_agents: int = 2, max_agents: int = 8) -> TopologyGraph:
    """Map an LHS point to a valid DAG.

    ``sample[SIZE]`` picks the number of non-input agents (decision
    included), ``sample[PATTERN]`` the template and ``sample[DENSITY]`` the
    edge density of the layered and sparse-random templates.
    """
    if len(sample) < 3:
        raise DomainError("sample needs at least size, density and pattern coordinates")
    n_agents = agents_from_coordinate(float(sample[SIZE]), min_agents, max_agents)
    kind = kind_from_coordinate(float(sample[PATTERN]))
    rng = np.random.default_rng(seed)
    free = list(range(1, n_agents))
    decision = n_agents
    edges = template_edges(kind, free, 0, decision, float(sample[DENSITY]), rng)
    return TopologyGraph(tuple(range(n_agents + 1)), tuple(sorted(edges)), 0, decision, kind)


def tier_weights(composition: float) -> np.ndarray:
    """Triangular weights over (task-specific, domain-heuristic, general).

    0 puts all mass on task-specific roles, 0.5 on domain-heuristic, 1 on
    general ones.
    """
    pos = 2.0 * min(max(float(composition), 0.0), 1.0)
    return np.array([max(0.0, 1.0 - abs(pos - i)) for i in range(3)])


def sample_role(pool: RolePool, composition: float, rng: np.random.Generator) -> RoleId:
    by_tier = [pool.roles(t, include_output_critical=False) for t in TIERS]
    w = tier_weights(composition) * np.array([1.0 if r else 0.0 for r in by_tier])
    if w.sum() == 0:
        w = np.array([1.0 if r else 0.0 for r in by_tier])
    tier = int(rng.choice(3, p=w / w.sum()))
    choices = by_tier[tier]
    return choices[int(rng.integers(len(choices)))]


def assign_roles_and_prompts(
    graph: TopologyGraph,
    pool: RolePool | None = None,
    style_coord: float = 0.0,
    seed=None,
    composition: float = 0.5,
    genome_id: str = "g0",
) -> Genome:
    pool = pool or default_pool()
    rng = np.random.default_rng(seed)
    variant = min(N_STYLES - 1, int(math.floor(style_coord * N_STYLES)))
    input_t, decision_t = reserved_templates(pool, variant)
    nodes = [NodeSpec(graph.input_node, INPUT_ROLE, input_t), NodeSpec(graph.decision_node, DECISION_ROLE, decision_t)]
    for node in graph.free_nodes():
        role = sample_role(pool, composition, rng)
        nodes.append(NodeSpec(node, role, template_for(role, pool, variant)))
    return Genome(tuple(nodes), graph.edges, graph.input_node, graph.decision_node, genome_id,
                  (f"init:{graph.kind.value}",))


def initial_population(
    n: int,
    seed: int = 0,
    pool: RolePool | None = None,
    min_agents: int = 2,
    max_agents: int = 8,
    id_prefix: str = "g000",
) -> list[Genome]:
    """``n`` genomes from one LHS design; fully determined by ``seed``."""
    pool = pool or default_pool()
    design = lhs_sample(n, LHS_DIMS, seed)
    children = np.random.SeedSequence(seed).spawn(n)
    population = []
    for i, (row, ss) in enumerate(zip(design, children)):
        topo_seed, role_seed = ss.spawn(2)
        graph = instantiate_topology(row, np.random.default_rng(topo_seed), min_agents, max_agents)
        population.append(assign_roles_and_prompts(graph, pool, row[STYLE], np.random.default_rng(role_seed),
                                                   row[COMPOSITION], f"{id_prefix}_{i:02d}"))
    return population


# ---------------------------------------------------------------------------
# rank correlation and the landscape probe


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _spearman(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, bool]:
    if len(xs) != len(ys) or len(xs) < 2:
        raise DomainError("spearman needs two sequences of equal length >= 2")
    rx, ry = average_ranks(xs), average_ranks(ys)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return 0.0, True
    return max(-1.0, min(1.0, float(dx @ dy) / denom)), False


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman correlation with average ranks for ties.

    A constant input has no rank information: the result is 0.0 and a
    ``DegenerateInputWarning`` is emitted.
    """
    rho, degenerate = _spearman(xs, ys)
    if degenerate:
        warnings.warn("spearman: constant input, returning 0", DegenerateInputWarning, stacklevel=2)
    return rho


@dataclass(frozen=True)
class FdcReport:
    fdc: float
    best_genome_id: str
    n0: int
    preference_scores: tuple[float, ...]
    distances: tuple[float, ...]
    genome_ids: tuple[str, ...] = ()
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "fdc": self.fdc,
            "best_genome_id": self.best_genome_id,
            "n0": self.n0,
            "preference_scores": list(self.preference_scores),
            "distances": list(self.distances),
            "genome_ids": list(self.genome_ids),
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FdcReport":
        return cls(float(d["fdc"]), d["best_genome_id"], int(d["n0"]), tuple(d["preference_scores"]),
                   tuple(d["distances"]), tuple(d.get("genome_ids", ())), bool(d.get("degenerate", False)))


def fdc(population: Sequence[tuple[float, Genome]], weights: DistanceWeights = DistanceWeights()) -> FdcReport:
    """Spearman correlation between preference scores and distance to the best.

    The best genome is the highest score, ties going to the lowest
    genome id. A flat score vector (or flat distances) gives a report with
    ``degenerate=True`` and ``fdc=0.0``.
    """
    if len(population) < 3:
        raise DomainError("fdc needs at least three genomes")
    scores = [float(s) for s, _ in population]
    best_score, best = min(population, key=lambda p: (-p[0], p[1].genome_id))
    distances = [genome_distance(g, best, weights) for _, g in population]
    rho, degenerate = _spearman(scores, distances)
    return FdcReport(rho, best.genome_id, len(population), tuple(scores), tuple(distances),
                     tuple(g.genome_id for _, g in population), degenerate)


def probe_scores(records, params: PreferenceParams, min_accuracy: float = 1e-6) -> list[float]:
    """Preference scores for evaluated records; accuracy is floored at ``min_accuracy``."""
    return [preference_score(max(r.accuracy, min_accuracy), r.token_cost, r.complexity, params) for r in records]


@dataclass(frozen=True)
class CrossoverBias:
    base_rate: float = 0.6
    gain: float = 0.2
    lo: float = 0.3
    hi: float = 0.9

    def rate(self, fdc_value: float) -> float:
        """More negative FDC (an exploitable landscape) raises recombination."""
        return min(self.hi, max(self.lo, self.base_rate + self.gain * (-fdc_value)))
