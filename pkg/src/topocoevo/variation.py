"""Structural crossover with prompt minimal inheritance, and the mutation operators.

Every operator is total: it returns a valid genome, falling back to the
(unmodified) input with a lineage tag when an edit cannot be applied.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import NoViableAnchor
from .genome import DEFAULT_MARKERS, Genome, NodeSpec, template_violations, validate_genome
from .initialization import RADICAL_KINDS, TopologyKind, template_edges
from .prompts import PromptMutator, RolePool, default_pool, lightweight_template, regenerate_template, template_for

TOPOLOGY_OPS = ("AddEdge", "RemoveEdge", "AddNode", "RemoveNode")


def derive_id(*parts) -> str:
    digest = hashlib.blake2b("|".join(map(str, parts)).encode(), digest_size=6).hexdigest()
    return f"g{digest}"


def _tagged(g: Genome, tag: str) -> Genome:
    return g.with_changes(lineage=(*g.lineage, tag))


@dataclass(frozen=True)
class MutationWeights:
    add_edge: float = 0.3
    remove_edge: float = 0.3
    add_node: float = 0.2
    remove_node: float = 0.2
    role_rate: float = 0.3
    topo_rate: float = 0.5

    def __post_init__(self):
        w = self.as_array()
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("operator weights must be non-negative and not all zero")

    def as_array(self) -> np.ndarray:
        return np.array([self.add_edge, self.remove_edge, self.add_node, self.remove_node], dtype=float)

    def shares(self) -> dict[str, float]:
        w = self.as_array()
        return dict(zip(TOPOLOGY_OPS, w / w.sum()))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("add_edge", "remove_edge", "add_node", "remove_node", "role_rate", "topo_rate")}


# ---------------------------------------------------------------------------
# crossover


@dataclass(frozen=True)
class CrossoverPlan:
    """Which donor module replaces which recipient node, and how it is wired.

    ``recipient_anchor`` is None when the recipient has no free node; the
    module is then placed between input and decision. ``stitch_in`` holds
    ``(recipient node, donor node)`` links into the module and ``stitch_out``
    holds ``(donor node, recipient node)`` links out of it.
    """

    recipient_id: str
    donor_id: str
    recipient_anchor: int | None
    donor_anchor: int | None
    donor_module: frozenset[int]
    stitch_in: tuple[tuple[int, int], ...] = ()
    stitch_out: tuple[tuple[int, int], ...] = ()
    matched_by: str = "boundary"

    @property
    def anchor_pairs(self) -> list[tuple[int | None, int | None]]:
        return [(self.recipient_anchor, self.donor_anchor)]

    @property
    def stitch_edges(self) -> list[tuple[tuple[str, int], tuple[str, int]]]:
        return [(("recipient", a), ("donor", b)) for a, b in self.stitch_in] + [
            (("donor", a), ("recipient", b)) for a, b in self.stitch_out
        ]


def rank_weights(n: int) -> np.ndarray:
    """Sampling weights proportional to ``1 / rank``."""
    w = 1.0 / np.arange(1, n + 1)
    return w / w.sum()


def rank_by_boundary(g: Genome, nodes: Sequence[int]) -> list[int]:
    """Nodes by boundary degree descending, ties by ascending id."""
    return sorted(nodes, key=lambda v: (-g.boundary_degree(v), v))


def _sample_ranked(g: Genome, nodes: Sequence[int], rng: np.random.Generator) -> int:
    ranked = rank_by_boundary(g, nodes)
    return ranked[int(rng.choice(len(ranked), p=rank_weights(len(ranked))))]


def donor_module(donor: Genome, anchor: int, radius: int = 1) -> frozenset[int]:
    """Anchor plus its free in-neighbours up to ``radius`` hops upstream."""
    reserved = {donor.input_node, donor.decision_node}
    module = {anchor}
    frontier = {anchor}
    for _ in range(radius):
        frontier = {p for v in frontier for p in donor.in_neighbors(v) if p not in reserved} - module
        module |= frontier
    return frozenset(module)


def plan_stitching(recipient: Genome, donor: Genome, recipient_anchor: int | None, module: frozenset[int]):
    inside_in = {v for u, v in donor.edges if u in module and v in module}
    inside_out = {u for u, v in donor.edges if u in module and v in module}
    entries = sorted(v for v in module if v not in inside_in)
    exits = sorted(v for v in module if v not in inside_out)
    if recipient_anchor is None:
        preds, succs = [recipient.input_node], [recipient.decision_node]
    else:
        preds, succs = recipient.in_neighbors(recipient_anchor), recipient.out_neighbors(recipient_anchor)
    stitch_in = tuple((p, m) for m in entries for p in preds)
    stitch_out = tuple((m, s) for m in exits for s in succs)
    return stitch_in, stitch_out


def select_anchors(recipient: Genome, donor: Genome, rng: np.random.Generator, radius: int = 1) -> CrossoverPlan:
    """Choose the crossover interface.

    Exact canonical-role matches between free nodes win; otherwise the donor
    and recipient anchors are drawn from nodes ranked by boundary degree
    with ``1/rank`` weights. Input and decision nodes are never anchors.
    """
    donor_free = donor.free_nodes()
    if not donor_free:
        raise NoViableAnchor(f"donor {donor.genome_id} has no free node")
    recipient_free = recipient.free_nodes()
    shared = sorted({recipient.role_of(v).name for v in recipient_free} & {donor.role_of(v).name for v in donor_free})
    if shared:
        name = shared[int(rng.integers(len(shared)))]
        d = min(v for v in donor_free if donor.role_of(v).name == name)
        r = min(v for v in recipient_free if recipient.role_of(v).name == name)
        matched_by = "role"
    else:
        d = _sample_ranked(donor, donor_free, rng)
        r = _sample_ranked(recipient, recipient_free, rng) if recipient_free else None
        matched_by = "boundary"
    module = donor_module(donor, d, radius)
    stitch_in, stitch_out = plan_stitching(recipient, donor, r, module)
    return CrossoverPlan(recipient.genome_id, donor.genome_id, r, d, module, stitch_in, stitch_out, matched_by)


def crossover_pmi(recipient: Genome, donor: Genome, plan: CrossoverPlan, markers=DEFAULT_MARKERS) -> Genome:
    """Transplant the donor module into the recipient.

    Nodes kept from the recipient retain role and template unchanged;
    transplanted nodes bring the donor's role and template, or a lightweight
    role default when the donor template is not valid. If the stitched graph
    is invalid, the recipient comes back unchanged, tagged
    ``crossover:rejected``.
    """
    if not plan.donor_module:
        return recipient
    module = sorted(plan.donor_module)
    if any(v not in donor.node_map for v in module):
        return _tagged(recipient, "crossover:rejected")
    start = recipient.next_node_id()
    id_map = {v: start + k for k, v in enumerate(module)}
    r = plan.recipient_anchor

    nodes = [n for n in recipient.nodes if n.node_id != r]
    for v in module:
        src = donor.node_map[v]
        template = src.template
        if template.role != src.role or template_violations(template.body, markers):
            template = lightweight_template(src.role, template.domain_tag)
        nodes.append(NodeSpec(id_map[v], src.role, template))

    edges = {(u, v) for u, v in recipient.edges if r not in (u, v)}
    edges |= {(id_map[u], id_map[v]) for u, v in donor.edges if u in id_map and v in id_map}
    edges |= {(p, id_map[m]) for p, m in plan.stitch_in if m in id_map}
    edges |= {(id_map[m], s) for m, s in plan.stitch_out if m in id_map}

    child = Genome(
        tuple(nodes),
        tuple(edges),
        recipient.input_node,
        recipient.decision_node,
        derive_id(recipient.genome_id, donor.genome_id, "x", r, tuple(module)),
        (f"parent={recipient.genome_id}", f"parent={donor.genome_id}", f"op=crossover:{plan.matched_by}"),
    )
    if validate_genome(child, markers):
        return _tagged(recipient, "crossover:rejected")
    return child


# ---------------------------------------------------------------------------
# mutation


def _add_edge(g: Genome, rng, pool, max_free):
    sources = [v for v in g.node_ids if v != g.decision_node]
    targets = [v for v in g.node_ids if v != g.input_node]
    u = sources[int(rng.integers(len(sources)))]
    v = targets[int(rng.integers(len(targets)))]
    if u == v or (u, v) in set(g.edges) or g.reaches(v, u):
        return None
    return g.with_changes(edges=g.edges + ((u, v),))


def _remove_edge(g: Genome, rng, pool, max_free):
    if not g.edges:
        return None
    u, v = g.edges[int(rng.integers(len(g.edges)))]
    # both endpoints keep a path through another edge
    if len(g.out_neighbors(u)) < 2 or len(g.in_neighbors(v)) < 2:
        return None
    return g.with_changes(edges=[e for e in g.edges if e != (u, v)])


def _add_node(g: Genome, rng, pool: RolePool, max_free):
    if max_free is not None and len(g.free_nodes()) >= max_free:
        return None
    roles = pool.mutable_roles()
    role = roles[int(rng.integers(len(roles)))]
    new = g.next_node_id()
    node = NodeSpec(new, role, template_for(role, pool))
    if rng.random() < 0.5:
        u, v = g.edges[int(rng.integers(len(g.edges)))]
        edges = [e for e in g.edges if e != (u, v)] + [(u, new), (new, v)]
    else:
        targets = [x for x in g.node_ids if x != g.input_node]
        x = targets[int(rng.integers(len(targets)))]
        edges = list(g.edges) + [(g.input_node, new), (new, x)]
    return g.with_changes(nodes=g.nodes + (node,), edges=edges)


def _remove_node(g: Genome, rng, pool, max_free):
    free = g.free_nodes()
    if not free:
        return None
    n = free[int(rng.integers(len(free)))]
    preds, succs = g.in_neighbors(n), g.out_neighbors(n)
    edges = {e for e in g.edges if n not in e}
    edges |= {(p, s) for p in preds for s in succs}
    return g.with_changes(nodes=[x for x in g.nodes if x.node_id != n], edges=edges)


_TOPOLOGY_EDITS = {"AddEdge": _add_edge, "RemoveEdge": _remove_edge, "AddNode": _add_node, "RemoveNode": _remove_node}


def mutate_topology(
    g: Genome,
    weights: MutationWeights,
    rng: np.random.Generator,
    pool: RolePool | None = None,
    retries: int = 5,
    max_free: int | None = 10,
) -> Genome:
    """Apply one local topology edit sampled by operator weight.

    A rejected edit (duplicate edge, cycle, disconnection) is retried up to
    ``retries`` times with fresh random choices for the same operator;
    after that the genome comes back unchanged with an ``unchanged`` tag.
    """
    pool = pool or default_pool()
    w = weights.as_array()
    op = TOPOLOGY_OPS[int(rng.choice(len(TOPOLOGY_OPS), p=w / w.sum()))]
    edit = _TOPOLOGY_EDITS[op]
    for _ in range(retries + 1):
        out = edit(g, rng, pool, max_free)
        if out is not None and not validate_genome(out):
            return out.with_changes(
                genome_id=derive_id(g.genome_id, op, int(rng.integers(2**62))),
                lineage=(f"parent={g.genome_id}", f"op=topology:{op}"),
            )
    return _tagged(g, f"topology:{op}:unchanged")


def mutate_role(
    g: Genome,
    pool: RolePool | None,
    mutator: PromptMutator | None,
    rng: np.random.Generator,
    retries: int = 3,
) -> Genome:
    """Resample the role of one mutable node and regenerate its prompt.

    Output-critical and reserved nodes are never touched. When the pool has
    no alternative role, the role is kept and only the template is rebuilt.
    """
    pool = pool or default_pool()
    candidates = [v for v in g.free_nodes() if not g.role_of(v).output_critical]
    if not candidates:
        return _tagged(g, "role:unchanged")
    node = candidates[int(rng.integers(len(candidates)))]
    current = g.role_of(node)
    options = [r for r in pool.mutable_roles() if r.name != current.name]
    role = options[int(rng.integers(len(options)))] if options else current
    template, source = regenerate_template(role, pool, mutator, retries)
    nodes = [NodeSpec(node, role, template) if n.node_id == node else n for n in g.nodes]
    return g.with_changes(
        nodes=nodes,
        genome_id=derive_id(g.genome_id, "role", node, role.name, int(rng.integers(2**62))),
        lineage=(f"parent={g.genome_id}", f"op=role:{current.name}->{role.name}:{source}"),
    )


def mutate_radical(
    g: Genome,
    rng: np.random.Generator,
    pool: RolePool | None = None,
    kind: TopologyKind | None = None,
    target_free: int | None = None,
    max_free: int = 7,
) -> Genome:
    """Rebuild the graph from a chain, tree, star or layered template.

    Free nodes keep their roles and templates and are laid out in their
    current topological order. When the sampled size is smaller, nodes with
    the lowest boundary degree are dropped first; when larger, new nodes are
    drawn from the pool.
    """
    pool = pool or default_pool()
    if kind is None:
        kind = RADICAL_KINDS[int(rng.integers(len(RADICAL_KINDS)))]
    order = [v for v in g.topological_order() if v not in (g.input_node, g.decision_node)]
    m = len(order)
    if target_free is None:
        lo, hi = max(1, m - 1), min(max_free, m + 1)
        target_free = int(rng.integers(lo, max(lo, hi) + 1))
    target_free = max(1, target_free)

    keep = list(order)
    if target_free < m:
        drop = set(sorted(order, key=lambda v: (g.boundary_degree(v), v))[: m - target_free])
        keep = [v for v in order if v not in drop]
    nodes = [g.node_map[g.input_node], g.node_map[g.decision_node]] + [g.node_map[v] for v in keep]
    next_id = g.next_node_id()
    roles = pool.mutable_roles()
    while len(keep) < target_free:
        role = roles[int(rng.integers(len(roles)))]
        nodes.append(NodeSpec(next_id, role, template_for(role, pool)))
        keep.append(next_id)
        next_id += 1
    edges = template_edges(kind, keep, g.input_node, g.decision_node, float(rng.random()), rng)
    return g.with_changes(
        nodes=nodes,
        edges=edges,
        genome_id=derive_id(g.genome_id, "radical", kind.value, int(rng.integers(2**62))),
        lineage=(f"parent={g.genome_id}", f"op=radical:{kind.value}"),
    )
