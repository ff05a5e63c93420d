"""Prompt-topology genomes.

A genome is a directed acyclic communication graph whose nodes carry a
role and a stored prompt template. Templates never mention topology; the
incoming neighbourhood of a node is injected only when a runtime prompt is
built for execution.
"""

from __future__ import annotations

import heapq
import json
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Mapping, Sequence

from .exceptions import ExecutorFailure, MissingUpstreamMessage

MAX_TEMPLATE_CHARS = 3000
DEFAULT_MARKERS = ("step", "verify", "eliminate", "check", "solve")
RESERVED_ROLE_NAMES = frozenset({"Input", "Decision"})
CONTEXT_SEPARATOR = "\n\n"

_TOPOLOGY_PATTERNS = (
    re.compile(r"\bnode\s*(?:id\s*)?[#:]?\s*\d+", re.IGNORECASE),
    re.compile(r"\bedges?\b", re.IGNORECASE),
    re.compile(r"\b(?:upstream|downstream|incoming|outgoing)\s+(?:node|neighbou?r)s?\b", re.IGNORECASE),
    re.compile(r"->|→"),
)
_GREETING_PATTERNS = (
    re.compile(r"^\s*(?:hi|hello|hey|greetings)\b", re.IGNORECASE),
    re.compile(r"\bas an ai\b", re.IGNORECASE),
    re.compile(r"\b(?:i am|i'm) (?:happy|glad) to help\b", re.IGNORECASE),
    re.compile(r"\bhow can i (?:help|assist)\b", re.IGNORECASE),
)


class Tier(str, Enum):
    TASK_SPECIFIC = "TaskSpecific"
    DOMAIN_HEURISTIC = "DomainHeuristic"
    GENERAL = "General"


class DomainTag(str, Enum):
    MULTIPLE_CHOICE = "MultipleChoice"
    MATH_WORD = "MathWord"
    SYNTHETIC = "Synthetic"


@dataclass(frozen=True, order=True)
class RoleId:
    name: str
    tier: Tier = Tier.GENERAL
    output_critical: bool = False

    @property
    def reserved(self) -> bool:
        return self.name in RESERVED_ROLE_NAMES


INPUT_ROLE = RoleId("Input", Tier.GENERAL, False)
DECISION_ROLE = RoleId("Decision", Tier.GENERAL, True)


@dataclass(frozen=True)
class PromptTemplate:
    body: str
    role: RoleId
    domain_tag: DomainTag = DomainTag.SYNTHETIC


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    role: RoleId
    template: PromptTemplate


@dataclass(frozen=True)
class RuntimePrompt:
    node_id: int
    rendered_text: str
    upstream_sources: tuple[tuple[int, str], ...]


def template_violations(body: str, markers: Sequence[str] = DEFAULT_MARKERS) -> list[str]:
    """Violation codes for a stored template body (empty list when valid)."""
    return list(_template_violations(body, tuple(markers)))


@lru_cache(maxsize=4096)
def _template_violations(body: str, markers: tuple[str, ...]) -> tuple[str, ...]:
    codes = []
    if len(body) > MAX_TEMPLATE_CHARS:
        codes.append("TemplateTooLong")
    if any(p.search(body) for p in _TOPOLOGY_PATTERNS):
        codes.append("TemplateHasTopologyRef")
    lowered = body.lower()
    if not any(m.lower() in lowered for m in markers):
        codes.append("TemplateMissingReasoningMarker")
    if any(p.search(body) for p in _GREETING_PATTERNS):
        codes.append("TemplateHasGreeting")
    return tuple(codes)


@dataclass(frozen=True)
class Genome:
    """Immutable genome ``(graph, role-prompt assignments)``.

    ``nodes`` is kept sorted by id and ``edges`` sorted lexicographically, so
    two genomes with the same content compare and serialize identically.
    Edges are a tuple rather than a set so that duplicates read from disk
    can be reported by :func:`validate_genome`.
    """

    nodes: tuple[NodeSpec, ...]
    edges: tuple[tuple[int, int], ...]
    input_node: int
    decision_node: int
    genome_id: str = "g0"
    lineage: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.node_id)))
        object.__setattr__(self, "edges", tuple(sorted((int(u), int(v)) for u, v in self.edges)))
        object.__setattr__(self, "lineage", tuple(self.lineage))

    @cached_property
    def node_map(self) -> dict[int, NodeSpec]:
        return {n.node_id: n for n in self.nodes}

    @property
    def node_ids(self) -> list[int]:
        return [n.node_id for n in self.nodes]

    @cached_property
    def _preds(self) -> dict[int, list[int]]:
        preds: dict[int, list[int]] = {n.node_id: [] for n in self.nodes}
        for u, v in self.edges:
            if v in preds:
                preds[v].append(u)
        return {k: sorted(set(v)) for k, v in preds.items()}

    @cached_property
    def _succs(self) -> dict[int, list[int]]:
        succs: dict[int, list[int]] = {n.node_id: [] for n in self.nodes}
        for u, v in self.edges:
            if u in succs:
                succs[u].append(v)
        return {k: sorted(set(v)) for k, v in succs.items()}

    def in_neighbors(self, node_id: int) -> list[int]:
        return self._preds[node_id]

    def out_neighbors(self, node_id: int) -> list[int]:
        return self._succs[node_id]

    def boundary_degree(self, node_id: int) -> int:
        return len(self._preds[node_id]) + len(self._succs[node_id])

    def free_nodes(self) -> list[int]:
        """Ids of nodes that are neither the input nor the decision node."""
        return [i for i in self.node_ids if i not in (self.input_node, self.decision_node)]

    def role_of(self, node_id: int) -> RoleId:
        return self.node_map[node_id].role

    def next_node_id(self) -> int:
        return max(self.node_ids, default=-1) + 1

    def reaches(self, src: int, dst: int) -> bool:
        if src == dst:
            return True
        seen = {src}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in self._succs.get(u, ()):
                if v == dst:
                    return True
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return False

    def topological_order(self) -> list[int]:
        """Kahn's algorithm, ascending node id among ready nodes.

        Raises ValueError when the graph has a cycle.
        """
        indeg = {i: len(p) for i, p in self._preds.items()}
        ready = [i for i, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            u = heapq.heappop(ready)
            order.append(u)
            for v in self._succs[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    heapq.heappush(ready, v)
        if len(order) != len(indeg):
            raise ValueError("graph contains a directed cycle")
        return order

    def with_changes(self, *, nodes=None, edges=None, genome_id=None, lineage=None) -> "Genome":
        return Genome(
            nodes=self.nodes if nodes is None else tuple(nodes),
            edges=self.edges if edges is None else tuple(edges),
            input_node=self.input_node,
            decision_node=self.decision_node,
            genome_id=self.genome_id if genome_id is None else genome_id,
            lineage=self.lineage if lineage is None else tuple(lineage),
        )

    def same_structure(self, other: "Genome") -> bool:
        """True when graph and assignments match, ignoring id and lineage."""
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.input_node == other.input_node
            and self.decision_node == other.decision_node
        )

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "genome_id": self.genome_id,
            "nodes": [
                {
                    "id": n.node_id,
                    "role": n.role.name,
                    "tier": n.role.tier.value,
                    "output_critical": n.role.output_critical,
                    "domain_tag": n.template.domain_tag.value,
                    "template": n.template.body,
                }
                for n in self.nodes
            ],
            "edges": [[u, v] for u, v in self.edges],
            "input": self.input_node,
            "decision": self.decision_node,
            "lineage": list(self.lineage),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Genome":
        nodes = []
        for raw in data["nodes"]:
            role = RoleId(str(raw["role"]), Tier(raw.get("tier", Tier.GENERAL.value)),
                          bool(raw.get("output_critical", raw["role"] == "Decision")))
            tag = DomainTag(raw.get("domain_tag", DomainTag.SYNTHETIC.value))
            nodes.append(NodeSpec(int(raw["id"]), role, PromptTemplate(str(raw["template"]), role, tag)))
        return cls(
            nodes=tuple(nodes),
            edges=tuple((int(u), int(v)) for u, v in data["edges"]),
            input_node=int(data["input"]),
            decision_node=int(data["decision"]),
            genome_id=str(data.get("genome_id", "g0")),
            lineage=tuple(data.get("lineage", ())),
        )

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "Genome":
        return cls.from_dict(json.loads(text))


def make_genome(
    assignments: Mapping[int, tuple[RoleId, PromptTemplate]] | Iterable[NodeSpec],
    edges: Iterable[tuple[int, int]],
    input_node: int,
    decision_node: int,
    genome_id: str = "g0",
    lineage: Iterable[str] = (),
) -> Genome:
    if isinstance(assignments, Mapping):
        nodes = [NodeSpec(i, r, t) for i, (r, t) in assignments.items()]
    else:
        nodes = list(assignments)
    return Genome(tuple(nodes), tuple(edges), input_node, decision_node, genome_id, tuple(lineage))


# ---------------------------------------------------------------------------
# validation


def validate_genome(g: Genome, markers: Sequence[str] = DEFAULT_MARKERS, check_templates: bool = True) -> list[str]:
    """Return every violated invariant as a sorted list of codes.

    An empty list means the genome is valid. Besides the DAG, reservation
    and reachability rules, every node must lie on some input-to-decision
    path (``NodeUnreachable`` / ``NodeCannotReachDecision``), which is how
    the single-sink interpretation is enforced.
    """
    codes: set[str] = set()
    counts = Counter(n.node_id for n in g.nodes)
    if any(c > 1 for c in counts.values()):
        codes.add("DuplicateNodeId")
    ids = set(counts)

    if g.input_node not in ids:
        codes.add("MissingInputNode")
    if g.decision_node not in ids:
        codes.add("MissingDecisionNode")

    edge_counts = Counter(g.edges)
    if any(c > 1 for c in edge_counts.values()):
        codes.add("DuplicateEdge")
    for u, v in edge_counts:
        if u == v:
            codes.add("SelfLoop")
        if u not in ids or v not in ids:
            codes.add("DanglingEdge")
    edges = [(u, v) for u, v in edge_counts if u in ids and v in ids and u != v]

    succ: dict[int, set[int]] = {i: set() for i in ids}
    pred: dict[int, set[int]] = {i: set() for i in ids}
    for u, v in edges:
        succ[u].add(v)
        pred[v].add(u)

    if g.input_node in ids and pred[g.input_node]:
        codes.add("InputHasInEdge")
    if g.decision_node in ids and succ[g.decision_node]:
        codes.add("DecisionHasOutEdge")

    # cycle check with Kahn
    indeg = {i: len(pred[i]) for i in ids}
    ready = [i for i in ids if indeg[i] == 0]
    seen = 0
    while ready:
        u = ready.pop()
        seen += 1
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if seen != len(ids):
        codes.add("CycleOrDagViolation")

    if g.input_node in ids and g.decision_node in ids:
        forward = _closure(g.input_node, succ)
        backward = _closure(g.decision_node, pred)
        if g.decision_node not in forward:
            codes.add("DecisionUnreachable")
        if any(i not in forward for i in ids):
            codes.add("NodeUnreachable")
        if any(i not in backward for i in ids):
            codes.add("NodeCannotReachDecision")

    for n in g.nodes:
        if not n.role.name:
            codes.add("EmptyRoleName")
        if n.node_id == g.input_node and n.role.name != "Input":
            codes.add("InputRoleMismatch")
        if n.node_id != g.input_node and n.role.name == "Input":
            codes.add("ReservedRoleMisplaced")
        if n.node_id != g.decision_node and n.role.name == "Decision":
            codes.add("ReservedRoleMisplaced")
        if n.node_id == g.decision_node and not n.role.output_critical:
            codes.add("DecisionNotOutputCritical")
        if check_templates:
            codes.update(template_violations(n.template.body, markers))
    return sorted(codes)


def _closure(start: int, adj: Mapping[int, set[int]]) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def is_valid(g: Genome) -> bool:
    return not validate_genome(g)


def complexity(g: Genome) -> int:
    """Structural complexity ``|V| + |E|``."""
    return len(g.nodes) + len(set(g.edges))


# ---------------------------------------------------------------------------
# runtime prompts and execution


def format_context_block(role_name: str, node_id: int, message: str) -> str:
    return f"### From {role_name} (node {node_id}):\n{message}\n"


def build_runtime_prompt(g: Genome, node: int, upstream_messages: Mapping[int, str]) -> RuntimePrompt:
    """Render the stored template of ``node`` with its incoming context.

    One block per in-neighbour is appended in ascending node-id order. A node
    without in-neighbours gets its template body verbatim.
    """
    preds = g.in_neighbors(node)
    missing = [p for p in preds if p not in upstream_messages]
    if missing:
        raise MissingUpstreamMessage(node, missing)
    body = g.node_map[node].template.body
    if not preds:
        return RuntimePrompt(node, body, ())
    sources = tuple((p, g.role_of(p).name) for p in preds)
    blocks = "".join(format_context_block(name, p, upstream_messages[p]) for p, name in sources)
    return RuntimePrompt(node, body + CONTEXT_SEPARATOR + blocks, sources)


NodeExecutor = Callable[[RuntimePrompt, str], "tuple[str, int]"]


def execute(g: Genome, task_input: str, node_executor: NodeExecutor) -> tuple[str, int]:
    """Run every node once in topological order.

    Returns the decision node's output and the total token count. Any
    exception raised by ``node_executor`` is wrapped in ``ExecutorFailure``
    carrying the failing node id.
    """
    outputs: dict[int, str] = {}
    tokens = 0
    for node in g.topological_order():
        messages = {p: outputs[p] for p in g.in_neighbors(node)}
        prompt = build_runtime_prompt(g, node, messages)
        try:
            text, used = node_executor(prompt, task_input)
        except Exception as exc:
            raise ExecutorFailure(node, exc) from exc
        outputs[node] = text
        tokens += int(used)
    return outputs[g.decision_node], tokens


# ---------------------------------------------------------------------------
# distance


@dataclass(frozen=True)
class DistanceWeights:
    edges: float = 0.5
    roles: float = 0.3
    size: float = 0.2
    size_cap: int = 10


def _multiset_jaccard_distance(a: Counter, b: Counter) -> float:
    union = sum((a | b).values())
    if union == 0:
        return 0.0
    return 1.0 - sum((a & b).values()) / union


def edge_signature(g: Genome) -> Counter:
    """Edges labelled by endpoint role names, so ids do not matter."""
    return Counter((g.role_of(u).name, g.role_of(v).name) for u, v in set(g.edges))


def role_signature(g: Genome) -> Counter:
    return Counter(g.role_of(i).name for i in g.free_nodes())


def genome_distance(a: Genome, b: Genome, weights: DistanceWeights = DistanceWeights()) -> float:
    """Weighted composite of edge, role and size dissimilarity in ``[0, 1]``.

    Edge sets are compared as multisets of ``(source role, target role)``
    pairs and roles as multisets over free nodes, each with Jaccard
    distance; the size term is ``min(|n_a - n_b|, cap) / cap``.
    """
    d_edges = _multiset_jaccard_distance(edge_signature(a), edge_signature(b))
    d_roles = _multiset_jaccard_distance(role_signature(a), role_signature(b))
    d_size = min(abs(len(a.nodes) - len(b.nodes)), weights.size_cap) / weights.size_cap
    total = weights.edges + weights.roles + weights.size
    return (weights.edges * d_edges + weights.roles * d_roles + weights.size * d_size) / total
