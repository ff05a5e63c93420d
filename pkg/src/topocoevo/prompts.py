"""Role registry, role pools and the deterministic prompt mutator."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

from .exceptions import UnknownRole
from .genome import (
    DECISION_ROLE,
    DEFAULT_MARKERS,
    INPUT_ROLE,
    DomainTag,
    PromptTemplate,
    RoleId,
    Tier,
    template_violations,
)

ANY_DOMAIN = "Any"
TIERS = (Tier.TASK_SPECIFIC, Tier.DOMAIN_HEURISTIC, Tier.GENERAL)

PromptMutator = Callable[[RoleId, DomainTag], PromptTemplate]


@dataclass(frozen=True)
class RoleEntry:
    role: RoleId
    domain_tag: str
    description: str = ""
    template_body: str | None = None

    def to_dict(self) -> dict:
        return {
            "role": self.role.name,
            "tier": self.role.tier.value,
            "output_critical": self.role.output_critical,
            "domain_tag": self.domain_tag,
            "description": self.description,
            "template_body": self.template_body,
        }


@dataclass
class RoleRegistry:
    """All known roles, keyed by ``(name, domain_tag)``.

    Entries tagged ``"Any"`` are shared by every domain.
    """

    entries: list[RoleEntry] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> "RoleRegistry":
        entries = []
        for raw in data["roles"]:
            role = RoleId(raw["role"], Tier(raw["tier"]), bool(raw.get("output_critical", False)))
            entries.append(RoleEntry(role, raw["domain_tag"], raw.get("description", ""), raw.get("template_body")))
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "RoleRegistry":
        if path is None:
            text = resources.files("topocoevo").joinpath("data/roles.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"version": 1, "roles": [e.to_dict() for e in self.entries]}

    def lookup(self, name: str, domain: DomainTag | str) -> RoleEntry:
        matches = [e for e in self.entries if e.role.name == name]
        if not matches:
            raise UnknownRole(name)
        for preferred in (DomainTag(domain).value, ANY_DOMAIN):
            for e in matches:
                if e.domain_tag == preferred:
                    return e
        return matches[0]

    def pool(self, domain: DomainTag | str) -> "RolePool":
        domain = DomainTag(domain)
        entries = [e for e in self.entries if e.domain_tag in (domain.value, ANY_DOMAIN) and not e.role.reserved]
        seen = set()
        unique = []
        for e in entries:
            if e.role.name in seen:
                continue
            seen.add(e.role.name)
            unique.append(e)
        return RolePool(domain, tuple(unique), self)


@dataclass(frozen=True)
class RolePool:
    domain: DomainTag
    entries: tuple[RoleEntry, ...]
    registry: RoleRegistry = field(repr=False, compare=False)

    def roles(self, tier: Tier | None = None, include_output_critical: bool = True) -> list[RoleId]:
        return [
            e.role
            for e in self.entries
            if (tier is None or e.role.tier == tier) and (include_output_critical or not e.role.output_critical)
        ]

    def mutable_roles(self) -> list[RoleId]:
        return self.roles(include_output_critical=False)

    def __len__(self) -> int:
        return len(self.entries)

    def registry_template(self, role: RoleId) -> PromptTemplate | None:
        try:
            entry = self.registry.lookup(role.name, self.domain)
        except UnknownRole:
            return None
        if entry.template_body is None:
            return None
        return PromptTemplate(entry.template_body, role, self.domain)

    def restricted(self, names: Iterable[str]) -> "RolePool":
        keep = set(names)
        return RolePool(self.domain, tuple(e for e in self.entries if e.role.name in keep), self.registry)


_DEFAULT_REGISTRY: RoleRegistry | None = None


def default_registry() -> RoleRegistry:
    global _DEFAULT_REGISTRY
    if _DEFAULT_REGISTRY is None:
        _DEFAULT_REGISTRY = RoleRegistry.load()
    return _DEFAULT_REGISTRY


def default_pool(domain: DomainTag | str = DomainTag.SYNTHETIC) -> RolePool:
    return default_registry().pool(domain)


def display_name(name: str) -> str:
    """``"MathSolver"`` -> ``"Math Solver"``."""
    return re.sub(r"(?<=[a-z])(?=[A-Z])", " ", name)


# role families drive the behaviour clause
_FAMILIES = (
    ("aggregate", re.compile(r"Decision|Aggregator|Summarizer")),
    ("constraint", re.compile(r"Constraint|Enforcer|Anchor|Differentiator")),
    ("checker", re.compile(r"Check|Verif|Inspector|Auditor|Detector|Critic|Tester|Debugger")),
    ("solver", re.compile(r"Solver|Analyst|Calculator|Mathematician|Statistician|Expert|Reasoner")),
    ("planner", re.compile(r"Planner|Decomposer|Input")),
)

_BEHAVIOUR = {
    "checker": (
        "Verify every claim you receive independently and check it against the task statement "
        "before accepting it. Mark each claim Correct or Incorrect with a one-line reason."
    ),
    "solver": (
        "Solve the task step by step: restate what is asked, write each intermediate result on its "
        "own line, and re-read the final question sentence before committing to a value."
    ),
    "constraint": (
        "List every constraint stated in the task and explicitly enforce each one; check that the "
        "candidate answer violates none of them."
    ),
    "aggregate": (
        "Weigh the analyses you receive, check whether they agree, eliminate the ones that contradict "
        "the task, and commit to one final answer."
    ),
    "planner": "Break the task into ordered steps and state the purpose of each step before any answer is given.",
    "general": "Work through the task step by step and state the reasoning behind your conclusion.",
}

_OUTPUT = {
    DomainTag.MATH_WORD: "End your reply with the line: The answer is <integer>",
    DomainTag.MULTIPLE_CHOICE: "End your reply with the line: The answer is (<letter>)",
    DomainTag.SYNTHETIC: "End your reply with the line: Final answer: <answer>",
}

N_STYLES = 3


def role_family(name: str) -> str:
    for family, pattern in _FAMILIES:
        if pattern.search(name):
            return family
    return "general"


def default_prompt_mutator(
    role: RoleId,
    domain_tag: DomainTag | str = DomainTag.SYNTHETIC,
    variant: int = 0,
    registry: RoleRegistry | None = None,
) -> PromptTemplate:
    """Assemble a template from role definition, behaviour and output clauses.

    The first line always states the role definition. ``variant`` selects
    one of ``N_STYLES`` layouts (plain, sectioned, terse bullets). Output is
    a pure function of the arguments.
    """
    registry = registry or default_registry()
    domain = DomainTag(domain_tag)
    entry = registry.lookup(role.name, domain)
    title = display_name(role.name)
    definition = f"You are the {title}, the agent that {entry.description}." if entry.description else f"You are the {title}."
    behaviour = _BEHAVIOUR[role_family(role.name)]
    output = _OUTPUT[domain]
    style = variant % N_STYLES
    if style == 0:
        body = f"{definition}\n{behaviour}\n{output}"
    elif style == 1:
        body = f"{definition}\n## TASK\n{behaviour}\n## OUTPUT\n{output}"
    else:
        clauses = [c.strip() for c in behaviour.split(";")]
        bullets = "\n".join(f"- {c.rstrip('.')}." for c in clauses)
        body = f"{definition}\n{bullets}\n- {output}"
    return PromptTemplate(body, role, domain)


def lightweight_template(role: RoleId, domain_tag: DomainTag | str = DomainTag.SYNTHETIC) -> PromptTemplate:
    """Minimal role-conditioned fallback prompt."""
    domain = DomainTag(domain_tag)
    body = f"You are the {display_name(role.name)}.\nWork through the task step by step and state your conclusion.\n{_OUTPUT[domain]}"
    return PromptTemplate(body, role, domain)


def template_for(role: RoleId, pool: RolePool, variant: int = 0) -> PromptTemplate:
    """Registry seed template when one exists, generated template otherwise."""
    seeded = pool.registry_template(role)
    if seeded is not None and not template_violations(seeded.body):
        return seeded
    return default_prompt_mutator(role, pool.domain, variant, pool.registry)


def reserved_templates(pool: RolePool, variant: int = 0) -> tuple[PromptTemplate, PromptTemplate]:
    return template_for(INPUT_ROLE, pool, variant), template_for(DECISION_ROLE, pool, variant)


def regenerate_template(
    role: RoleId,
    pool: RolePool,
    mutator: PromptMutator | None = None,
    retries: int = 3,
    markers=DEFAULT_MARKERS,
) -> tuple[PromptTemplate, str]:
    """Mutator with bounded retry, then registry template, then fallback.

    Returns the template and the source it came from (``"mutator"``,
    ``"registry"`` or ``"fallback"``). A mutator may be an external (e.g.
    LLM-backed) hook; its output must pass the same template validators.
    """
    mutator = mutator or (lambda r, d: default_prompt_mutator(r, d, 0, pool.registry))
    for _ in range(max(1, retries)):
        try:
            t = mutator(role, pool.domain)
        except Exception:
            continue
        if isinstance(t, PromptTemplate) and not template_violations(t.body, markers):
            return PromptTemplate(t.body, role, pool.domain), "mutator"
    seeded = pool.registry_template(role)
    if seeded is not None and not template_violations(seeded.body, markers):
        return seeded, "registry"
    return lightweight_template(role, pool.domain), "fallback"
