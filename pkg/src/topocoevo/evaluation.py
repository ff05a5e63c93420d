"""Fitness vectors, the preference score, evaluators and the synthetic landscape."""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Mapping, Protocol, Sequence

from .exceptions import DomainError, EvaluatorFailure, EvaluatorOutage
from .genome import Genome, complexity

Z_95 = 1.96


class EvalSource(str, Enum):
    SYNTHETIC = "Synthetic"
    EXTERNAL = "External"
    FALLBACK = "SyntheticFallback"


@dataclass(frozen=True)
class FitnessVector:
    accuracy: float
    token_cost: float
    complexity: int

    def maximization(self) -> tuple[float, float, float]:
        return fitness_vector(self.accuracy, self.token_cost, self.complexity)


def fitness_vector(accuracy: float, token_cost: float, K: int) -> tuple[float, float, float]:
    """Maximization triple ``(A, -C, -ln(1 + K))``."""
    if not 0.0 <= accuracy <= 1.0 or math.isnan(accuracy):
        raise DomainError(f"accuracy must lie in [0, 1], got {accuracy}")
    if token_cost < 0 or math.isnan(token_cost):
        raise DomainError(f"token cost must be non-negative, got {token_cost}")
    if K < 0:
        raise DomainError(f"complexity must be non-negative, got {K}")
    return (float(accuracy), -float(token_cost), -math.log1p(K))


@dataclass(frozen=True)
class EvaluationRecord:
    """Evaluated genome.

    ``feasible`` is the label under the last accuracy floor applied through
    :meth:`with_floor`; selection code calls :meth:`is_feasible` with the
    current floor instead of trusting the stored flag.
    """

    genome_id: str
    fitness: FitnessVector
    generation: int = 0
    feasible: bool = True
    eval_source: EvalSource = EvalSource.SYNTHETIC
    failed: bool = False
    error: str | None = None

    @property
    def accuracy(self) -> float:
        return self.fitness.accuracy

    @property
    def token_cost(self) -> float:
        return self.fitness.token_cost

    @property
    def complexity(self) -> int:
        return self.fitness.complexity

    def objectives(self) -> tuple[float, float, float]:
        return self.fitness.maximization()

    def is_feasible(self, tau: float) -> bool:
        return not self.failed and self.fitness.accuracy >= tau

    def with_floor(self, tau: float) -> "EvaluationRecord":
        return EvaluationRecord(self.genome_id, self.fitness, self.generation, self.is_feasible(tau),
                                self.eval_source, self.failed, self.error)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eval_source"] = self.eval_source.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvaluationRecord":
        f = d["fitness"]
        return cls(
            genome_id=str(d["genome_id"]),
            fitness=FitnessVector(float(f["accuracy"]), float(f["token_cost"]), int(f["complexity"])),
            generation=int(d.get("generation", 0)),
            feasible=bool(d.get("feasible", True)),
            eval_source=EvalSource(d.get("eval_source", EvalSource.SYNTHETIC.value)),
            failed=bool(d.get("failed", False)),
            error=d.get("error"),
        )


@dataclass(frozen=True)
class PreferenceParams:
    k: float = 2.0
    gamma: float = 1.0
    beta_pref: float = 1.0
    T0: float = 1000.0
    K0: float = 10.0

    def __post_init__(self):
        for name in ("k", "gamma", "beta_pref", "T0", "K0"):
            value = getattr(self, name)
            if not value > 0:
                raise DomainError(f"{name} must be strictly positive, got {value}")


MIN_TOKEN_COST = 1.0


def preference_score(accuracy: float, token_cost: float, K: float, p: PreferenceParams = PreferenceParams()) -> float:
    """Scalar probe score ``A^k / ((C/T0)^gamma * (1 + K/K0)^beta)``.

    Token cost is floored at one token so that genomes reporting zero cost
    do not blow up the ratio.
    """
    if not 0.0 < accuracy <= 1.0:
        raise DomainError(f"preference score needs accuracy in (0, 1], got {accuracy}")
    if token_cost < 0 or K < 0:
        raise DomainError("token cost and complexity must be non-negative")
    cost = max(float(token_cost), MIN_TOKEN_COST)
    k_bar = 1.0 + K / p.K0
    return accuracy**p.k / ((cost / p.T0) ** p.gamma * k_bar**p.beta_pref)


def binomial_ci(p_hat: float, n: int) -> tuple[float, float]:
    """Normal-approximation 95% interval ``p ± 1.96 sqrt(p(1-p)/n)`` clipped to [0, 1]."""
    if not 0.0 <= p_hat <= 1.0 or math.isnan(p_hat):
        raise DomainError(f"p_hat must lie in [0, 1], got {p_hat}")
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    half = Z_95 * math.sqrt(p_hat * (1.0 - p_hat) / n)
    return max(0.0, p_hat - half), min(1.0, p_hat + half)


# ---------------------------------------------------------------------------
# synthetic landscape


@dataclass(frozen=True)
class Motif:
    src_role: str
    dst_role: str
    weight: float


@dataclass(frozen=True)
class SyntheticLandscape:
    """Deterministic stand-in for dev-set accuracy and token cost.

    ``target_roles`` maps a role name to ``(count, weight)``: each of up to
    ``count`` free nodes carrying that role earns ``weight``. A motif earns its
    weight once when any edge joins its two roles. Free nodes beyond
    ``capacity`` cost ``overcapacity_penalty`` each.
    """

    seed: int = 7
    base: float = 0.30
    target_roles: Mapping[str, tuple[int, float]] = field(default_factory=lambda: {
        "MathSolver": (2, 0.07),
        "OptionVerifier": (1, 0.10),
        "QuestionDecomposer": (1, 0.08),
        "KnowledgeChecker": (1, 0.06),
        "FactChecker": (1, 0.05),
    })
    motifs: tuple[Motif, ...] = (
        Motif("QuestionDecomposer", "MathSolver", 0.06),
        Motif("MathSolver", "OptionVerifier", 0.05),
        Motif("OptionVerifier", "Decision", 0.04),
        Motif("KnowledgeChecker", "Decision", 0.03),
        Motif("Input", "QuestionDecomposer", 0.03),
    )
    noise_amplitude: float = 0.02
    node_cost: float = 100.0
    role_costs: Mapping[str, float] = field(default_factory=lambda: {"MathSolver": 160.0, "OptionVerifier": 130.0})
    edge_cost: float = 20.0
    capacity: int = 6
    overcapacity_penalty: float = 0.04

    def full_utility(self) -> float:
        return sum(c * w for c, w in self.target_roles.values()) + sum(m.weight for m in self.motifs)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "base": self.base,
            "target_roles": {k: list(v) for k, v in self.target_roles.items()},
            "motifs": [[m.src_role, m.dst_role, m.weight] for m in self.motifs],
            "noise_amplitude": self.noise_amplitude,
            "node_cost": self.node_cost,
            "role_costs": dict(self.role_costs),
            "edge_cost": self.edge_cost,
            "capacity": self.capacity,
            "overcapacity_penalty": self.overcapacity_penalty,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticLandscape":
        kw = dict(d)
        if "target_roles" in kw:
            kw["target_roles"] = {k: (int(v[0]), float(v[1])) for k, v in kw["target_roles"].items()}
        if "motifs" in kw:
            kw["motifs"] = tuple(Motif(str(a), str(b), float(w)) for a, b, w in kw["motifs"])
        return cls(**kw)


def pseudo_noise(genome_id: str, seed: int) -> float:
    """Uniform value in ``[-1, 1)`` from a hash of ``(seed, genome_id)``."""
    digest = hashlib.blake2b(f"{seed}:{genome_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**63 - 1.0


def synthetic_token_cost(g: Genome, L: SyntheticLandscape) -> float:
    nodes = sum(L.role_costs.get(n.role.name, L.node_cost) for n in g.nodes)
    return float(nodes + L.edge_cost * len(set(g.edges)))


def synthetic_accuracy(g: Genome, L: SyntheticLandscape) -> tuple[float, float]:
    free = g.free_nodes()
    counts = Counter(g.role_of(i).name for i in free)
    utility = sum(w * min(counts.get(name, 0), c) for name, (c, w) in L.target_roles.items())
    present = {(g.role_of(u).name, g.role_of(v).name) for u, v in g.edges}
    utility += sum(m.weight for m in L.motifs if (m.src_role, m.dst_role) in present)
    penalty = L.overcapacity_penalty * max(0, len(free) - L.capacity)
    raw = L.base + utility - penalty + L.noise_amplitude * pseudo_noise(g.genome_id, L.seed)
    return min(1.0, max(0.0, raw)), synthetic_token_cost(g, L)


# ---------------------------------------------------------------------------
# evaluators


class Evaluator(Protocol):
    source: EvalSource

    def __call__(self, genome: Genome, seed: int) -> tuple[float, float]: ...


@dataclass(frozen=True)
class SyntheticEvaluator:
    landscape: SyntheticLandscape = field(default_factory=SyntheticLandscape)
    source: EvalSource = EvalSource.SYNTHETIC

    def __call__(self, genome: Genome, seed: int) -> tuple[float, float]:
        return synthetic_accuracy(genome, self.landscape)


def _evaluate_one(genome: Genome, evaluator: Callable, seed: int, generation: int) -> EvaluationRecord:
    source = getattr(evaluator, "source", EvalSource.EXTERNAL)
    K = complexity(genome)
    try:
        result = evaluator(genome, seed)
        accuracy, cost = result[0], result[1]
        if len(result) > 2:
            # evaluators may report their own provenance per call
            source = EvalSource(result[2])
        fitness = FitnessVector(float(accuracy), float(cost), K)
        fitness.maximization()  # range check
    except EvaluatorOutage:
        raise
    except (EvaluatorFailure, DomainError, ValueError, TypeError, KeyError) as exc:
        return EvaluationRecord(genome.genome_id, FitnessVector(0.0, 0.0, K), generation, False, source,
                                failed=True, error=f"{type(exc).__name__}: {exc}")
    return EvaluationRecord(genome.genome_id, fitness, generation, True, source)


def evaluate_population(
    population: Sequence[Genome],
    evaluator: Callable[[Genome, int], tuple[float, float]],
    seed: int = 0,
    generation: int = 0,
    n_jobs: int = 1,
) -> list[EvaluationRecord]:
    """Evaluate every genome; results come back in population order.

    Evaluator failures yield an infeasible record with accuracy 0; an
    ``EvaluatorOutage`` propagates. ``n_jobs > 1`` fans out over threads,
    which requires the evaluator to be safe for concurrent calls.
    """
    if not population:
        return []
    if n_jobs <= 1:
        return [_evaluate_one(g, evaluator, seed, generation) for g in population]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(lambda g: _evaluate_one(g, evaluator, seed, generation), population))
