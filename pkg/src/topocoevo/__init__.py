"""Multi-objective co-evolution of agent communication topologies and role prompts."""

__version__ = "0.1.0"

from .config import RunConfig  # noqa: E402
from .control import (  # noqa: E402
    ControlState,
    ParetoDiagnostics,
    adjust_rates,
    diagnose_and_inject,
    response_index,
    stagnation_probability,
    weight_schedule,
)
from .estimator import CoEvolutionSearch  # noqa: E402
from .evaluation import (  # noqa: E402
    EvaluationRecord,
    FitnessVector,
    PreferenceParams,
    SyntheticEvaluator,
    SyntheticLandscape,
    binomial_ci,
    evaluate_population,
    fitness_vector,
    preference_score,
)
from .external import ExternalEvaluator  # noqa: E402
from .genome import (  # noqa: E402
    Genome,
    NodeSpec,
    PromptTemplate,
    RoleId,
    complexity,
    execute,
    genome_distance,
    validate_genome,
)
from .indicators import coverage, max_gap, normalized_hv, spacing  # noqa: E402
from .initialization import fdc, initial_population, lhs_sample  # noqa: E402
from .pipeline import emit_report, run_evolution, select_operating_point  # noqa: E402
from .prompts import RoleRegistry, default_pool, default_prompt_mutator  # noqa: E402
from .selection import (  # noqa: E402
    EliteArchive,
    archive_update,
    constrained_dominates,
    crowding_distance,
    environmental_select,
    nondominated_sort,
)
from .variation import crossover_pmi, mutate_radical, mutate_role, mutate_topology, select_anchors  # noqa: E402

__all__ = [
    "__version__",
    "adjust_rates",
    "archive_update",
    "binomial_ci",
    "CoEvolutionSearch",
    "complexity",
    "constrained_dominates",
    "ControlState",
    "coverage",
    "crossover_pmi",
    "crowding_distance",
    "default_pool",
    "default_prompt_mutator",
    "diagnose_and_inject",
    "EliteArchive",
    "emit_report",
    "environmental_select",
    "evaluate_population",
    "EvaluationRecord",
    "execute",
    "ExternalEvaluator",
    "fdc",
    "fitness_vector",
    "FitnessVector",
    "Genome",
    "genome_distance",
    "initial_population",
    "lhs_sample",
    "max_gap",
    "mutate_radical",
    "mutate_role",
    "mutate_topology",
    "NodeSpec",
    "nondominated_sort",
    "normalized_hv",
    "ParetoDiagnostics",
    "preference_score",
    "PreferenceParams",
    "PromptTemplate",
    "response_index",
    "RoleId",
    "RoleRegistry",
    "run_evolution",
    "RunConfig",
    "select_anchors",
    "select_operating_point",
    "spacing",
    "stagnation_probability",
    "SyntheticEvaluator",
    "SyntheticLandscape",
    "validate_genome",
    "weight_schedule",
]
