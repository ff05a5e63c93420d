"""Cross-generational diagnostics, the response index and targeted injection."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .evaluation import EvaluationRecord
from .exceptions import NoViableAnchor
from .genome import Genome
from .indicators import ObjectiveBounds, coverage, max_gap, normalize, normalized_hv, occupied_cells, spacing
from .initialization import RADICAL_KINDS
from .prompts import PromptMutator, RolePool, default_pool
from .selection import EliteArchive, NicheBin
from .variation import MutationWeights, _tagged, crossover_pmi, mutate_radical, mutate_role, mutate_topology, select_anchors

COMPONENTS = ("hv", "acc", "tok", "div")
EARLY_WEIGHTS = (0.2, 0.2, 0.1, 0.5)
LATE_WEIGHTS = (0.4, 0.35, 0.1, 0.15)


def _clamp(x: float, lo: float = 0.0, hi: float = 1.0) -> float:
    return min(hi, max(lo, x))


@dataclass(frozen=True)
class ParetoDiagnostics:
    generation: int
    hv: float
    spacing: float
    max_gap: float
    coverage: float
    best_accuracy: float = 0.0
    mean_cost: float = 0.0
    clusters: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParetoDiagnostics":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class ControlParams:
    window: int = 3
    alpha: float = 12.0
    beta_sig: float = -8.0
    coverage_target: float = 0.5
    cost_target: float | None = None
    hv_gain_target: float = 0.01
    acc_gain_target: float = 0.01
    coverage_bins: int = 4
    c_t: float = 0.5
    rate_lo: float = 0.05
    rate_hi: float = 0.9
    op_shift: float = 1.0
    min_op_share: float = 0.05
    relax_max: float = 0.5
    neutral_eps: float = 1e-3
    gap_threshold: float = 0.35
    n_inject: int = 4
    early_weights: tuple[float, float, float, float] = EARLY_WEIGHTS
    late_weights: tuple[float, float, float, float] = LATE_WEIGHTS

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ControlParams":
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**kw)


@dataclass(frozen=True)
class ControlState:
    s: float
    p_stag: float
    components: tuple[float, float, float, float]
    weights: tuple[float, float, float, float]
    window: tuple[ParetoDiagnostics, ...] = ()

    def component(self, name: str) -> float:
        return self.components[COMPONENTS.index(name)]

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "p_stag": self.p_stag,
            "components": dict(zip(COMPONENTS, self.components)),
            "weights": dict(zip(COMPONENTS, self.weights)),
            "window": [d.to_dict() for d in self.window],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ControlState":
        return cls(
            float(d["s"]),
            float(d["p_stag"]),
            tuple(float(d["components"][c]) for c in COMPONENTS),
            tuple(float(d["weights"][c]) for c in COMPONENTS),
            tuple(ParetoDiagnostics.from_dict(w) for w in d.get("window", ())),
        )


# ---------------------------------------------------------------------------
# diagnostics


def front_diagnostics(
    elites: Sequence[EvaluationRecord],
    bounds: ObjectiveBounds,
    generation: int,
    n_bins: int = 4,
    tau: float = float("-inf"),
) -> ParetoDiagnostics:
    """Indicators over the feasible elites of one generation."""
    feasible = [r for r in elites if r.is_feasible(tau)]
    pts = normalize([r.objectives() for r in feasible], bounds) if feasible else np.zeros((0, 3))
    alive = [r for r in elites if not r.failed]
    return ParetoDiagnostics(
        generation=generation,
        hv=normalized_hv([r.objectives() for r in feasible], bounds),
        spacing=spacing(pts),
        max_gap=max_gap(pts),
        coverage=coverage(pts, n_bins),
        best_accuracy=max((r.accuracy for r in alive), default=0.0),
        mean_cost=float(np.mean([r.token_cost for r in alive])) if alive else 0.0,
        clusters=multimodality(pts, n_bins),
    )


def weight_schedule(
    generation: int,
    total_generations: int,
    early: Sequence[float] = EARLY_WEIGHTS,
    late: Sequence[float] = LATE_WEIGHTS,
) -> tuple[float, float, float, float]:
    """Linear interpolation from diversity-heavy to hypervolume-heavy weights."""
    t = 1.0 if total_generations <= 0 else _clamp(generation / total_generations)
    w = (1 - t) * np.asarray(early, dtype=float) + t * np.asarray(late, dtype=float)
    w = np.maximum(w, 0.0)
    return tuple(float(x) for x in w / w.sum())


def _relative_gain(now: float, ref: float) -> float:
    return (now - ref) / max(abs(ref), 1e-12)


def response_index(
    history: Sequence[ParetoDiagnostics],
    generation: int,
    total_generations: int,
    params: ControlParams = ControlParams(),
    weights: Sequence[float] | None = None,
) -> ControlState:
    """Bounded weighted sum of stagnation, cost pressure and diversity deficit.

    The hypervolume and accuracy terms compare the latest entry against the
    one ``window`` generations back (or the oldest available); a relative
    gain of ``*_gain_target`` or more counts as full progress. With a
    single entry there is no evidence of stagnation and both are 0.
    """
    if not history:
        raise ValueError("response_index needs at least one diagnostics entry")
    window = tuple(history[-(params.window + 1):])
    now, ref = window[-1], window[0]
    if len(window) < 2:
        s_hv = s_acc = 0.0
    else:
        s_hv = _clamp(1.0 - _relative_gain(now.hv, ref.hv) / params.hv_gain_target)
        s_acc = _clamp(1.0 - _relative_gain(now.best_accuracy, ref.best_accuracy) / params.acc_gain_target)
    target = params.cost_target
    s_tok = _clamp((now.mean_cost - target) / target) if target and target > 0 else 0.0
    s_div = _clamp(1.0 - now.coverage / params.coverage_target)
    comps = (s_hv, s_acc, s_tok, s_div)
    w = tuple(weights) if weights is not None else weight_schedule(
        generation, total_generations, params.early_weights, params.late_weights)
    s = _clamp(sum(a * b for a, b in zip(w, comps)))
    return ControlState(s, stagnation_probability(s, params.alpha, params.beta_sig), comps, w, window)


def stagnation_probability(s: float, alpha: float = 12.0, beta_sig: float = -8.0) -> float:
    z = alpha * s + beta_sig
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def bin_relax(state: ControlState | None, relax_max: float = 0.5) -> float:
    """Cap relaxation grows as the diversity deficit shrinks."""
    if state is None:
        return 0.0
    return relax_max * (1.0 - state.component("div"))


# ---------------------------------------------------------------------------
# landscape features


@dataclass(frozen=True)
class LandscapeFeatures:
    neutrality: float = 0.0
    ruggedness: float = 0.0
    multimodality: int = 0


def neutrality(child_acc: Sequence[float], parent_acc: Sequence[float], eps: float = 1e-3) -> float:
    """Fraction of offspring whose accuracy moved less than ``eps``."""
    if not child_acc:
        return 0.0
    return sum(abs(c - p) < eps for c, p in zip(child_acc, parent_acc)) / len(child_acc)


def ruggedness(best_acc: Sequence[float]) -> float:
    """Lag-1 autocorrelation of successive best-accuracy changes."""
    deltas = np.diff(np.asarray(best_acc, dtype=float))
    if len(deltas) < 3:
        return 0.0
    a, b = deltas[:-1], deltas[1:]
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def multimodality(points, n_bins: int = 4) -> int:
    """Number of 4-connected clusters of occupied cost x complexity cells."""
    cells = occupied_cells(points, n_bins) if len(points) else set()
    seen: set = set()
    clusters = 0
    for cell in sorted(cells):
        if cell in seen:
            continue
        clusters += 1
        stack = [cell]
        while stack:
            c = stack.pop()
            if c in seen:
                continue
            seen.add(c)
            i, j = c
            stack.extend(n for n in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)) if n in cells)
    return clusters


def adjust_rates(
    base: MutationWeights,
    state: ControlState,
    features: LandscapeFeatures | None = None,
    params: ControlParams = ControlParams(),
) -> MutationWeights:
    """Scale mutation rates by the response index and tilt operator weights.

    ``rate = clamp(base * (1 + c_t * s * (1 + f)), lo, hi)`` where ``f`` is a
    bounded landscape multiplier (neutral plateaus push topology edits,
    rugged accuracy traces push role edits). Add-operators gain weight under
    a diversity deficit, remove-operators under cost pressure.
    """
    features = features or LandscapeFeatures()
    f_topo = 0.5 * _clamp(features.neutrality)
    f_role = 0.5 * _clamp(abs(features.ruggedness))
    s = state.s
    topo = _clamp(base.topo_rate * (1 + params.c_t * s * (1 + f_topo)), params.rate_lo, params.rate_hi)
    role = _clamp(base.role_rate * (1 + params.c_t * s * (1 + f_role)), params.rate_lo, params.rate_hi)
    if s == 0:
        return MutationWeights(*base.as_array().tolist(), role_rate=role, topo_rate=topo)
    w = base.as_array().copy()
    div, tok = state.component("div"), state.component("tok")
    if div > tok:
        w[[0, 2]] *= 1 + params.op_shift * div
    elif tok > div:
        w[[1, 3]] *= 1 + params.op_shift * tok
    w = w / w.sum()
    w = np.maximum(w, params.min_op_share)
    w = w / w.sum()
    return MutationWeights(*(float(x) for x in w), role_rate=role, topo_rate=topo)


# ---------------------------------------------------------------------------
# targeted injection


class InjectionMode(str, Enum):
    REGRESSION_RECOVERY = "RegressionRecovery"
    DIVERSITY_LOSS = "DiversityLoss"
    SEMANTIC_DEFICIENCY = "SemanticDeficiency"
    MULTI_ISLAND_SPLIT = "MultiIslandSplit"
    RADICAL_INNOVATION = "RadicalInnovation"


@dataclass(frozen=True)
class InjectionDiagnosis:
    mode: InjectionMode
    target_region: NicheBin | None = None


def diagnose(history: Sequence[ParetoDiagnostics], params: ControlParams = ControlParams()) -> InjectionDiagnosis:
    """Pick one injection mode; precedence follows the order of the checks."""
    now = history[-1]
    window = list(history[-params.window:])
    if len(history) > 1 and now.best_accuracy < max(d.best_accuracy for d in history[-(params.window + 1):-1]):
        return InjectionDiagnosis(InjectionMode.REGRESSION_RECOVERY)
    if len(window) >= params.window and all(d.coverage < params.coverage_target for d in window):
        return InjectionDiagnosis(InjectionMode.DIVERSITY_LOSS)
    if now.max_gap >= params.gap_threshold:
        return InjectionDiagnosis(InjectionMode.SEMANTIC_DEFICIENCY)
    if now.clusters >= 2:
        return InjectionDiagnosis(InjectionMode.MULTI_ISLAND_SPLIT)
    return InjectionDiagnosis(InjectionMode.RADICAL_INNOVATION)


def missing_region(points, n_bins: int = 4) -> NicheBin | None:
    """Empty cost x complexity cell next to an occupied one, lowest index first."""
    cells = occupied_cells(points, n_bins) if len(points) else set()
    for i in range(n_bins):
        for j in range(n_bins):
            if (i, j) in cells:
                continue
            if any(n in cells for n in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1))):
                return NicheBin(i, j)
    return None


def diagnose_and_inject(
    history: Sequence[ParetoDiagnostics],
    archive: EliteArchive,
    elites: Sequence[tuple[Genome, EvaluationRecord]],
    pool: RolePool | None,
    rng: np.random.Generator,
    p_stag: float,
    params: ControlParams = ControlParams(),
    bounds: ObjectiveBounds | None = None,
    mutator: PromptMutator | None = None,
) -> tuple[InjectionDiagnosis | None, list[Genome]]:
    """Draw the trigger with probability ``p_stag`` and build injected genomes.

    Injected genomes are ordinary candidates: the caller adds them to the
    offspring pool, where they compete under constrained selection.
    """
    if not elites or rng.random() >= p_stag:
        return None, []
    pool = pool or default_pool()
    diag = diagnose(history, params)
    n = max(2, params.n_inject)
    ranked = sorted(elites, key=lambda e: (-e[1].accuracy, e[1].token_cost, e[1].genome_id))
    out: list[Genome] = []
    mode = diag.mode

    if mode is InjectionMode.REGRESSION_RECOVERY:
        if len(archive):
            best_gen = max(archive.entries, key=lambda e: (e.record.accuracy, -e.generation)).generation
            sources = [e.genome for e in archive.entries if e.generation == best_gen]
        else:
            sources = [ranked[0][0]]
        conservative = MutationWeights(0.25, 0.25, 0.25, 0.25)
        for i in range(n):
            out.append(mutate_topology(sources[i % len(sources)], conservative, rng, pool))
    elif mode is InjectionMode.DIVERSITY_LOSS:
        for i in range(n):
            kind = RADICAL_KINDS[i % len(RADICAL_KINDS)]
            out.append(mutate_radical(ranked[i % len(ranked)][0], rng, pool, kind=kind))
    elif mode is InjectionMode.SEMANTIC_DEFICIENCY:
        pts = normalize([r.objectives() for _, r in ranked], bounds or ObjectiveBounds())
        region = missing_region(pts, params.coverage_bins)
        diag = InjectionDiagnosis(mode, region)
        # high normalized complexity score means a small graph
        k_idx = region.complexity_quantile_index if region else int(rng.integers(params.coverage_bins))
        frac = 1.0 - (k_idx + 0.5) / params.coverage_bins
        target_free = max(1, round(1 + frac * 6))
        for i in range(n):
            out.append(mutate_radical(ranked[i % len(ranked)][0], rng, pool, target_free=target_free))
    elif mode is InjectionMode.MULTI_ISLAND_SPLIT:
        cheap = sorted(ranked, key=lambda e: (e[1].token_cost, e[1].genome_id))
        pairs = [(ranked[i % len(ranked)][0], cheap[i % len(cheap)][0]) for i in range(n)]
        for a, b in pairs:
            try:
                child = crossover_pmi(a, b, select_anchors(a, b, rng))
            except NoViableAnchor:
                child = mutate_radical(a, rng, pool)
            out.append(child)
    else:
        for i in range(n):
            g = mutate_radical(ranked[i % len(ranked)][0], rng, pool)
            out.append(mutate_role(g, pool, mutator, rng))

    return diag, [_tagged(g, f"inject:{mode.value}") for g in out]


# ---------------------------------------------------------------------------
# CSV


DIAGNOSTICS_COLUMNS = ("generation", "hv", "spacing", "max_gap", "coverage", "s", "p_stag", "injection_mode")


def write_diagnostics_csv(path: str | Path, rows: Sequence[Mapping]) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=DIAGNOSTICS_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in DIAGNOSTICS_COLUMNS})


def read_diagnostics_csv(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
