"""Constrained NSGA-II environmental selection with niching, quota and archive."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .evaluation import EvaluationRecord
from .exceptions import DomainError, InsufficientPool
from .genome import DistanceWeights, Genome, genome_distance

NEG_INF = float("-inf")


def feasibility_threshold(best_acc: float | None, delta: float) -> float:
    """Accuracy floor ``best_acc - delta``; ``-inf`` when nothing has been seen yet."""
    if delta < 0:
        raise DomainError(f"delta must be non-negative, got {delta}")
    if best_acc is None:
        return NEG_INF
    return best_acc - delta


def best_accuracy(records: Sequence[EvaluationRecord]) -> float | None:
    values = [r.accuracy for r in records if not r.failed]
    return max(values) if values else None


def pareto_dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Maximization dominance: ``a >= b`` everywhere and ``>`` somewhere."""
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def constrained_dominates(a: EvaluationRecord, b: EvaluationRecord, tau: float) -> bool:
    fa, fb = a.is_feasible(tau), b.is_feasible(tau)
    if fa != fb:
        return fa
    return pareto_dominates(a.objectives(), b.objectives())


def nondominated_sort(records: Sequence[EvaluationRecord], tau: float) -> list[list[int]]:
    """Fast non-dominated sort under constrained dominance.

    Returns fronts as lists of indices into ``records``, each in ascending
    index order.
    """
    n = len(records)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if constrained_dominates(records[i], records[j], tau):
                dominated_by[i].append(j)
                counts[j] += 1
            elif constrained_dominates(records[j], records[i], tau):
                dominated_by[j].append(i)
                counts[i] += 1
    fronts = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(sorted(current))
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        current = nxt
    return fronts


def crowding_distance(front: Sequence[EvaluationRecord]) -> list[float]:
    """NSGA-II crowding distance on the maximization triple.

    Exact duplicates share one value: distances are computed over distinct
    objective vectors and copied back. Objectives with zero range add
    nothing, including to the boundary points.
    """
    if not front:
        return []
    vectors = [tuple(r.objectives()) for r in front]
    unique = sorted(set(vectors))
    if len(unique) <= 2:
        return [math.inf] * len(front)
    pts = np.array(unique)
    dist = np.zeros(len(unique))
    for k in range(pts.shape[1]):
        order = np.argsort(pts[:, k], kind="mergesort")
        lo, hi = pts[order[0], k], pts[order[-1], k]
        span = hi - lo
        if span == 0:
            continue
        dist[order[0]] = dist[order[-1]] = math.inf
        for pos in range(1, len(order) - 1):
            dist[order[pos]] += (pts[order[pos + 1], k] - pts[order[pos - 1], k]) / span
    lookup = dict(zip(unique, dist.tolist()))
    return [lookup[v] for v in vectors]


# ---------------------------------------------------------------------------
# niching


@dataclass(frozen=True)
class NicheBin:
    cost_quantile_index: int
    complexity_quantile_index: int


@dataclass(frozen=True)
class BinAssignment:
    bins: tuple[NicheBin, ...]
    cost_edges: tuple[float, ...]
    complexity_edges: tuple[float, ...]

    def bin_of(self, record: EvaluationRecord) -> NicheBin:
        return NicheBin(
            int(np.searchsorted(self.cost_edges, record.token_cost, side="left")),
            int(np.searchsorted(self.complexity_edges, record.complexity, side="left")),
        )


def assign_bins(records: Sequence[EvaluationRecord], n_bins: int = 4) -> BinAssignment:
    """Quantile bins over token cost and complexity.

    Boundaries are the empirical ``1/n, ..., (n-1)/n`` quantiles (linear
    interpolation); a value's bin index is the number of boundaries
    strictly below it.
    """
    if not records:
        raise DomainError("assign_bins needs at least one record")
    qs = np.arange(1, n_bins) / n_bins
    costs = np.array([r.token_cost for r in records], dtype=float)
    ks = np.array([r.complexity for r in records], dtype=float)
    edges_c = tuple(np.quantile(costs, qs).tolist()) if n_bins > 1 else ()
    edges_k = tuple(np.quantile(ks, qs).tolist()) if n_bins > 1 else ()
    partial = BinAssignment((), edges_c, edges_k)
    return BinAssignment(tuple(partial.bin_of(r) for r in records), edges_c, edges_k)


# ---------------------------------------------------------------------------
# archive


@dataclass(frozen=True)
class ArchiveEntry:
    genome: Genome
    record: EvaluationRecord
    generation: int


@dataclass(frozen=True)
class EliteArchive:
    entries: tuple[ArchiveEntry, ...] = ()
    capacity: int = 32
    dedup_threshold: float = 0.05

    def __len__(self) -> int:
        return len(self.entries)

    def genome_ids(self) -> list[str]:
        return [e.record.genome_id for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "dedup_threshold": self.dedup_threshold,
            "entries": [
                {"genome": e.genome.to_dict(), "record": e.record.to_dict(), "generation": e.generation}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EliteArchive":
        entries = tuple(
            ArchiveEntry(Genome.from_dict(e["genome"]), EvaluationRecord.from_dict(e["record"]), int(e["generation"]))
            for e in d.get("entries", ())
        )
        return cls(entries, int(d.get("capacity", 32)), float(d.get("dedup_threshold", 0.05)))


def archive_update(
    archive: EliteArchive,
    elites: Sequence[EvaluationRecord],
    genomes: Mapping[str, Genome],
    generation: int,
    tau: float = NEG_INF,
    weights: DistanceWeights = DistanceWeights(),
) -> EliteArchive:
    """Insert feasible elites that are not near-duplicates; evict oldest first."""
    entries = list(archive.entries)
    for rec in elites:
        if not rec.is_feasible(tau) or rec.genome_id not in genomes:
            continue
        if any(e.record.genome_id == rec.genome_id for e in entries):
            continue
        g = genomes[rec.genome_id]
        if any(genome_distance(g, e.genome, weights) < archive.dedup_threshold for e in entries):
            continue
        entries.append(ArchiveEntry(g, rec, generation))
    if len(entries) > archive.capacity:
        entries = entries[len(entries) - archive.capacity:]
    return EliteArchive(tuple(entries), archive.capacity, archive.dedup_threshold)


# ---------------------------------------------------------------------------
# environmental selection


@dataclass(frozen=True)
class SelectionConfig:
    delta: float = 0.05
    n_bins: int = 4
    quota: int = 2
    k_quota: int = 6
    relax: float = 0.0
    dedup_threshold: float = 0.05


@dataclass
class SelectionResult:
    elites: list[EvaluationRecord]
    tau: float
    rank: dict[str, int]
    crowding: dict[str, float]
    bins: dict[str, NicheBin]
    nominal_cap: int
    cap: int
    source: dict[str, str] = field(default_factory=dict)

    @property
    def elite_ids(self) -> list[str]:
        return [r.genome_id for r in self.elites]

    def occupancy(self) -> Counter:
        return Counter(self.bins[r.genome_id] for r in self.elites)


def nominal_bin_cap(elite_size: int, active_bins: int, relax: float = 0.0) -> int:
    base = max(1, math.ceil(elite_size / max(1, active_bins)))
    return max(1, math.ceil(base * (1.0 + max(0.0, relax)) - 1e-9))


def environmental_select(
    records: Sequence[EvaluationRecord],
    elite_size: int,
    config: SelectionConfig = SelectionConfig(),
    archive: EliteArchive | None = None,
    genomes: Mapping[str, Genome] | None = None,
    tau: float | None = None,
) -> SelectionResult:
    """Pick ``elite_size`` survivors from parents plus offspring.

    Order of business: accuracy floor, constrained non-dominated sort, a
    front-by-front fill by descending crowding that skips bins at capacity,
    the structural quota, then archive entries for any open slot. If slots
    are still open because the pool is concentrated in a few bins, the bin
    cap is raised one step at a time and the fill resumes in NSGA-II order;
    ``SelectionResult.cap`` reports the cap actually enforced. Cloning the
    best elites is the last resort.
    """
    if elite_size < 1 or len(records) < elite_size:
        raise InsufficientPool(f"pool of {len(records)} cannot supply {elite_size} elites")
    genomes = genomes or {}
    if len({r.genome_id for r in records}) != len(records):
        raise DomainError("genome ids in the selection pool must be unique")
    if tau is None:
        tau = feasibility_threshold(best_accuracy(records), config.delta)

    fronts = nondominated_sort(records, tau)
    rank: dict[str, int] = {}
    crowd: dict[str, float] = {}
    for k, front in enumerate(fronts):
        members = [records[i] for i in front]
        for rec, cd in zip(members, crowding_distance(members)):
            rank[rec.genome_id] = k
            crowd[rec.genome_id] = cd

    def order_key(r: EvaluationRecord):
        # feasibility and rank first; among equal crowding the most accurate
        # goes first so the best genome is always retained
        return (rank[r.genome_id], -crowd[r.genome_id], -r.accuracy, r.genome_id)

    ordered = sorted(records, key=order_key)
    assignment = assign_bins(records, config.n_bins)
    bins = {r.genome_id: b for r, b in zip(records, assignment.bins)}
    nominal = nominal_bin_cap(elite_size, len(set(assignment.bins)), config.relax)
    cap = nominal

    selected: list[EvaluationRecord] = []
    chosen: set[str] = set()
    occupancy: Counter = Counter()
    source: dict[str, str] = {}

    def take(rec: EvaluationRecord, why: str) -> None:
        selected.append(rec)
        chosen.add(rec.genome_id)
        occupancy[bins[rec.genome_id]] += 1
        source[rec.genome_id] = why

    def drop(rec: EvaluationRecord) -> None:
        selected.remove(rec)
        chosen.discard(rec.genome_id)
        occupancy[bins[rec.genome_id]] -= 1
        source.pop(rec.genome_id, None)

    for rec in ordered:
        if len(selected) == elite_size:
            break
        if occupancy[bins[rec.genome_id]] < cap:
            take(rec, "front")

    # structural quota
    def qualifies(r: EvaluationRecord) -> bool:
        return r.is_feasible(tau) and r.complexity >= config.k_quota

    qualifying = [r for r in ordered if qualifies(r)]
    need = min(config.quota, len(qualifying))
    protected = selected[0].genome_id if selected else None
    pending = [r for r in qualifying if r.genome_id not in chosen]
    forced = []
    while sum(qualifies(r) for r in selected) < need and pending:
        cand = pending.pop(0)
        b = bins[cand.genome_id]
        if len(selected) < elite_size and occupancy[b] < cap:
            take(cand, "quota")
            continue
        removable = sorted((r for r in selected if not qualifies(r) and r.genome_id != protected),
                           key=order_key, reverse=True)
        if occupancy[b] < cap:
            victim = removable[0] if removable else None
        else:
            victim = next((r for r in removable if bins[r.genome_id] == b), None)
        if victim is None:
            forced.append(cand)
            continue
        drop(victim)
        take(cand, "quota")
    # quota beats the bin cap when no cap-respecting swap exists
    while sum(qualifies(r) for r in selected) < need and forced:
        cand = forced.pop(0)
        removable = sorted((r for r in selected if not qualifies(r) and r.genome_id != protected),
                           key=order_key, reverse=True)
        if len(selected) >= elite_size:
            if not removable:
                break
            drop(removable[0])
        take(cand, "quota")
        cap = max(cap, occupancy[bins[cand.genome_id]])

    # archive for open slots
    if archive is not None and len(selected) < elite_size:
        for entry in sorted(archive.entries, key=lambda e: (-e.record.accuracy, e.record.genome_id)):
            if len(selected) == elite_size:
                break
            rec = entry.record
            if rec.genome_id in chosen or rec.failed:
                continue
            near = any(
                r.genome_id in genomes and genome_distance(entry.genome, genomes[r.genome_id]) < config.dedup_threshold
                for r in selected
            )
            if near:
                continue
            b = assignment.bin_of(rec)
            if occupancy[b] >= cap:
                continue
            bins[rec.genome_id] = b
            rank.setdefault(rec.genome_id, len(fronts))
            crowd.setdefault(rec.genome_id, 0.0)
            take(rec, "archive")

    # relax the cap until the pool can fill the remaining slots
    while len(selected) < elite_size and len(chosen & {r.genome_id for r in records}) < len(records):
        cap += 1
        for rec in ordered:
            if len(selected) == elite_size:
                break
            if rec.genome_id not in chosen and occupancy[bins[rec.genome_id]] < cap:
                take(rec, "relaxed")

    k = 0
    while len(selected) < elite_size:
        selected.append(selected[k % len(selected)])
        source.setdefault(f"clone:{k}", selected[k % len(selected)].genome_id)
        k += 1
    cap = max(cap, max(occupancy.values(), default=0))
    return SelectionResult(selected, tau, rank, crowd, bins, nominal, cap, source)
