"""The generational loop, checkpoints, operating-point selection and reports."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import shutil
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .config import RunConfig
from .control import (
    ControlState,
    LandscapeFeatures,
    ParetoDiagnostics,
    adjust_rates,
    bin_relax,
    diagnose_and_inject,
    front_diagnostics,
    neutrality,
    response_index,
    ruggedness,
    write_diagnostics_csv,
)
from .evaluation import (
    EvalSource,
    EvaluationRecord,
    PreferenceParams,
    Z_95,
    SyntheticEvaluator,
    binomial_ci,
    evaluate_population,
)
from .exceptions import EmptyFront, EvaluatorOutage, NoViableAnchor
from .external import ExternalEvaluator
from .genome import Genome
from .indicators import normalized_hv
from .initialization import FdcReport, fdc, initial_population, probe_scores
from .prompts import PromptMutator, RolePool, default_pool
from .selection import (
    EliteArchive,
    archive_update,
    crowding_distance,
    environmental_select,
    nondominated_sort,
)
from .variation import MutationWeights, crossover_pmi, mutate_radical, mutate_role, mutate_topology, select_anchors

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA = 1
INJECT_SLOT = 10_000
MANIFEST = "manifest.json"


def slot_rng(seed: int, generation: int, slot: int) -> np.random.Generator:
    """Independent stream per (seed, generation, slot)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(generation), int(slot)]))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# evaluators


@dataclass
class FallbackEvaluator:
    """Use ``primary``; on outage answer from the synthetic landscape instead."""

    primary: Callable
    fallback: Callable
    source: EvalSource = EvalSource.EXTERNAL

    def __call__(self, genome: Genome, seed: int):
        try:
            return self.primary(genome, seed)
        except EvaluatorOutage as exc:
            logger.warning("external evaluator down (%s); using synthetic fallback for %s", exc, genome.genome_id)
            acc, cost = self.fallback(genome, seed)[:2]
            return acc, cost, EvalSource.FALLBACK.value


def build_evaluator(config: RunConfig, log_dir: str | Path | None = None) -> Callable:
    synthetic = SyntheticEvaluator(config.landscape)
    ev = config.evaluator
    if ev.kind == "synthetic":
        return synthetic
    external = ExternalEvaluator(ev.endpoint, ev.task_batch_id, ev.timeout, ev.retries, ev.backoff, log_dir)
    return FallbackEvaluator(external, synthetic) if ev.fallback_synthetic else external


# ---------------------------------------------------------------------------
# run state


@dataclass
class RunState:
    generation: int
    elites: list[EvaluationRecord]
    genomes: dict[str, Genome]
    archive: EliteArchive
    history: list[ParetoDiagnostics]
    control: ControlState
    weights: MutationWeights
    crossover_rate: float
    cost_target: float
    T0: float
    tau: float
    fdc_report: FdcReport | None = None

    def unique_elites(self) -> list[EvaluationRecord]:
        seen, out = set(), []
        for r in self.elites:
            if r.genome_id not in seen:
                seen.add(r.genome_id)
                out.append(r)
        return out


@dataclass
class RunResult:
    run_dir: Path
    state: RunState
    checkpoints: list[Path]
    digests: list[str]
    pareto_records: list[EvaluationRecord]
    operating_point: str | None
    status: str = "complete"


def pareto_front(records: Sequence[EvaluationRecord], tau: float) -> list[EvaluationRecord]:
    """Feasible, rank-0 members with clones removed."""
    uniq = list({r.genome_id: r for r in records if not r.failed}.values())
    if not uniq:
        return []
    fronts = nondominated_sort(uniq, tau)
    return sorted((uniq[i] for i in fronts[0] if uniq[i].is_feasible(tau)), key=lambda r: r.genome_id)


# ---------------------------------------------------------------------------
# operating point


@dataclass(frozen=True)
class OperatingPointTrace:
    selected: str
    a_max: float
    threshold: float
    p_tau: tuple[str, ...]
    tail_quantile: float
    removed: tuple[str, ...]
    candidates: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "selected": self.selected,
            "a_max": self.a_max,
            "threshold": self.threshold,
            "p_tau": list(self.p_tau),
            "tail_quantile": self.tail_quantile,
            "removed": list(self.removed),
            "candidates": list(self.candidates),
        }


def operating_point_trace(
    records: Sequence[EvaluationRecord],
    delta: float = 0.05,
    eps_acc: float = 0.015,
    cost_factor: float = 0.8,
    percentile: float = 80.0,
) -> OperatingPointTrace:
    """Fixed dev-set rule for picking one genome off the front.

    Keep candidates within ``delta`` of the best accuracy; inside that set,
    drop any candidate in the upper cost tail (cost at or above the
    ``percentile`` cost, linear interpolation) when a candidate costing at
    most ``cost_factor`` times as much is within ``eps_acc`` accuracy; then
    take the lexicographic maximum of ``(A, -C, -K)``.
    """
    pool = [r for r in records if not r.failed]
    if not pool:
        raise EmptyFront("no candidates to select from")
    a_max = max(r.accuracy for r in pool)
    threshold = a_max - delta
    p_tau = [r for r in pool if r.accuracy >= threshold]
    q = float(np.percentile([r.token_cost for r in p_tau], percentile))
    removed = []
    for m in p_tau:
        if m.token_cost < q:
            continue
        if any(o is not m and o.token_cost <= cost_factor * m.token_cost and o.accuracy >= m.accuracy - eps_acc
               for o in p_tau):
            removed.append(m)
    kept = [r for r in p_tau if r not in removed] or p_tau
    best = max(kept, key=lambda r: (r.accuracy, -r.token_cost, -r.complexity, _neg_id(r.genome_id)))
    return OperatingPointTrace(
        best.genome_id, a_max, threshold,
        tuple(r.genome_id for r in p_tau), q,
        tuple(r.genome_id for r in removed), tuple(r.genome_id for r in kept),
    )


def _neg_id(genome_id: str) -> tuple:
    # max() picks the lowest id on a full tie
    return tuple(-ord(c) for c in genome_id) + (1,)


def select_operating_point(
    records: Sequence[EvaluationRecord],
    delta: float = 0.05,
    eps_acc: float = 0.015,
    cost_factor: float = 0.8,
    percentile: float = 80.0,
) -> str:
    return operating_point_trace(records, delta, eps_acc, cost_factor, percentile).selected


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_path(run_dir: Path, generation: int) -> Path:
    return Path(run_dir) / f"gen_{generation}.json"


def load_manifest(run_dir: str | Path) -> dict:
    return json.loads((Path(run_dir) / MANIFEST).read_text(encoding="utf-8"))


def load_checkpoint(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_trail(run_dir: str | Path) -> list[dict]:
    manifest = load_manifest(run_dir)
    return [load_checkpoint(Path(run_dir) / c["file"]) for c in manifest["checkpoints"]]


def _tau_out(tau: float):
    return None if math.isinf(tau) else tau


def _tau_in(value) -> float:
    return float("-inf") if value is None else float(value)


def _checkpoint_payload(config: RunConfig, state: RunState, evaluated, new_genomes, selection, injection) -> dict:
    genomes = {g.genome_id: g.to_dict() for g in new_genomes}
    for r in state.elites:
        genomes.setdefault(r.genome_id, state.genomes[r.genome_id].to_dict())
    nxt = slot_rng(config.seed, state.generation + 1, 0)
    rng_digest = hashlib.sha256(json.dumps(nxt.bit_generator.state, sort_keys=True).encode()).hexdigest()
    return {
        "schema_version": CHECKPOINT_SCHEMA,
        "run_id": config.effective_run_id,
        "generation": state.generation,
        "tau": _tau_out(state.tau),
        "crossover_rate": state.crossover_rate,
        "cost_target": state.cost_target,
        "T0": state.T0,
        "evaluated": [r.to_dict() for r in evaluated],
        "genomes": genomes,
        "elites": [r.to_dict() for r in state.elites],
        "elite_ids": [r.genome_id for r in state.elites],
        "selection": selection,
        "archive": state.archive.to_dict(),
        "diagnostics": state.history[-1].to_dict(),
        "history": [d.to_dict() for d in state.history],
        "control": state.control.to_dict(),
        "mutation_weights": state.weights.to_dict(),
        "injection": injection,
        "fdc": state.fdc_report.to_dict() if state.fdc_report else None,
        "rng_digest": rng_digest,
    }


def state_from_checkpoint(ck: Mapping) -> RunState:
    genomes = {gid: Genome.from_dict(d) for gid, d in ck["genomes"].items()}
    elites = [EvaluationRecord.from_dict(d) for d in ck["elites"]]
    return RunState(
        generation=int(ck["generation"]),
        elites=elites,
        genomes={r.genome_id: genomes[r.genome_id] for r in elites},
        archive=EliteArchive.from_dict(ck["archive"]),
        history=[ParetoDiagnostics.from_dict(d) for d in ck["history"]],
        control=ControlState.from_dict(ck["control"]),
        weights=MutationWeights(**ck["mutation_weights"]),
        crossover_rate=float(ck["crossover_rate"]),
        cost_target=float(ck["cost_target"]),
        T0=float(ck["T0"]),
        tau=_tau_in(ck["tau"]),
        fdc_report=FdcReport.from_dict(ck["fdc"]) if ck.get("fdc") else None,
    )


class _Trail:
    """Owns the run directory: checkpoint files plus the manifest."""

    def __init__(self, run_dir: Path, config: RunConfig, manifest: dict | None = None):
        self.run_dir = run_dir
        self.config = config
        self.manifest = manifest or {
            "schema_version": CHECKPOINT_SCHEMA,
            "run_id": config.effective_run_id,
            "package_version": __version__,
            "config": config.to_dict(),
            "config_sha256": hashlib.sha256(config.to_json().encode()).hexdigest(),
            "status": "running",
            "checkpoints": [],
            "partial": None,
            "error": None,
        }

    def write(self, payload: dict) -> Path:
        gen = payload["generation"]
        path = checkpoint_path(self.run_dir, gen)
        path.write_text(_dumps(payload), encoding="utf-8")
        entries = [c for c in self.manifest["checkpoints"] if c["generation"] != gen]
        entries.append({"generation": gen, "file": path.name, "sha256": _sha256(path)})
        self.manifest["checkpoints"] = sorted(entries, key=lambda c: c["generation"])
        self.manifest["partial"] = None
        self.manifest["error"] = None
        self.flush()
        return path

    def abort(self, generation: int, pending: Sequence[Genome], error: Exception) -> Path:
        path = self.run_dir / f"gen_{generation}_partial.json"
        path.write_text(_dumps({
            "schema_version": CHECKPOINT_SCHEMA,
            "generation": generation,
            "pending": [g.to_dict() for g in pending],
            "error": f"{type(error).__name__}: {error}",
        }), encoding="utf-8")
        self.manifest.update(status="aborted", partial=path.name, error=f"{type(error).__name__}: {error}")
        self.flush()
        return path

    def flush(self) -> None:
        (self.run_dir / MANIFEST).write_text(_dumps(self.manifest), encoding="utf-8")

    @property
    def paths(self) -> list[Path]:
        return [self.run_dir / c["file"] for c in self.manifest["checkpoints"]]

    @property
    def digests(self) -> list[str]:
        return [c["sha256"] for c in self.manifest["checkpoints"]]


# ---------------------------------------------------------------------------
# the loop


def _tournament(cands: Sequence[EvaluationRecord], rank, crowd, rng) -> EvaluationRecord:
    a = cands[int(rng.integers(len(cands)))]
    b = cands[int(rng.integers(len(cands)))]

    def key(r):
        return (rank[r.genome_id], -crowd[r.genome_id], -r.accuracy, r.genome_id)

    return min(a, b, key=key)


def _parent_ranking(elites: Sequence[EvaluationRecord], tau: float):
    rank, crowd = {}, {}
    for k, front in enumerate(nondominated_sort(elites, tau)):
        members = [elites[i] for i in front]
        for r, cd in zip(members, crowding_distance(members)):
            rank[r.genome_id], crowd[r.genome_id] = k, cd
    return rank, crowd


def make_offspring(
    state: RunState,
    config: RunConfig,
    pool: RolePool,
    generation: int,
    slot: int,
    p_stag: float,
    mutator: PromptMutator | None = None,
    ranking=None,
) -> tuple[Genome, EvaluationRecord]:
    """One child: tournament parents, crossover, then mutations.

    Returns the child and its first parent's record (for neutrality).
    """
    rng = slot_rng(config.seed, generation, slot)
    cands = state.unique_elites()
    rank, crowd = ranking or _parent_ranking(cands, state.tau)
    pa = _tournament(cands, rank, crowd, rng)
    pb = _tournament(cands, rank, crowd, rng)
    child = state.genomes[pa.genome_id]
    ops = []
    w = state.weights
    if rng.random() < state.crossover_rate and pb.genome_id != pa.genome_id:
        donor = state.genomes[pb.genome_id]
        try:
            plan = select_anchors(child, donor, rng, config.crossover_radius)
            child = crossover_pmi(child, donor, plan)
            ops.append(child.lineage[-1])
        except NoViableAnchor:
            ops.append("crossover:no-anchor")
    if rng.random() < w.topo_rate:
        child = mutate_topology(child, w, rng, pool, config.mutation_retries, config.max_free_nodes)
        ops.append(child.lineage[-1])
    if rng.random() < w.role_rate:
        child = mutate_role(child, pool, mutator, rng)
        ops.append(child.lineage[-1])
    if rng.random() < p_stag:
        child = mutate_radical(child, rng, pool, max_free=min(7, config.max_free_nodes))
        ops.append(child.lineage[-1])
    parents = [f"parent={pa.genome_id}"]
    if pb.genome_id != pa.genome_id and any(o.startswith("op=crossover") for o in ops):
        parents.append(f"parent={pb.genome_id}")
    child = child.with_changes(genome_id=f"g{generation:03d}_{slot:02d}", lineage=(*parents, *ops))
    return child, pa


def _prepare_run_dir(config: RunConfig, out_dir: str | Path | None, resume: bool, force: bool) -> tuple[Path, dict | None]:
    root = Path(out_dir if out_dir is not None else config.checkpoint_dir)
    run_dir = root / config.effective_run_id
    if run_dir.exists():
        if resume and (run_dir / MANIFEST).exists():
            manifest = load_manifest(run_dir)
            if manifest["config"] != config.to_dict():
                raise FileExistsError(f"{run_dir} holds a run with a different config")
            return run_dir, manifest
        if not force:
            raise FileExistsError(f"run directory {run_dir} already exists (use --force to overwrite)")
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)
    return run_dir, None


def _initialize(config, evaluator, pool, trail: _Trail) -> RunState:
    population = initial_population(config.population_size, config.seed, pool, config.min_agents, config.max_agents)
    try:
        records = evaluate_population(population, evaluator, config.seed, 0, config.n_jobs)
    except EvaluatorOutage as exc:
        trail.abort(0, population, exc)
        raise
    genomes = {g.genome_id: g for g in population}
    costs = [r.token_cost for r in records if not r.failed]
    median_cost = float(np.median(costs)) if costs else 1.0
    median_cost = max(median_cost, 1.0)
    pref = config.preference
    T0 = pref.T0 if pref.T0 is not None else median_cost
    params = PreferenceParams(pref.k, pref.gamma, pref.beta_pref, T0, pref.K0)
    scores = probe_scores(records, params)
    report = fdc(list(zip(scores, population))) if len(population) >= 3 else None
    rate = config.crossover_bias.rate(report.fdc if report else 0.0)

    sel = environmental_select(records, config.elite_size, replace(config.selection, relax=config.selection.relax),
                               genomes=genomes)
    archive = archive_update(EliteArchive((), config.archive_capacity, config.selection.dedup_threshold),
                             sel.elites, genomes, 0, sel.tau)
    diag = front_diagnostics(sel.elites, config.bounds, 0, config.control.coverage_bins, sel.tau)
    control_params = replace(config.control, cost_target=config.control.cost_target or median_cost)
    control = response_index([diag], 0, config.generations, control_params)
    state = RunState(0, sel.elites, {r.genome_id: genomes[r.genome_id] for r in sel.elites}, archive, [diag],
                     control, adjust_rates(config.mutation, control, None, control_params), rate, median_cost, T0,
                     sel.tau, report)
    selection = {"nominal_cap": sel.nominal_cap, "cap": sel.cap, "source": sel.source, "pool_size": len(records)}
    trail.write(_checkpoint_payload(config, state, records, population, selection, None))
    logger.info("generation 0: fdc=%.3f crossover_rate=%.3f hv=%.4f", report.fdc if report else 0.0, rate, diag.hv)
    return state


def run_generation(
    state: RunState,
    config: RunConfig,
    evaluator: Callable,
    pool: RolePool,
    trail: _Trail,
    mutator: PromptMutator | None = None,
) -> RunState:
    gen = state.generation + 1
    control_params = replace(config.control, cost_target=config.control.cost_target or state.cost_target)
    p_stag = state.control.p_stag
    n_children = config.population_size - config.elite_size
    ranking = _parent_ranking(state.unique_elites(), state.tau)
    children, first_parents = [], []
    for slot in range(n_children):
        child, parent = make_offspring(state, config, pool, gen, slot, p_stag, mutator, ranking)
        children.append(child)
        first_parents.append(parent)

    # injections extend the pool but never push new evaluations past population_size
    budget = config.population_size - n_children
    injected, diagnosis = [], None
    if budget > 0:
        rng = slot_rng(config.seed, gen, INJECT_SLOT)
        elite_pairs = [(state.genomes[r.genome_id], r) for r in state.unique_elites()]
        diagnosis, injected = diagnose_and_inject(
            state.history, state.archive, elite_pairs, pool, rng, p_stag,
            replace(control_params, n_inject=min(control_params.n_inject, budget)), config.bounds, mutator)
        injected = [g.with_changes(genome_id=f"g{gen:03d}_i{j:02d}") for j, g in enumerate(injected[:budget])]

    new = children + injected
    try:
        records = evaluate_population(new, evaluator, config.seed, gen, config.n_jobs)
    except EvaluatorOutage as exc:
        trail.abort(gen, new, exc)
        raise
    genomes = dict(state.genomes)
    genomes.update({g.genome_id: g for g in new})

    pool_records = state.unique_elites() + records
    reintroduced = 0
    if gen % config.archive_every == 0:
        present = {r.genome_id for r in pool_records}
        for entry in state.archive.entries:
            if entry.record.genome_id not in present:
                pool_records.append(entry.record)
                genomes[entry.record.genome_id] = entry.genome
                present.add(entry.record.genome_id)
                reintroduced += 1
    for entry in state.archive.entries:
        genomes.setdefault(entry.record.genome_id, entry.genome)

    relax = config.selection.relax + bin_relax(state.control, control_params.relax_max)
    sel = environmental_select(pool_records, config.elite_size, replace(config.selection, relax=relax),
                               state.archive, genomes)
    archive = archive_update(state.archive, sel.elites, genomes, gen, sel.tau)
    diag = front_diagnostics(sel.elites, config.bounds, gen, control_params.coverage_bins, sel.tau)
    history = state.history + [diag]
    control = response_index(history, gen, config.generations, control_params)
    features = LandscapeFeatures(
        neutrality([r.accuracy for r in records[:n_children]], [p.accuracy for p in first_parents],
                   control_params.neutral_eps),
        ruggedness([d.best_accuracy for d in history]),
        diag.clusters,
    )
    weights = adjust_rates(config.mutation, control, features, control_params)
    new_state = RunState(gen, sel.elites, {r.genome_id: genomes[r.genome_id] for r in sel.elites}, archive,
                         history, control, weights, state.crossover_rate, state.cost_target, state.T0, sel.tau,
                         state.fdc_report)
    injection = {
        "mode": diagnosis.mode.value if diagnosis else None,
        "count": len(injected),
        "target_region": list((diagnosis.target_region.cost_quantile_index,
                               diagnosis.target_region.complexity_quantile_index))
        if diagnosis and diagnosis.target_region else None,
        "archive_reintroduced": reintroduced,
        "p_stag": p_stag,
    }
    selection = {"nominal_cap": sel.nominal_cap, "cap": sel.cap, "source": sel.source,
                 "pool_size": len(pool_records), "relax": relax}
    trail.write(_checkpoint_payload(config, new_state, records, new, selection, injection))
    logger.info("generation %d: best=%.4f hv=%.4f s=%.3f p_stag=%.4f injected=%d",
                gen, diag.best_accuracy, diag.hv, control.s, control.p_stag, len(injected))
    return new_state


def run_evolution(
    config: RunConfig,
    evaluator: Callable | None = None,
    out_dir: str | Path | None = None,
    pool: RolePool | None = None,
    mutator: PromptMutator | None = None,
    resume: bool = False,
    force: bool = False,
    report: bool = True,
) -> RunResult:
    """Run (or resume) a full search and write its checkpoint trail.

    The run directory is ``<out_dir>/<run_id>``. Every generation, including
    the initial population, produces ``gen_<N>.json``; the manifest records
    each file's SHA-256. On an evaluator outage the manifest is marked
    ``aborted``, a partial checkpoint lists the pending genomes and the
    outage is re-raised.
    """
    run_dir, manifest = _prepare_run_dir(config, out_dir, resume, force)
    pool = pool or default_pool(config.domain)
    if evaluator is None:
        evaluator = build_evaluator(config, run_dir)
    trail = _Trail(run_dir, config, manifest)
    if manifest and manifest["checkpoints"]:
        last = manifest["checkpoints"][-1]
        state = state_from_checkpoint(load_checkpoint(run_dir / last["file"]))
        trail.manifest["status"] = "running"
    else:
        state = _initialize(config, evaluator, pool, trail)
    while state.generation < config.generations:
        state = run_generation(state, config, evaluator, pool, trail, mutator)

    front = pareto_front(state.elites, state.tau)
    op = select_operating_point(front, config.delta, config.eps_acc, config.cost_factor,
                                config.tail_percentile) if front else None
    trail.manifest["status"] = "complete"
    trail.flush()
    if report:
        emit_report(run_dir)
    return RunResult(run_dir, state, trail.paths, trail.digests, front, op)


# ---------------------------------------------------------------------------
# reports


FRONT_COLUMNS = ("accuracy", "cost", "K", "genome_id", "feasible")
HV_COLUMNS = ("generation", "hv", "spacing", "gap", "coverage")


def write_front_csv(path: Path, records: Sequence[EvaluationRecord], tau: float) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRONT_COLUMNS)
        for r in sorted({r.genome_id: r for r in records}.values(), key=lambda r: r.genome_id):
            w.writerow([repr(r.accuracy), repr(r.token_cost), r.complexity, r.genome_id, int(r.is_feasible(tau))])


def read_front_csv(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{"accuracy": float(r["accuracy"]), "cost": float(r["cost"]), "K": int(r["K"]),
             "genome_id": r["genome_id"], "feasible": r["feasible"] == "1"} for r in rows]


def front_hv(rows: Sequence[Mapping], bounds) -> float:
    """Hypervolume recomputed from front CSV rows (feasible rows only)."""
    pts = [(r["accuracy"], -r["cost"], -math.log1p(r["K"])) for r in rows if r["feasible"]]
    return normalized_hv(pts, bounds)


def final_front(run_dir: str | Path) -> tuple[list[EvaluationRecord], dict]:
    trail = load_trail(run_dir)
    if not trail:
        raise EmptyFront(f"{run_dir} has no checkpoints")
    last = trail[-1]
    elites = [EvaluationRecord.from_dict(d) for d in last["elites"]]
    return pareto_front(elites, _tau_in(last["tau"])), last


def emit_report(run_dir: str | Path) -> dict[str, Path]:
    """Write hv_trend.csv, front_genN.csv per checkpoint, summary.json and diagnostics.csv."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    config = RunConfig.from_dict(manifest["config"])
    trail = load_trail(run_dir)
    if not trail:
        raise EmptyFront(f"{run_dir} has no checkpoints")
    reports = run_dir / "reports"
    reports.mkdir(exist_ok=True)
    out: dict[str, Path] = {}

    for ck in trail:
        path = reports / f"front_gen{ck['generation']}.csv"
        write_front_csv(path, [EvaluationRecord.from_dict(d) for d in ck["elites"]], _tau_in(ck["tau"]))
        out[path.name] = path

    path = reports / "hv_trend.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HV_COLUMNS)
        for ck in trail:
            if ck["generation"] == 0:
                continue
            d = ck["diagnostics"]
            w.writerow([ck["generation"], repr(d["hv"]), repr(d["spacing"]), repr(d["max_gap"]), repr(d["coverage"])])
    out[path.name] = path

    rows = []
    for ck in trail:
        d, c = ck["diagnostics"], ck["control"]
        inj = ck.get("injection") or {}
        rows.append({"generation": ck["generation"], "hv": d["hv"], "spacing": d["spacing"], "max_gap": d["max_gap"],
                     "coverage": d["coverage"], "s": c["s"], "p_stag": c["p_stag"],
                     "injection_mode": inj.get("mode") or ""})
    path = reports / "diagnostics.csv"
    write_diagnostics_csv(path, rows)
    out[path.name] = path

    front, last = final_front(run_dir)
    summary: dict = {
        "run_id": manifest["run_id"],
        "status": manifest["status"],
        "generations_completed": last["generation"],
        "final_hv": last["diagnostics"]["hv"],
        "pareto_front": [r.to_dict() for r in front],
        "fdc": trail[0].get("fdc"),
        "crossover_rate": last["crossover_rate"],
        "operating_point": None,
        "dev_accuracy_ci": None,
    }
    if front:
        trace = operating_point_trace(front, config.delta, config.eps_acc, config.cost_factor, config.tail_percentile)
        chosen = next(r for r in front if r.genome_id == trace.selected)
        lo, hi = binomial_ci(chosen.accuracy, config.dev_set_size)
        summary["operating_point"] = {"genome_id": chosen.genome_id, "record": chosen.to_dict(), "trace": trace.to_dict()}
        summary["dev_accuracy_ci"] = {"p_hat": chosen.accuracy, "n": config.dev_set_size, "lo": lo, "hi": hi,
                                      "half_width": Z_95 * math.sqrt(chosen.accuracy * (1 - chosen.accuracy)
                                                                     / config.dev_set_size)}
    path = reports / "summary.json"
    path.write_text(_dumps(summary), encoding="utf-8")
    out[path.name] = path
    return out
