import csv
import json
import math

import pytest

from conftest import record
from golden_fronts import CASES, records_of
from topocoevo.config import EvaluatorConfig, RunConfig
from topocoevo.evaluation import EvalSource, SyntheticEvaluator
from topocoevo.exceptions import EmptyFront, EvaluatorOutage
from topocoevo.genome import validate_genome
from topocoevo.pipeline import (
    FallbackEvaluator,
    emit_report,
    front_hv,
    load_manifest,
    load_trail,
    operating_point_trace,
    pareto_front,
    read_front_csv,
    run_evolution,
    select_operating_point,
    state_from_checkpoint,
)


def small(**kw) -> RunConfig:
    base = dict(seed=5, generations=3)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    return run_evolution(RunConfig(), out_dir=tmp_path_factory.mktemp("full"))


# -- operating point -------------------------------------------------------------


@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_operating_point_golden(case):
    trace = operating_point_trace(records_of(case), case["delta"])
    assert trace.selected == case["expect"]
    assert sorted(trace.removed) == sorted(case["removed"])
    if "q" in case:
        assert trace.tail_quantile == pytest.approx(case["q"], abs=1e-9)
    assert trace.selected in trace.p_tau and trace.selected not in trace.removed


def test_operating_point_defaults_and_errors():
    recs = records_of(CASES[0])
    assert select_operating_point(recs) == select_operating_point(recs, 0.05, 0.015, 0.8, 80)
    with pytest.raises(EmptyFront):
        select_operating_point([])
    with pytest.raises(EmptyFront):
        select_operating_point([record("x", 0.0, 1, 1, failed=True)])


def test_pareto_front_drops_clones_and_infeasible():
    a = record("a", 0.9, 100, 3)
    recs = [a, a, record("b", 0.8, 50, 3), record("c", 0.7, 200, 9), record("d", 0.5, 10, 2)]
    assert [r.genome_id for r in pareto_front(recs, 0.85)] == ["a"]
    assert [r.genome_id for r in pareto_front(recs, float("-inf"))] == ["a", "b", "d"]


# -- run loop ------------------------------------------------------------------------


def test_one_generation_trail(tmp_path):
    res = run_evolution(small(generations=1), out_dir=tmp_path)
    assert [p.name for p in res.checkpoints] == ["gen_0.json", "gen_1.json"]
    manifest = load_manifest(res.run_dir)
    assert manifest["status"] == "complete" and len(manifest["checkpoints"]) == 2
    assert res.run_dir.name == "seed5"


def test_digest_determinism_and_resume(tmp_path):
    cfg = small(generations=4)
    a = run_evolution(cfg, out_dir=tmp_path / "a")
    b = run_evolution(cfg, out_dir=tmp_path / "b")
    assert a.digests == b.digests
    # drop the last two generations and resume
    run_dir = b.run_dir
    manifest = load_manifest(run_dir)
    manifest["checkpoints"] = manifest["checkpoints"][:3]
    manifest["status"] = "aborted"
    (run_dir / "manifest.json").write_text(json.dumps(manifest))
    for g in (3, 4):
        (run_dir / f"gen_{g}.json").unlink()
    c = run_evolution(cfg, out_dir=tmp_path / "b", resume=True)
    assert c.digests == a.digests


def test_refuses_to_overwrite(tmp_path):
    run_evolution(small(generations=1), out_dir=tmp_path)
    with pytest.raises(FileExistsError):
        run_evolution(small(generations=1), out_dir=tmp_path)
    run_evolution(small(generations=1), out_dir=tmp_path, force=True)


def test_checkpoint_round_trip(tmp_path):
    res = run_evolution(small(generations=2), out_dir=tmp_path)
    ck = load_trail(res.run_dir)[-1]
    state = state_from_checkpoint(ck)
    assert [r.genome_id for r in state.elites] == ck["elite_ids"]
    assert state.elites == res.state.elites and state.archive == res.state.archive
    assert all(validate_genome(g) == [] for g in state.genomes.values())


def test_elitism_and_evaluation_budget(full_run):
    trail = load_trail(full_run.run_dir)
    assert len(trail) == 22
    best = [ck["diagnostics"]["best_accuracy"] for ck in trail]
    assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
    cfg = RunConfig()
    for ck in trail[1:]:
        assert len(ck["evaluated"]) <= cfg.population_size
        assert len(ck["elite_ids"]) == cfg.elite_size


def test_new_genomes_have_fresh_ids(full_run):
    seen = set()
    for ck in load_trail(full_run.run_dir):
        ids = [r["genome_id"] for r in ck["evaluated"]]
        assert not seen & set(ids)
        seen |= set(ids)


# -- reports ---------------------------------------------------------------------------


def test_report_files(full_run):
    reports = full_run.run_dir / "reports"
    with (reports / "hv_trend.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 22 and rows[0] == ["generation", "hv", "spacing", "gap", "coverage"]
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 22))
    assert len(list(reports.glob("front_gen*.csv"))) == 22
    with (reports / "diagnostics.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 22


def test_summary_consistent_with_rule(full_run):
    summary = json.loads((full_run.run_dir / "reports" / "summary.json").read_text())
    cfg = RunConfig()
    assert summary["operating_point"]["genome_id"] == full_run.operating_point
    assert summary["operating_point"]["genome_id"] == select_operating_point(full_run.pareto_records, cfg.delta)
    ci = summary["dev_accuracy_ci"]
    p, n = ci["p_hat"], ci["n"]
    assert ci["half_width"] == pytest.approx(1.96 * math.sqrt(p * (1 - p) / n))
    assert summary["fdc"] is not None and -1 <= summary["fdc"]["fdc"] <= 1


def test_front_csv_hv_round_trip(full_run):
    cfg = RunConfig()
    reports = full_run.run_dir / "reports"
    for ck in load_trail(full_run.run_dir):
        rows = read_front_csv(reports / f"front_gen{ck['generation']}.csv")
        assert front_hv(rows, cfg.bounds) == pytest.approx(ck["diagnostics"]["hv"], abs=1e-9)


def test_report_is_idempotent(full_run):
    before = (full_run.run_dir / "reports" / "summary.json").read_bytes()
    emit_report(full_run.run_dir)
    assert (full_run.run_dir / "reports" / "summary.json").read_bytes() == before


# -- outages ---------------------------------------------------------------------------


class FlakyEvaluator:
    def __init__(self, ok_calls):
        self.calls = 0
        self.ok_calls = ok_calls
        self.inner = SyntheticEvaluator()

    def __call__(self, genome, seed):
        self.calls += 1
        if self.calls > self.ok_calls:
            raise EvaluatorOutage("evaluator unreachable")
        return self.inner(genome, seed)


def test_outage_writes_partial_checkpoint(tmp_path):
    cfg = small(generations=3)
    with pytest.raises(EvaluatorOutage):
        run_evolution(cfg, evaluator=FlakyEvaluator(16 + 8 + 3), out_dir=tmp_path)
    run_dir = tmp_path / cfg.effective_run_id
    manifest = load_manifest(run_dir)
    assert manifest["status"] == "aborted"
    assert [c["generation"] for c in manifest["checkpoints"]] == [0, 1]
    partial = json.loads((run_dir / manifest["partial"]).read_text())
    assert partial["generation"] == 2 and partial["pending"]


def test_fallback_evaluator_marks_source(tmp_path):
    def down(genome, seed):
        raise EvaluatorOutage("down")

    ev = FallbackEvaluator(down, SyntheticEvaluator())
    res = run_evolution(small(generations=1), evaluator=ev, out_dir=tmp_path)
    ck = load_trail(res.run_dir)[-1]
    assert {r["eval_source"] for r in ck["evaluated"]} == {EvalSource.FALLBACK.value}


def test_external_config_without_endpoint_is_outage(tmp_path, monkeypatch):
    monkeypatch.delenv("TOPOCOEVO_EVALUATOR_URL", raising=False)
    cfg = small(generations=1, evaluator=EvaluatorConfig(kind="external", endpoint="http://127.0.0.1:9/",
                                                          retries=0, timeout=0.5, backoff=0.01))
    with pytest.raises(EvaluatorOutage):
        run_evolution(cfg, out_dir=tmp_path)
    assert load_manifest(tmp_path / cfg.effective_run_id)["partial"] == "gen_0_partial.json"
