import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import chain_genome, node
from topocoevo.evaluation import (
    EvalSource,
    EvaluationRecord,
    PreferenceParams,
    SyntheticEvaluator,
    SyntheticLandscape,
    binomial_ci,
    evaluate_population,
    fitness_vector,
    preference_score,
    synthetic_accuracy,
)
from topocoevo.exceptions import DomainError, EvaluatorFailure, EvaluatorOutage
from topocoevo.external import ExternalEvaluator
from topocoevo.genome import Tier, make_genome

# -- fitness and preference --------------------------------------------------


def test_fitness_vector_examples():
    assert fitness_vector(0.8, 1000, 5) == (0.8, -1000, -math.log(6))
    assert fitness_vector(0.8, 1000, 5)[2] == pytest.approx(-1.79176, abs=1e-5)
    assert fitness_vector(1.0, 0, 0) == (1.0, 0, 0)
    assert fitness_vector(0.5, 250, 14)[2] == pytest.approx(-2.70805020110221)


@pytest.mark.parametrize("args", [(-0.1, 1, 1), (1.1, 1, 1), (0.5, -1, 1), (0.5, 1, -1)])
def test_fitness_vector_domain(args):
    with pytest.raises(DomainError):
        fitness_vector(*args)


def test_preference_examples():
    assert preference_score(1.0, 100, 0, PreferenceParams(T0=100)) == pytest.approx(1.0)
    p = PreferenceParams(k=1, gamma=1, beta_pref=1, T0=100, K0=10)
    assert preference_score(0.8, 200, 10, p) == pytest.approx(0.2)
    p = PreferenceParams(k=2, gamma=1, beta_pref=1, T0=100, K0=6)
    assert preference_score(0.9, 50, 3, p) == pytest.approx(1.08)
    with pytest.raises(DomainError):
        preference_score(0.0, 100, 3, p)


def test_preference_cost_floor():
    p = PreferenceParams(T0=10)
    assert preference_score(0.5, 0.0, 2, p) == preference_score(0.5, 1.0, 2, p)


@given(st.floats(0.01, 0.98), st.floats(1, 1e4), st.integers(0, 50),
       st.floats(0.5, 3), st.floats(0.5, 3), st.floats(0.5, 3))
def test_preference_monotone(a, c, K, k, g, b):
    p = PreferenceParams(k=k, gamma=g, beta_pref=b, T0=500, K0=10)
    s = preference_score(a, c, K, p)
    assert preference_score(a + 0.01, c, K, p) > s
    assert preference_score(a, c * 1.5 + 1, K, p) < s
    assert preference_score(a, c, K + 1, p) < s


def test_fitness_monotone_components():
    assert fitness_vector(0.5, 10, 3)[2] > fitness_vector(0.5, 10, 4)[2]
    assert fitness_vector(0.5, 10, 3)[1] > fitness_vector(0.5, 11, 3)[1]


# -- binomial interval ----------------------------------------------------------


def test_binomial_ci_reference_inputs():
    lo, hi = binomial_ci(0.8996, 13961)
    assert (hi - lo) / 2 == pytest.approx(0.00499, abs=1e-5)


def test_binomial_ci_edges():
    assert binomial_ci(1.0, 10) == (1.0, 1.0)
    lo, hi = binomial_ci(0.5, 10**12)
    assert hi - lo < 1e-5
    w1 = binomial_ci(0.3, 100)
    w4 = binomial_ci(0.3, 400)
    assert (w1[1] - w1[0]) / (w4[1] - w4[0]) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(DomainError):
        binomial_ci(0.5, 0)
    with pytest.raises(DomainError):
        binomial_ci(1.5, 10)


# -- synthetic landscape --------------------------------------------------------


def saturating_genome(L: SyntheticLandscape):
    """Every target role up to its count, wired so every motif appears."""
    nodes = [node(0, "Input", tier=Tier.GENERAL), node(9, "Decision", tier=Tier.GENERAL, critical=True),
             node(1, "QuestionDecomposer"), node(2, "MathSolver"), node(3, "MathSolver"), node(4, "OptionVerifier"),
             node(5, "KnowledgeChecker"), node(6, "FactChecker")]
    edges = [(0, 1), (1, 2), (1, 3), (2, 4), (3, 4), (4, 9), (0, 5), (5, 9), (0, 6), (6, 9)]
    return make_genome(nodes, edges, 0, 9, "sat")


def test_landscape_saturation():
    L = SyntheticLandscape(noise_amplitude=0.0)
    acc, _ = synthetic_accuracy(saturating_genome(L), L)
    assert acc == pytest.approx(min(1.0, L.base + L.full_utility()))


def test_landscape_baseline_and_cost():
    L = SyntheticLandscape(noise_amplitude=0.0, role_costs={})
    g = chain_genome(("Critic", "Planner"))
    acc, cost = synthetic_accuracy(g, L)
    assert acc == L.base
    assert cost == 4 * 100 + 3 * 20 == 460


def test_landscape_is_pure(population):
    L = SyntheticLandscape()
    first = [synthetic_accuracy(g, L) for g in population[:4]]
    for _ in range(250):
        assert [synthetic_accuracy(g, L) for g in population[:4]] == first


def test_landscape_round_trip():
    L = SyntheticLandscape(seed=3)
    assert SyntheticLandscape.from_dict(json.loads(json.dumps(L.to_dict()))) == L


# -- population evaluation ------------------------------------------------------


def test_evaluate_population_basic(population):
    assert evaluate_population([], SyntheticEvaluator()) == []
    recs = evaluate_population(population[:16], SyntheticEvaluator())
    assert len(recs) == 16 and all(0 <= r.accuracy <= 1 for r in recs)
    assert [r.genome_id for r in recs] == [g.genome_id for g in population[:16]]
    assert evaluate_population(population[:16], SyntheticEvaluator(), n_jobs=8) == recs


def test_failures_become_infeasible(population):
    def flaky(g, seed):
        if g.genome_id.endswith("3"):
            raise EvaluatorFailure("bad output")
        return 0.5, 100.0

    recs = evaluate_population(population[:8], flaky)
    bad = [r for r in recs if r.failed]
    assert [r.genome_id for r in bad] == ["g000_03"]
    assert bad[0].accuracy == 0.0 and not bad[0].is_feasible(float("-inf"))


def test_outage_propagates(population):
    def down(g, seed):
        raise EvaluatorOutage("gone")

    with pytest.raises(EvaluatorOutage):
        evaluate_population(population[:2], down)


def test_record_round_trip(population):
    for r in evaluate_population(population[:4], SyntheticEvaluator()):
        assert EvaluationRecord.from_dict(json.loads(json.dumps(r.to_dict()))) == r


# -- external adapter against a mock server ------------------------------------


class _Handler(BaseHTTPRequestHandler):
    plan: list = []
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).seen.append(body)
        status = type(self).plan.pop(0) if type(self).plan else 200
        if status != 200:
            self.send_response(status)
            self.end_headers()
            return
        if status == 200 and body.get("task_batch_id") == "garbage":
            payload = b"not json"
        else:
            nodes = len(body["genome"]["nodes"])
            payload = json.dumps({"accuracy": 0.75, "token_cost": 10.0 * nodes,
                                  "per_node_tokens": {str(n["id"]): 10 for n in body["genome"]["nodes"]}}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.plan, _Handler.seen = [], []
    httpd = HTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=httpd.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{httpd.server_port}/eval", _Handler
    httpd.shutdown()


def test_external_success_and_log(server, tmp_path, chain):
    url, handler = server
    ev = ExternalEvaluator(url, "batch-1", timeout=5, backoff=0.01, log_dir=tmp_path)
    acc, cost = ev(chain, 7)
    assert (acc, cost) == (0.75, 40.0)
    assert handler.seen[0]["seed"] == 7 and handler.seen[0]["task_batch_id"] == "batch-1"
    assert handler.seen[0]["genome"] == chain.to_dict()
    lines = (tmp_path / "external_eval.jsonl").read_text().splitlines()
    assert json.loads(lines[-1])["genome_id"] == chain.genome_id
    rec = evaluate_population([chain], ev)[0]
    assert rec.eval_source is EvalSource.EXTERNAL


def test_external_retries_server_errors(server, chain):
    url, handler = server
    handler.plan = [503, 500]
    assert ExternalEvaluator(url, timeout=5, backoff=0.01)(chain, 0)[0] == 0.75
    assert len(handler.seen) == 3


def test_external_client_error_is_failure(server, chain):
    url, handler = server
    handler.plan = [400]
    with pytest.raises(EvaluatorFailure):
        ExternalEvaluator(url, timeout=5, backoff=0.01)(chain, 0)
    with pytest.raises(EvaluatorFailure):
        ExternalEvaluator(url, "garbage", timeout=5, backoff=0.01)(chain, 0)


def test_external_outage(server, chain):
    url, handler = server
    handler.plan = [503] * 10
    with pytest.raises(EvaluatorOutage):
        ExternalEvaluator(url, retries=2, timeout=5, backoff=0.01)(chain, 0)
    with pytest.raises(EvaluatorOutage):
        ExternalEvaluator("http://127.0.0.1:9/", retries=1, timeout=1, backoff=0.01)(chain, 0)


def test_external_endpoint_from_env(monkeypatch, server, chain):
    url, _ = server
    monkeypatch.setenv("TOPOCOEVO_EVALUATOR_URL", url)
    assert ExternalEvaluator(backoff=0.01)(chain, 0)[0] == 0.75
