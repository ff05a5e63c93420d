from __future__ import annotations

import sys

import numpy as np
import pytest
from hypothesis import strategies as st

from topocoevo.evaluation import EvalSource, EvaluationRecord, FitnessVector
from topocoevo.genome import DomainTag, Genome, NodeSpec, PromptTemplate, RoleId, Tier, make_genome
from topocoevo.initialization import initial_population
from topocoevo.prompts import default_pool

BODY = "Solve the task step by step and check the result.\nFinal answer: <answer>"


def node(i: int, name: str, body: str = BODY, tier: Tier = Tier.TASK_SPECIFIC, critical: bool = False) -> NodeSpec:
    role = RoleId(name, tier, critical)
    return NodeSpec(i, role, PromptTemplate(body, role, DomainTag.SYNTHETIC))


def chain_genome(roles=("MathSolver", "OptionVerifier"), genome_id: str = "chain") -> Genome:
    """Input -> roles... -> Decision with ids 0..len(roles)+1."""
    nodes = [node(0, "Input", tier=Tier.GENERAL), node(len(roles) + 1, "Decision", tier=Tier.GENERAL, critical=True)]
    nodes += [node(i + 1, r) for i, r in enumerate(roles)]
    ids = list(range(len(roles) + 2))
    return make_genome(nodes, list(zip(ids, ids[1:])), 0, len(roles) + 1, genome_id)


def record(gid: str, acc: float, cost: float, K: int, failed: bool = False, gen: int = 0) -> EvaluationRecord:
    return EvaluationRecord(gid, FitnessVector(float(acc), float(cost), int(K)), gen, not failed, EvalSource.SYNTHETIC, failed=failed)


@pytest.fixture(scope="session")
def pool():
    return default_pool()


@pytest.fixture(scope="session")
def population():
    return initial_population(32, seed=3)


@pytest.fixture
def chain():
    return chain_genome()


# fitness triples on a coarse grid so ties and duplicates show up often
acc_st = st.sampled_from([0.1 * i for i in range(11)])
cost_st = st.sampled_from([100.0 * i for i in range(1, 11)])
k_st = st.integers(2, 12)


@st.composite
def record_lists(draw, min_size=1, max_size=20):
    n = draw(st.integers(min_size, max_size))
    out = []
    for i in range(n):
        failed = draw(st.booleans()) and draw(st.booleans())
        # failed evaluations always carry zero accuracy
        acc = 0.0 if failed else draw(acc_st)
        out.append(record(f"r{i:03d}", acc, draw(cost_st), draw(k_st), failed=failed))
    return out


def unit_points(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.random((n, 3))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
