"""scikit-learn style facade over the evolutionary search."""

from __future__ import annotations

import tempfile
from typing import Callable, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import RunConfig
from .evaluation import SyntheticLandscape
from .genome import Genome, NodeExecutor, execute
from .pipeline import operating_point_trace, run_evolution
from .validation import check_fraction, check_positive_int


class CoEvolutionSearch(BaseEstimator):
    """Search over topology-plus-prompt genomes.

    ``fit`` runs the full evolutionary loop against ``evaluator`` (the
    synthetic landscape when ``None``); the task data lives behind the
    evaluator, so ``X`` and ``y`` are accepted only for API compatibility.
    ``predict`` runs the selected operating-point genome on each task input
    through a caller-supplied node executor.

    Attributes set by ``fit``: ``run_dir_``, ``pareto_records_``,
    ``pareto_genomes_``, ``operating_point_``, ``operating_trace_``,
    ``history_``, ``fdc_report_``, ``checkpoint_digests_``.
    """

    def __init__(
        self,
        population_size: int = 16,
        elite_size: int = 8,
        generations: int = 21,
        seed: int = 0,
        delta: float = 0.05,
        eps_acc: float = 0.015,
        domain: str = "Synthetic",
        evaluator: Callable | None = None,
        landscape: SyntheticLandscape | None = None,
        out_dir: str | None = None,
        n_jobs: int = 1,
    ):
        self.population_size = population_size
        self.elite_size = elite_size
        self.generations = generations
        self.seed = seed
        self.delta = delta
        self.eps_acc = eps_acc
        self.domain = domain
        self.evaluator = evaluator
        self.landscape = landscape
        self.out_dir = out_dir
        self.n_jobs = n_jobs

    def _config(self) -> RunConfig:
        check_positive_int(self.population_size, "population_size")
        check_positive_int(self.elite_size, "elite_size")
        check_positive_int(self.generations, "generations")
        check_positive_int(self.n_jobs, "n_jobs")
        check_fraction(self.delta, "delta")
        check_fraction(self.eps_acc, "eps_acc")
        kw = dict(seed=int(self.seed), population_size=self.population_size, elite_size=self.elite_size,
                  generations=self.generations, delta=float(self.delta), eps_acc=float(self.eps_acc),
                  domain=self.domain, n_jobs=self.n_jobs)
        if self.landscape is not None:
            kw["landscape"] = self.landscape
        return RunConfig(**kw)

    def fit(self, X=None, y=None):
        config = self._config()
        out_dir = self.out_dir or tempfile.mkdtemp(prefix="topocoevo-")
        result = run_evolution(config, self.evaluator, out_dir, force=True)
        self.run_dir_ = result.run_dir
        self.pareto_records_ = result.pareto_records
        self.pareto_genomes_ = {r.genome_id: result.state.genomes[r.genome_id] for r in result.pareto_records}
        self.operating_point_ = result.operating_point
        self.operating_trace_ = (operating_point_trace(result.pareto_records, config.delta, config.eps_acc)
                                 if result.pareto_records else None)
        self.history_ = result.state.history
        self.fdc_report_ = result.state.fdc_report
        self.checkpoint_digests_ = result.digests
        return self

    @property
    def best_genome_(self) -> Genome:
        check_is_fitted(self, "operating_point_")
        return self.pareto_genomes_[self.operating_point_]

    def predict(self, X: Sequence[str], node_executor: NodeExecutor) -> list[str]:
        """Decision-node output of the selected genome for each task input."""
        genome = self.best_genome_
        return [execute(genome, str(x), node_executor)[0] for x in X]

    def score(self, X=None, y=None) -> float:
        """Normalized hypervolume of the final elite front."""
        check_is_fitted(self, "history_")
        return self.history_[-1].hv
