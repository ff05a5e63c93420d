"""HTTP adapter for an external evaluation service.

Request body::

    {"genome": <genome JSON>, "task_batch_id": "...", "seed": 0}

Expected response::

    {"accuracy": 0.83, "token_cost": 1520, "per_node_tokens": {"0": 120, ...}}
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import EvalSource
from .exceptions import EvaluatorFailure, EvaluatorOutage
from .genome import Genome

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "TOPOCOEVO_EVALUATOR_URL"


@dataclass
class ExternalEvaluator:
    endpoint: str | None = None
    task_batch_id: str = "dev"
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.5
    log_dir: str | Path | None = None
    source: EvalSource = EvalSource.EXTERNAL
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        self.endpoint = self.endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise EvaluatorOutage(f"no evaluator endpoint configured (set {ENDPOINT_ENV})")

    def _log(self, entry: dict) -> None:
        if self.log_dir is None:
            return
        path = Path(self.log_dir) / "external_eval.jsonl"
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def __call__(self, genome: Genome, seed: int) -> tuple[float, float]:
        payload = {"genome": genome.to_dict(), "task_batch_id": self.task_batch_id, "seed": int(seed)}
        data = json.dumps(payload, sort_keys=True).encode()
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            request = urllib.request.Request(self.endpoint, data=data, headers={"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                    body = resp.read().decode()
            except urllib.error.HTTPError as exc:
                self._log({"genome_id": genome.genome_id, "attempt": attempt, "status": exc.code})
                if exc.code < 500:
                    raise EvaluatorFailure(f"evaluator rejected {genome.genome_id}: HTTP {exc.code}") from exc
                last_error = exc
                continue
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                self._log({"genome_id": genome.genome_id, "attempt": attempt, "error": str(exc)})
                last_error = exc
                continue
            self._log({"genome_id": genome.genome_id, "attempt": attempt, "request": payload, "response": body})
            try:
                reply = json.loads(body)
                return float(reply["accuracy"]), float(reply["token_cost"])
            except (ValueError, KeyError, TypeError) as exc:
                raise EvaluatorFailure(f"malformed evaluator response for {genome.genome_id}") from exc
        logger.error("evaluator at %s unreachable after %d attempts", self.endpoint, self.retries + 1)
        raise EvaluatorOutage(f"evaluator unreachable: {last_error}")
