"""Input checks shared by the estimator facade and the CLI."""

from __future__ import annotations

import json
from numbers import Integral, Real
from pathlib import Path
from typing import Iterable, Mapping

from .evaluation import EvaluationRecord
from .exceptions import DomainError, InvalidGenome
from .genome import DEFAULT_MARKERS, Genome, validate_genome


def check_genome(obj, check_templates: bool = True, markers=DEFAULT_MARKERS) -> Genome:
    """Coerce a Genome, its dict form or a JSON string, then validate it.

    Raises ``InvalidGenome`` carrying the violated codes.
    """
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise InvalidGenome([f"MalformedJson: {exc.msg}"]) from None
    if isinstance(obj, Mapping):
        try:
            obj = Genome.from_dict(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidGenome([f"MalformedGenome: {exc}"]) from None
    if not isinstance(obj, Genome):
        raise TypeError(f"expected a Genome, got {type(obj).__name__}")
    codes = validate_genome(obj, markers, check_templates)
    if codes:
        raise InvalidGenome(codes)
    return obj


def load_genome(path: str | Path, check_templates: bool = True) -> Genome:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidGenome([f"Unreadable: {exc}"]) from None
    return check_genome(text, check_templates)


def check_records(records: Iterable) -> list[EvaluationRecord]:
    out = [r if isinstance(r, EvaluationRecord) else EvaluationRecord.from_dict(r) for r in records]
    ids = [r.genome_id for r in out]
    if len(set(ids)) != len(ids):
        raise DomainError("duplicate genome ids among records")
    return out


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral) or value < 1:
        raise DomainError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_fraction(value, name: str, closed: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    ok = 0 <= value <= 1 if closed else 0 < value < 1
    if not ok:
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return float(value)
