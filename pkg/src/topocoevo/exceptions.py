"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class DegenerateInput(ValueError):
    """Input carries no rank information (e.g. a constant vector)."""


class DegenerateInputWarning(UserWarning):
    pass


class MissingUpstreamMessage(KeyError):
    def __init__(self, node_id, missing):
        self.node_id = node_id
        self.missing = tuple(missing)
        super().__init__(f"node {node_id} lacks upstream messages from {self.missing}")


class ExecutorFailure(RuntimeError):
    def __init__(self, node_id, cause):
        self.node_id = node_id
        self.cause = cause
        super().__init__(f"executor failed at node {node_id}: {cause!r}")


class EvaluatorFailure(RuntimeError):
    """A single genome could not be evaluated; the genome is marked infeasible."""


class EvaluatorOutage(RuntimeError):
    """The evaluator backend is unreachable after the retry budget is spent."""


class UnknownRole(KeyError):
    pass


class NoViableAnchor(ValueError):
    pass


class InsufficientPool(ValueError):
    pass


class EmptyFront(ValueError):
    pass


class ConfigError(ValueError):
    pass


class InvalidGenome(ValueError):
    def __init__(self, codes):
        self.codes = tuple(codes)
        super().__init__("invalid genome: " + ", ".join(self.codes))
