"""Exception hierarchy shared across the toolchain."""


class SceneForgeError(Exception):
    """Base class for all sceneforge errors."""


class PreconditionError(SceneForgeError):
    """An operation was invoked with arguments violating its contract."""


class ManifestError(SceneForgeError):
    """Catalog manifest is malformed. Carries the offending asset id and field."""

    def __init__(self, message: str, asset_id: str | None = None, field: str | None = None):
        super().__init__(message)
        self.asset_id = asset_id
        self.field = field


class EmptyCatalogError(SceneForgeError):
    """Retrieval was attempted against a catalog with no records."""

    empty_catalog = True


class TransportError(SceneForgeError):
    """A provider or service was unreachable or timed out. Safe to retry."""

    retryable = True


class ContractViolationError(SceneForgeError):
    """A remote peer answered, but its response violates the wire contract."""


class DslSyntaxError(SceneForgeError):
    """Source text does not match the grammar."""

    def __init__(self, message: str, line: int, column: int, expected: tuple[str, ...] = ()):
        detail = f"{message} at line {line}, column {column}"
        if expected:
            detail += f" (expected one of: {', '.join(expected)})"
        super().__init__(detail)
        self.line = line
        self.column = column
        self.expected = expected


class ProgramValidationError(SceneForgeError):
    """A parsed program references unknown names, unresolvable queries, or cyclic supports."""

    def __init__(self, message: str, queries: tuple[str, ...] = (), cycle: tuple[str, ...] = ()):
        super().__init__(message)
        self.queries = queries
        self.cycle = cycle


class LayoutError(SceneForgeError):
    """The placement solver exhausted its sampling and backtracking budgets."""

    def __init__(self, message: str, attempts: dict[str, int] | None = None):
        super().__init__(message)
        self.attempts = dict(attempts or {})


class GenerationError(SceneForgeError):
    """Scene or config generation failed. Wraps solver or provider diagnostics."""


class EvaluationError(SceneForgeError):
    """A predicate referenced state that does not exist in the trajectory."""


class CollectionError(SceneForgeError):
    """Automated demonstration collection failed. Carries per-attempt diagnostics."""

    def __init__(self, message: str, attempts: list[dict] | None = None):
        super().__init__(message)
        self.attempts = list(attempts or [])


class ExportError(SceneForgeError):
    """A serialization target could not be produced."""
