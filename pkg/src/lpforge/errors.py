"""Exception types shared across the package."""


class LpforgeError(Exception):
    """Base class for all package errors."""


class ValidationError(LpforgeError):
    """Raised when an operation is handed a model that fails validation."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"model failed validation: {report}")


class IrParseError(LpforgeError):
    """Malformed IR document. Carries the JSON path of the offending node."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class MissingSpace(LpforgeError):
    """An index space is required (normalization or row enumeration) but absent."""

    def __init__(self, placeholder):
        self.placeholder = placeholder
        super().__init__(f"no index space known for placeholder {placeholder!r}")


class MissingParameter(LpforgeError):
    def __init__(self, name, key):
        self.name = name
        self.key = key
        super().__init__(f"parameter array {name!r} has no entry for {key!r}")


class MissingRhs(LpforgeError):
    def __init__(self, block, gstar):
        self.block = block
        self.gstar = gstar
        super().__init__(f"constraint block {block} realizes index {gstar!r} "
                         f"but the rhs array has no entry for it")


class LpParseError(LpforgeError):
    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class BoundViolation(LpforgeError):
    def __init__(self, col, value, lower, upper):
        self.col = col
        super().__init__(
            f"assignment {value!r} for column {col} outside bounds [{lower}, {upper}]")


class GenerationError(LpforgeError):
    """Generator parameters admit no valid instance."""


class MissingAggregationPolicy(LpforgeError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"no aggregation policy declared for parameter array {name!r}")


class DecompositionInfeasible(LpforgeError):
    """A sub-problem of a decomposition run came back infeasible."""

    def __init__(self, horizon, status="Infeasible"):
        self.horizon = horizon
        self.status = status
        super().__init__(f"horizon {horizon} sub-problem ended with status {status}")


class MasterInfeasible(LpforgeError):
    def __init__(self, status="Infeasible"):
        self.status = status
        super().__init__(f"aggregated master problem ended with status {status}")


class WorkerFailure(LpforgeError):
    """A parallel instantiation worker raised; wraps the cause with its part id."""

    def __init__(self, part, cause):
        self.part = part
        self.cause = cause
        super().__init__(f"worker for part {part} failed: {cause!r}")
