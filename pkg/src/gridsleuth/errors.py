"""Exception hierarchy.

``DataError`` subclasses signal bad or inconsistent inputs (CLI exit code 2);
``AlgorithmError`` subclasses signal that a learning step could not reach a
consistent answer (CLI exit code 3).
"""


class GridSleuthError(Exception):
    pass


class DataError(GridSleuthError):
    pass


class AlgorithmError(GridSleuthError):
    pass


class NotATree(DataError):
    pass


class RootDegreeViolation(DataError):
    pass


class SingularMatrix(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class InsufficientSamples(DataError):
    pass


class UnobservedNode(DataError):
    pass


class InvalidCovariance(DataError):
    pass


class InfeasibleHiddenPolicy(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class SchemaError(DataError):
    def __init__(self, field, message="missing or invalid field"):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnsupportedConstruct(DataError):
    pass


class DisconnectedCandidates(AlgorithmError):
    pass


class ZeroPredictedValue(AlgorithmError):
    pass


class AmbiguousParent(AlgorithmError):
    def __init__(self, grandparent, group, parents):
        super().__init__(
            f"several hidden parents {sorted(parents)} fit group {sorted(group)} "
            f"under node {grandparent}"
        )
        self.grandparent = grandparent
        self.group = frozenset(group)
        self.parents = tuple(sorted(parents))


class IllConditionedSystem(AlgorithmError):
    pass


class NegativeVarianceSolution(AlgorithmError):
    def __init__(self, node, solution):
        super().__init__(f"node {node}: solved statistics {tuple(solution)} are not a valid covariance")
        self.node = node
        self.solution = tuple(float(s) for s in solution)


class UnresolvedNodes(AlgorithmError):
    def __init__(self, model, hidden_left):
        super().__init__(
            f"learning ended with {len(hidden_left)} unplaced hidden node(s) "
            f"and {len(model.unresolved)} unattached group(s)"
        )
        self.model = model
        self.hidden_left = tuple(sorted(hidden_left))


class InconsistentSigns(AlgorithmError):
    pass


class DegenerateStatistics(DataError):
    pass


class MissingPhaseData(DataError):
    pass
