"""Exception hierarchy shared by every pipeline stage."""


class CholeraCastError(Exception):
    """Base class; the CLI maps subclasses of DataError to exit code 2."""


class DataError(CholeraCastError):
    pass


class MalformedRow(DataError):
    def __init__(self, path, line, reason):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


class DuplicateReport(DataError):
    pass


class UnmappedCell(DataError):
    def __init__(self, lat, lon):
        super().__init__(f"rainfall cell ({lat}, {lon}) missing from grid map")
        self.lat = lat
        self.lon = lon


class AsymmetricAdjacency(DataError):
    pass


class DuplicateGovernorate(DataError):
    pass


class NonPositivePopulation(DataError):
    pass


class UnknownGovernorate(DataError):
    pass


class InsufficientReports(DataError):
    pass


class MissingData(DataError):
    pass


class InsufficientFuture(DataError):
    pass


class EmptyPanel(DataError):
    pass


class UnknownStatistic(CholeraCastError, KeyError):
    pass


class TooFewSamples(CholeraCastError, ValueError):
    pass


class DegenerateGroups(CholeraCastError, ValueError):
    pass


class EmptyTrainingSet(CholeraCastError, ValueError):
    pass


class NonFiniteInput(CholeraCastError, ValueError):
    pass


class DimensionMismatch(CholeraCastError, ValueError):
    pass


class EmptyFold(CholeraCastError):
    pass


class EmptyInput(CholeraCastError, ValueError):
    pass


class ObjectiveFailure(CholeraCastError):
    pass


class StageError(CholeraCastError):
    """Wraps any failure inside `run_pipeline` with the name of the stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
