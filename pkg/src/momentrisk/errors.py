"""Exception hierarchy. Each family maps to a CLI exit code."""

from __future__ import annotations


class MomentRiskError(Exception):
    exit_code = 1


class ConfigError(MomentRiskError):
    exit_code = 2


class DependencyError(ConfigError):
    """A pipeline stage was requested before the stage that produces its inputs."""

    def __init__(self, stage: str, requires: str, missing: str):
        self.stage = stage
        self.requires = requires
        self.missing = missing
        super().__init__(
            f"stage '{stage}' needs {missing}; run stage '{requires}' first"
        )


class DataError(MomentRiskError):
    exit_code = 3


class NoData(DataError):
    pass


class BadRecord(DataError):
    def __init__(self, message: str, timestamp=None):
        self.timestamp = timestamp
        super().__init__(message)


class MissingRate(DataError):
    pass


class InsufficientData(DataError):
    pass


class SortError(DataError):
    pass


class NumericalError(MomentRiskError):
    exit_code = 4


class RankError(NumericalError):
    def __init__(self, message: str, index=None):
        self.index = index
        super().__init__(message)


class CollinearityError(NumericalError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"collinear columns: {', '.join(map(str, self.columns))}")
