from typing import List, Optional


class LinkAdaptationError(Exception):
    """Base error of the toolkit"""


class DomainError(LinkAdaptationError, ValueError):
    """Value outside its domain (MCS index, action, dimensions)"""


class ConfigError(LinkAdaptationError):
    """Invalid experiment or scheduler configuration"""


class EpisodeFinishedError(LinkAdaptationError):
    """Step requested on an exhausted episode"""


class TrainingDivergedError(LinkAdaptationError):
    """Loss became non-finite during training"""


class TraceParseError(LinkAdaptationError):
    """Malformed SINR trace file"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DatasetError(LinkAdaptationError):
    """Malformed logged dataset"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DatasetSchemaError(DatasetError):
    """Logged dataset is missing required columns"""

    def __init__(self, missing_columns: List[str]):
        self.missing_columns = list(missing_columns)
        super().__init__(f"missing columns: {', '.join(self.missing_columns)}")
