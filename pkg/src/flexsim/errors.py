"""Exception hierarchy shared by every flexsim module."""


class FlexSimError(Exception):
    """Base class for simulator errors."""


class FormatError(FlexSimError):
    """A compressed stream is inconsistent with its header."""

    def __init__(self, stream, message):
        self.stream = stream
        super().__init__(f"{stream}: {message}")


class PlanError(FlexSimError):
    """A mapping plan or partial stream violates a structural precondition."""


class SimulationFault(FlexSimError):
    """The modeled hardware hit a condition it cannot represent (e.g. overflow)."""


class ConfigError(FlexSimError):
    """A configuration file or workload spec is malformed.

    ``key`` names the offending entry so the CLI can report it.
    """

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
