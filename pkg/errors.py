from typing import Optional


class OlsrTuneError(Exception):
    """Base error; `exit_code` is what the CLI returns when it escapes a command."""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


# --------- Input errors (exit 2) ---------
class InputError(OlsrTuneError):
    exit_code = 2


class TraceParseError(InputError):
    def __init__(self, detail: str, line: int):
        super().__init__(f"line {line}: {detail}")
        self.line = line


# --------- Domain errors (exit 3) ---------
class DomainError(OlsrTuneError):
    exit_code = 3


class ConfigurationError(DomainError):
    pass


class ScenarioValidationError(DomainError):
    pass


class GenomeError(DomainError, ValueError):
    pass


class EvolutionError(DomainError, ValueError):
    pass


class AnalysisError(DomainError, ValueError):
    pass


class UnknownNodeError(LookupError):
    """Raised for node ids that a trace does not contain."""

    def __init__(self, node: int):
        super().__init__(f"unknown node id {node}")
        self.node = node
