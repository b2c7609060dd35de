"""
Simulation Errors
=================
Exception types raised across the scheduling package.

Each subclasses a builtin so callers that only know ``ValueError`` or
``RuntimeError`` still catch them.
"""


class ConfigError(ValueError):
    """Invalid or unreadable simulation configuration"""


class LedgerError(ValueError):
    """Rejected insert into an AssignmentLedger"""


class DomainError(ValueError):
    """Competence outside the open interval (1/2, 1)"""


class ContractViolation(ValueError):
    """Marginal gain requested for a classifier the sample cannot take"""


class EstimationError(RuntimeError):
    """Online competence estimation could not proceed"""


class SchedulingError(RuntimeError):
    """Two-phase run aborted"""


class DatasetError(ValueError):
    """Malformed or inconsistent crowdsourcing dataset"""


class DatasetParseError(DatasetError):
    """Unparseable dataset line"""

    def __init__(self, path, line_no: int, line: str, reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.line = line
        super().__init__(f"{self.path}:{line_no}: {reason} (got {line!r})")


class InstanceTooLargeError(ValueError):
    """Brute-force enumeration would exceed its size limit"""


class DeltaUndefinedError(ValueError):
    """No contending pair produces a positive gap"""
