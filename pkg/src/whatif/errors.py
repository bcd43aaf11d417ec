"""Exception types and validation findings shared across the package."""

from __future__ import annotations

from dataclasses import dataclass


class WhatifError(Exception):
    """Base class for all errors raised by this package."""


# --- scenario documents ---------------------------------------------------

class ScenarioSyntaxError(WhatifError):
    """The scenario or template document is not well-formed markup."""


class SchemaError(WhatifError):
    """The document parses but violates the scenario schema."""


class MissingParameter(WhatifError):
    """A template parameter without a default was not supplied."""


class UnknownParameter(WhatifError):
    """An input key does not match any declared template parameter."""


class UnknownCluster(WhatifError):
    """An addressing macro names a cluster that is not declared."""


class IndexOutOfRange(WhatifError):
    """An addressing macro indexes past the cluster's instance count."""


class InvalidScenario(WhatifError):
    """A run was requested for a document that fails validation."""

    def __init__(self, report):
        super().__init__("scenario failed validation")
        self.report = report


# --- expressions ----------------------------------------------------------

class ExprSyntaxError(WhatifError):
    """An expression does not parse; carries the character position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


# --- lifecycle ------------------------------------------------------------

class IllegalTransition(WhatifError):
    """A phase transition outside the legal lifecycle chain; engine bug."""


class UnknownService(WhatifError):
    """A chaos target does not resolve to a service node in the tree."""


# --- telemetry ------------------------------------------------------------

class UnknownMetric(WhatifError):
    """A query names a metric that was never ingested nor declared."""


class UnknownCheckpoint(WhatifError):
    """A CHECKPOINT reference names a missing checkpoint or key."""


class DuplicateCheckpoint(WhatifError):
    """A checkpoint name was already used in this run."""


class UnknownRegion(WhatifError):
    """close_region was called for a label with no open region."""


# --- executors ------------------------------------------------------------

class SpawnError(WhatifError):
    """A job could not be started (missing binary, missing script)."""


class UnsupportedFault(WhatifError):
    """The executor does not implement the requested fault kind."""


class TargetNotRunning(WhatifError):
    """Fault injection requires every target to be in phase Running."""


class UnknownHandle(WhatifError):
    """revoke_fault was called with an inactive or unknown handle."""


# --- validation findings --------------------------------------------------

@dataclass(frozen=True)
class Finding:
    """One diagnostic produced by static validation."""

    severity: str  # "error" | "warning"
    location: str  # action name, expression text, or document path
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"
