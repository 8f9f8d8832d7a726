"""Exception hierarchy shared by all modules.

Every error carries the name of the module that raised it so the CLI can
surface it with a tag.
"""
from __future__ import annotations


class LabError(Exception):
    module = "core"

    def __str__(self) -> str:  # pragma: no cover - trivial
        return f"[{self.module}] {super().__str__()}"


class SystemsError(LabError):
    module = "systems"


class DomainViolation(SystemsError):
    """State left the admissible box of the vector field."""


class AssumptionError(SystemsError):
    """A structural assumption failed.

    ``which`` is the code of the failed check: A1 positive diffusion, A2 stable
    equilibria, A3 Perron-Frobenius directions, A4 cooperative coupling.
    """

    def __init__(self, which: str, message: str, point=None):
        super().__init__(f"{which}: {message}")
        self.which = which
        self.point = point


class FrontError(LabError):
    module = "front1d"


class GeometryError(LabError):
    module = "geometry"


class SolverError(LabError):
    module = "grid-solver"


class EntireError(LabError):
    module = "entire-limits"


class DiagnosticsError(LabError):
    module = "diagnostics"


class VerifierError(LabError):
    module = "verifier"


class LotkaError(LabError):
    module = "lotka-app"


class ConfigError(LabError):
    module = "scenario-cli"
