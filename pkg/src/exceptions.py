class WorkbenchError(Exception):
    """Base class for all workbench errors."""


class ConfigError(WorkbenchError, ValueError):
    """Malformed or inconsistent configuration."""


class UnknownKeyError(ConfigError):
    """Configuration file contains a key that is not documented."""


class ParameterWindowError(ConfigError):
    """A hard construction parameter window is violated."""

    def __init__(self, window: str, message: str):
        self.window = window
        super().__init__(f"[{window}] {message}")


class OutOfFamilyError(WorkbenchError, ValueError):
    """Angle or height outside the catenoid family range."""


class DomainError(WorkbenchError, ValueError):
    """Argument outside the domain of an evaluator."""


class ConvergenceError(WorkbenchError, RuntimeError):
    """A root finder, projection or eigen solver failed to converge."""


class NonConvergenceError(ConvergenceError):
    """The nonlinear fixed-point loop did not converge."""

    def __init__(self, message: str, history=None):
        self.history = history or []
        super().__init__(message)


class TopologyError(WorkbenchError, RuntimeError):
    """Mesh topology or symmetry validation failed."""


class SelfIntersectionError(TopologyError):
    """Triangle pairs of the mesh intersect."""


class SolverError(WorkbenchError, RuntimeError):
    """Linear solve failed or its input was outside the symmetric class."""


class AdmissibilityError(WorkbenchError, ValueError):
    """Perturbation too large for a twisted graph."""


class MeshQualityError(TopologyError):
    """Triangle angles of the built mesh fall below the quality floor."""
