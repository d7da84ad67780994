"""Exception hierarchy.

Every error records the module and operation that raised it so the CLI can
report where a run failed.  ``exit_code`` maps the error class onto the
process exit status (1 for bad input, 2 for solver failure).
"""

from __future__ import annotations


class MinlagError(Exception):
    exit_code = 1

    def __init__(self, message: str, *, module: str = "", operation: str = "", **details):
        super().__init__(message)
        self.message = message
        self.module = module
        self.operation = operation
        self.details = details

    def __str__(self) -> str:
        where = ".".join(p for p in (self.module, self.operation) if p)
        return f"[{where}] {self.message}" if where else self.message


class ParseError(MinlagError):
    """Malformed mesh or configuration file."""


class ValidationError(MinlagError):
    """Input violates a structural invariant (mesh, scaffold, normal field)."""


class ScaffoldError(ValidationError):
    """Scaffold is not a valid symplectic codimension-2 scaffold at some point."""


class SolverError(MinlagError):
    exit_code = 2


class ProjectionError(SolverError):
    """Newton projection onto a scaffold did not converge."""


class AmbiguousKernelError(SolverError):
    """Singular-value spectrum has no clear gap; refine the mesh."""


class SolvabilityError(SolverError):
    """Right-hand side violates a solvability condition."""


class ConvergenceError(SolverError):
    """Iterative solve did not reach tolerance."""

    def __init__(self, message: str, *, last_state=None, **kw):
        super().__init__(message, **kw)
        self.last_state = last_state
