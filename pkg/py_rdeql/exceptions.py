"""
Exceptions raised by the equation-learning library.

Input problems derive from ValueError and processing failures from
RuntimeError, so callers that only know the builtin types keep working.
The pipeline commands map the first group to exit code 2 and the second
to exit code 3.
"""

from typing import Any, Dict, Optional, Sequence, Tuple


class RdeqlError(Exception):
    """Marker base for every library-specific error."""


class OutOfDomainError(RdeqlError, ValueError):
    """Point records fall outside the spatio-temporal domain."""

    def __init__(self, records: Sequence[Tuple[float, float, float]]):
        self.records = [tuple(float(v) for v in r) for r in records]
        shown = ", ".join(f"({r[0]:g}, {r[1]:g}, {r[2]:g})" for r in self.records[:10])
        more = f" and {len(self.records) - 10} more" if len(self.records) > 10 else ""
        super().__init__(f"{len(self.records)} record(s) outside the domain: {shown}{more}")


class DegenerateScalingError(RdeqlError, ValueError):
    """A density field with no positive entry cannot define a density scale."""


class EmptySupportError(RdeqlError, ValueError):
    """The central density intervals of the TV splits do not overlap."""


class ExpressionParseError(RdeqlError, ValueError):
    """Malformed expression text."""

    def __init__(self, message: str, text: str, position: Optional[int] = None):
        self.text = text
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}: {text!r}")


class ExpressionDomainError(RdeqlError, ArithmeticError):
    """An expression was evaluated outside the domain of one of its operators."""


class SolverInstabilityError(RdeqlError, RuntimeError):
    """The explicit time step collapsed because the diffusivity exploded."""

    def __init__(self, max_diffusivity: float, step: int, time: float):
        self.max_diffusivity = max_diffusivity
        self.step = step
        self.time = time
        super().__init__(
            f"time step underflow at step {step} (t={time:.6g} days): "
            f"max D = {max_diffusivity:.6g} mm^2/day"
        )


class NonFiniteLossError(RdeqlError, RuntimeError):
    """Training produced a NaN or infinite loss component."""

    def __init__(self, epoch: int, component: str, value: float):
        self.epoch = epoch
        self.component = component
        self.value = value
        super().__init__(f"non-finite {component} loss ({value}) at epoch {epoch}")


class PopulationCollapseError(RdeqlError, RuntimeError):
    """Every program of the SR population hit an evaluation guard."""


class ConfigurationError(RdeqlError, ValueError):
    """A RunConfig failed validation."""

    def __init__(self, message: str, errors: Optional[Dict[str, Any]] = None):
        self.errors = errors or {}
        super().__init__(f"{message}: {self.errors}" if self.errors else message)


class ArtefactExistsError(RdeqlError, FileExistsError):
    """A stage would overwrite existing outputs without --force."""
