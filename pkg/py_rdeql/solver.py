"""
Forward solver for du/dt = div(D(u) grad u) + G(u) u on the data grid.

Cell-centred finite volumes with uniform spacing: face diffusivity is the
arithmetic mean of the two neighbouring cells, boundary faces carry no flux,
and time is advanced with classical RK4. The step is recomputed every step
from the current maximum diffusivity:

    dt = min(safety * min(dx1, dx2)^2 / (4 * max D), max_dt, time to next output)

Everything here is in physical units (cells per bin, mm, days); network
rate functions are converted through their Scaling when evaluated.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Union

import numpy as np

from . import config
from .exceptions import SolverInstabilityError
from .grid import DensityField, Domain, Scaling
from .io import write_csv
from .mlp import NetworkParams, forward
from .sr.expressions import SymbolicExpr, execute, parse_expression

logger = logging.getLogger(__name__)

DIFFUSION_UNITS = "mm^2/day"
GROWTH_UNITS = "1/day"


class _ConstantRate:
    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return np.full(np.shape(u), self.value)


class _SymbolicRate:
    def __init__(self, expr: SymbolicExpr, density_scale: float):
        self.program = expr.program
        self.density_scale = float(density_scale)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        U = np.maximum(np.asarray(u, dtype=float), 0.0) / self.density_scale
        return np.broadcast_to(execute(self.program, U), np.shape(u)).astype(float)


class _NetworkRate:
    def __init__(self, params: NetworkParams, scaling: Scaling):
        self.params = params
        self.scaling = scaling

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        U = self.scaling.scale_density(u).ravel()
        scaled = np.asarray(forward(self.params, U)).reshape(u.shape)
        if self.params.role == "D":
            return self.scaling.unscale_diffusivity(scaled)
        return self.scaling.unscale_growth(scaled)


@dataclass(frozen=True)
class RateFn:
    """
    A density-dependent rate in physical units.

    Attributes:
        kind: 'mlp', 'symbolic' or 'constant'
        evaluator: picklable callable mapping densities (cells per bin) to rates
        units: DIFFUSION_UNITS or GROWTH_UNITS
        label: text used in logs and manifests
    """

    kind: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    units: str
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("mlp", "symbolic", "constant"):
            raise ValueError(f"unknown rate kind {self.kind!r}")
        if self.units not in (DIFFUSION_UNITS, GROWTH_UNITS):
            raise ValueError(f"unknown rate units {self.units!r}")

    def __call__(self, u) -> np.ndarray:
        return self.evaluator(np.asarray(u, dtype=float))

    @classmethod
    def constant(cls, value: float, units: str) -> "RateFn":
        return cls("constant", _ConstantRate(value), units, repr(float(value)))

    @classmethod
    def symbolic(cls, expr: Union[str, SymbolicExpr], density_scale: float, units: str) -> "RateFn":
        """Rate given as an expression in U = u / density_scale."""
        if isinstance(expr, str):
            expr = parse_expression(expr)
        if not density_scale > 0:
            raise ValueError(f"density_scale must be positive, got {density_scale}")
        return cls("symbolic", _SymbolicRate(expr, density_scale), units, str(expr))

    @classmethod
    def network(cls, params: NetworkParams, scaling: Scaling) -> "RateFn":
        if params.role not in ("D", "G"):
            raise ValueError(f"rate networks have role D or G, got {params.role!r}")
        units = DIFFUSION_UNITS if params.role == "D" else GROWTH_UNITS
        return cls("mlp", _NetworkRate(params, scaling), units, f"NN_{params.role}")


@dataclass(frozen=True, eq=False)
class SolveSpec:
    """
    Initial field, output times and stepping settings of one forward solve.

    ``times[0]`` is the time of the initial field; the boundary is always
    no-flux.
    """

    initial: np.ndarray
    times: np.ndarray
    domain: Domain
    dx1: float
    dx2: float
    safety: float = config.solver_safety
    max_dt: float = config.solver_max_dt

    def __post_init__(self):
        initial = np.array(self.initial, dtype=float)
        times = np.array(self.times, dtype=float).ravel()
        if initial.ndim != 2:
            raise ValueError(f"initial field must be 2-D, got shape {initial.shape}")
        if np.any(initial < 0) or not np.all(np.isfinite(initial)):
            raise ValueError("initial field must be finite and non-negative")
        if times.size < 1 or (times.size > 1 and not np.all(np.diff(times) > 0)):
            raise ValueError("output times must be non-empty and strictly increasing")
        if not (self.dx1 > 0 and self.dx2 > 0):
            raise ValueError("grid spacings must be positive")
        if not (0 < self.safety <= 1) or not self.max_dt > 0:
            raise ValueError("safety must lie in (0, 1] and max_dt must be positive")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "times", times)

    @classmethod
    def like(cls, template: DensityField, initial, times=None, **kwargs) -> "SolveSpec":
        """Spec on the grid of an existing field, defaulting to its frame times."""
        times = template.times if times is None else times
        return cls(initial, times, template.domain, template.bin_size_x1, template.bin_size_x2, **kwargs)


@dataclass
class StepRecord:
    step: int
    time: float
    dt: float
    max_diffusivity: float
    clamped_mass: float


class ReactionDiffusionSolver:
    """
    Explicit RK4 finite-volume integrator.

    Keeps per-step diagnostics (``history``) and the total mass removed by
    clamping negative undershoots (``clamped_mass``).
    """

    def __init__(self, diffusion: RateFn, growth: RateFn, spec: SolveSpec):
        self.diffusion = diffusion
        self.growth = growth
        self.spec = spec
        self.history: List[StepRecord] = []
        self.clamped_mass = 0.0
        self._time = float(spec.times[0])

    def _diffusivity(self, u: np.ndarray) -> np.ndarray:
        d = self.diffusion(u)
        if not np.all(np.isfinite(d)):
            raise SolverInstabilityError(float("inf"), len(self.history), self._time)
        if np.any(d < 0):
            raise ValueError(f"diffusivity {self.diffusion.label} is negative "
                             f"(min {d.min():.3g} {DIFFUSION_UNITS})")
        return d

    def rhs(self, u: np.ndarray) -> np.ndarray:
        dx1, dx2 = self.spec.dx1, self.spec.dx2
        d = self._diffusivity(u)
        out = self.growth(u) * u

        flux = 0.5 * (d[1:, :] + d[:-1, :]) * (u[1:, :] - u[:-1, :]) / dx1
        out[:-1, :] += flux / dx1
        out[1:, :] -= flux / dx1

        flux = 0.5 * (d[:, 1:] + d[:, :-1]) * (u[:, 1:] - u[:, :-1]) / dx2
        out[:, :-1] += flux / dx2
        out[:, 1:] -= flux / dx2
        return out

    def _rk4(self, u: np.ndarray, dt: float) -> np.ndarray:
        k1 = self.rhs(u)
        k2 = self.rhs(u + 0.5 * dt * k1)
        k3 = self.rhs(u + 0.5 * dt * k2)
        k4 = self.rhs(u + dt * k3)
        return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def run(self) -> DensityField:
        spec = self.spec
        h2 = min(spec.dx1, spec.dx2) ** 2
        u = spec.initial.copy()
        self._time = float(spec.times[0])
        frames = [u.copy()]
        step = 0

        for t_next in spec.times[1:]:
            while t_next - self._time > 1e-12 * max(1.0, abs(t_next)):
                d_max = float(self._diffusivity(u).max())
                dt_diff = spec.safety * h2 / (4.0 * d_max) if d_max > 0 else np.inf
                if dt_diff < config.solver_min_dt:
                    logger.error(f"solver step underflow: dt={dt_diff:.3e} with max D={d_max:.3e}")
                    raise SolverInstabilityError(d_max, step, self._time)
                dt = min(dt_diff, spec.max_dt, t_next - self._time)

                u = self._rk4(u, dt)
                if not np.all(np.isfinite(u)):
                    raise SolverInstabilityError(d_max, step, self._time)
                negative = u < 0
                clamped = float(-u[negative].sum()) if negative.any() else 0.0
                if clamped:
                    u[negative] = 0.0
                    self.clamped_mass += clamped

                step += 1
                self._time += dt
                self.history.append(StepRecord(step, self._time, dt, d_max, clamped))
            self._time = float(t_next)
            frames.append(u.copy())

        if self.clamped_mass > 0:
            total = float(frames[-1].sum())
            logger.info(f"clamped {self.clamped_mass:.3e} cells of negative undershoot "
                        f"({self.clamped_mass / max(total, 1e-300):.2e} of final mass)")
        logger.debug(f"solved {len(spec.times)} frames in {step} RK4 steps")
        return DensityField(np.stack(frames, axis=2), spec.dx1, spec.dx2, spec.domain, spec.times)

    def write_diagnostics(self, path) -> None:
        write_csv(path, ("step", "t", "dt", "max_D", "clamped_mass"),
                  ((r.step, r.time, r.dt, r.max_diffusivity, r.clamped_mass) for r in self.history))


def solve_rd(D: RateFn, G: RateFn, spec: SolveSpec) -> DensityField:
    """
    Forward-solve the reaction-diffusion equation with no-flux boundaries.

    Returns:
        DensityField with one frame per output time, the first being the
        initial field

    Raises:
        SolverInstabilityError: when the stable step drops below solver_min_dt
        ValueError: when D turns negative
    """
    return ReactionDiffusionSolver(D, G, spec).run()


def ic_from_density_net(theta_u: NetworkParams, scaling: Scaling, grid: DensityField) -> np.ndarray:
    """NN_u at every cell centre at scaled t = 0, in cells per bin; shape (n_x1, n_x2)."""
    c1, c2 = grid.cell_centers()
    X1, X2 = np.meshgrid(scaling.scale_x1(c1), scaling.scale_x2(c2), indexing="ij")
    inputs = np.column_stack([X1.ravel(), X2.ravel(), np.zeros(X1.size)])
    U = np.asarray(forward(theta_u, inputs)).reshape(X1.shape)
    return scaling.unscale_density(U)
