"""
Synthetic ground-truth datasets.

A TrueModel (diffusion and growth given as expressions in U = u / u_ref plus
an initial field) is forward-solved on the data grid, then corrupted with the
observation model

    u_data = max(0, u + omega * u**gamma * eps),    eps ~ N(0, 1)

and optionally turned back into discrete point records.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import config
from .grid import DensityField, Domain, PointCloud, axis_bins, axis_edges
from .solver import DIFFUSION_UNITS, GROWTH_UNITS, RateFn, SolveSpec, solve_rd

logger = logging.getLogger(__name__)

# fractional (x1, x2) positions of the initial clusters
_BUMP_CENTRES = ((0.25, 0.30), (0.62, 0.68), (0.30, 0.78), (0.80, 0.80), (0.55, 0.35))

# fractional box (x1_lo, x1_hi, x2_lo, x2_hi) kept empty
_VOID = (0.70, 1.00, 0.00, 0.35)


@dataclass(frozen=True, eq=False)
class TrueModel:
    """Known (D, G) pair with its initial condition."""

    diffusion: RateFn
    growth: RateFn
    ic: np.ndarray
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        ic = np.array(self.ic, dtype=float)
        if ic.ndim != 2 or np.any(ic < 0):
            raise ValueError("initial condition must be a non-negative 2-D field")
        object.__setattr__(self, "ic", ic)
        probe = np.linspace(0.0, 2.0 * max(float(ic.max()), 1.0), 257)
        if np.any(self.diffusion(probe) < 0):
            raise ValueError(f"diffusion {self.diffusion.label} is negative on [0, {probe[-1]:g}]")

    @classmethod
    def from_expressions(cls, diffusion: str, growth: str, ic,
                         density_reference: float = config.density_reference) -> "TrueModel":
        """
        Args:
            diffusion: expression in U for D, mm^2/day
            growth: expression in U for G, 1/day
            ic: initial field, cells per bin
            density_reference: u_ref of U = u / u_ref
        """
        return cls(
            RateFn.symbolic(diffusion, density_reference, DIFFUSION_UNITS),
            RateFn.symbolic(growth, density_reference, GROWTH_UNITS),
            ic,
            {"diffusion": diffusion, "growth": growth, "density_reference": density_reference},
        )


@dataclass(frozen=True)
class NoiseSpec:
    gamma: float = config.noise_gamma
    omega: float = config.noise_omega
    seed: int = 0

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


def default_domain() -> Domain:
    return Domain(*config.synth_domain)


def default_times(domain: Optional[Domain] = None, frames: int = config.synth_frames) -> np.ndarray:
    domain = domain or default_domain()
    return np.linspace(domain.t_min, domain.t_max, frames)


def reference_ic(domain: Domain, bin_size: float = config.bin_size, peak: float = config.ic_peak,
                 bumps: int = config.ic_bumps) -> np.ndarray:
    """Gaussian clusters scaled to ``peak`` with an empty corner region."""
    if not 1 <= bumps <= len(_BUMP_CENTRES):
        raise ValueError(f"bumps must be in [1, {len(_BUMP_CENTRES)}], got {bumps}")
    e1 = axis_edges(domain.x1_min, domain.x1_max, bin_size)
    e2 = axis_edges(domain.x2_min, domain.x2_max, bin_size)
    X1, X2 = np.meshgrid(0.5 * (e1[:-1] + e1[1:]), 0.5 * (e2[:-1] + e2[1:]), indexing="ij")
    f1 = (X1 - domain.x1_min) / domain.extent_x1
    f2 = (X2 - domain.x2_min) / domain.extent_x2
    width = config.ic_bump_width * min(domain.extent_x1, domain.extent_x2)

    ic = np.zeros_like(X1)
    for c1, c2 in _BUMP_CENTRES[:bumps]:
        x1 = domain.x1_min + c1 * domain.extent_x1
        x2 = domain.x2_min + c2 * domain.extent_x2
        ic += np.exp(-((X1 - x1) ** 2 + (X2 - x2) ** 2) / (2 * width ** 2))
    ic *= peak / ic.max()
    lo1, hi1, lo2, hi2 = _VOID
    ic[(f1 >= lo1) & (f1 <= hi1) & (f2 >= lo2) & (f2 <= hi2)] = 0.0
    return ic


def reference_model(domain: Optional[Domain] = None, bin_size: float = config.bin_size) -> TrueModel:
    domain = domain or default_domain()
    return TrueModel.from_expressions(config.reference_diffusion, config.reference_growth,
                                      reference_ic(domain, bin_size))


def generate_clean(model: TrueModel, domain: Domain, times: Sequence[float],
                   bin_size: float = config.bin_size) -> DensityField:
    """
    Forward-solve the true model; frame s is the solution at times[s].

    Raises:
        ValueError: if the initial field does not match the grid or times leave the domain
        SolverInstabilityError: propagated from the solver
    """
    shape = (axis_bins(domain.extent_x1, bin_size), axis_bins(domain.extent_x2, bin_size))
    if model.ic.shape != shape:
        raise ValueError(f"initial field shape {model.ic.shape} does not match grid {shape}")
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times.min() < domain.t_min or times.max() > domain.t_max:
        raise ValueError(f"times must lie within [{domain.t_min}, {domain.t_max}]")
    logger.info(f"generating clean data: D={model.diffusion.label}, G={model.growth.label}, "
                f"grid {shape[0]}x{shape[1]}x{times.size}")
    spec = SolveSpec(model.ic, times, domain, bin_size, bin_size)
    return solve_rd(model.diffusion, model.growth, spec)


def apply_noise(field: DensityField, spec: NoiseSpec) -> DensityField:
    if spec.omega == 0:
        return field.with_values(field.values.copy())
    rng = np.random.default_rng(spec.seed)
    u = field.values
    eps = rng.standard_normal(u.shape)
    noisy = np.maximum(0.0, u + spec.omega * np.power(u, spec.gamma) * eps)
    logger.debug(f"applied noise gamma={spec.gamma} omega={spec.omega} seed={spec.seed}; "
                 f"{int(np.sum(noisy == 0) - np.sum(u == 0))} entries clamped to zero")
    return field.with_values(noisy)


def sample_points(field: DensityField, seed: int) -> PointCloud:
    """round(value) uniform points inside every bin at every frame."""
    rng = np.random.default_rng(seed)
    e1, e2 = field.edges()
    counts = np.rint(field.values).astype(int)
    i, j, s = np.nonzero(counts)
    n = counts[i, j, s]
    i, j, s = np.repeat(i, n), np.repeat(j, n), np.repeat(s, n)

    # stay clear of the edges so re-binning lands in the same bin
    margin = 1e-6
    a = rng.uniform(margin, 1.0 - margin, size=i.size)
    b = rng.uniform(margin, 1.0 - margin, size=i.size)
    x1 = e1[i] + a * (e1[i + 1] - e1[i])
    x2 = e2[j] + b * (e2[j + 1] - e2[j])
    records = np.column_stack([x1, x2, field.times[s]])
    logger.debug(f"sampled {records.shape[0]} points from a {field.shape} field")
    return PointCloud(records, field.times)
