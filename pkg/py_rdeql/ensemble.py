"""
Density-weighted ensemble of the per-split diffusion and growth networks.

The curves live on a shared support: the intersection of every split's
central 90% interval of training densities. Each split's prediction is
weighted by how often that split saw the density during training, and the
weighted predictions are averaged across splits point by point.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from . import config
from .exceptions import EmptySupportError
from .io import read_csv, write_csv
from .solver import DIFFUSION_UNITS, GROWTH_UNITS

logger = logging.getLogger(__name__)

KINDS = {"diffusion": DIFFUSION_UNITS, "growth": GROWTH_UNITS}


@dataclass(frozen=True)
class SupportBounds:
    lo: float
    hi: float
    intervals: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if not self.lo < self.hi:
            raise EmptySupportError(f"empty shared density support [{self.lo:.4g}, {self.hi:.4g}]")


@dataclass(frozen=True, eq=False)
class EnsembleCurve:
    """
    Ensemble prediction of one rate over scaled density.

    ``values`` are physical (mm^2/day or 1/day); ``weights`` sum to one.
    """

    U: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    kind: str
    density_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {tuple(KINDS)}, got {self.kind!r}")
        U = np.asarray(self.U, dtype=float)
        values = np.asarray(self.values, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if not (U.shape == values.shape == weights.shape) or U.ndim != 1:
            raise ValueError("U, values and weights must be 1-D arrays of equal length")
        if U.size > 1 and not np.all(np.diff(U) > 0):
            raise ValueError("ensemble grid must be strictly increasing")
        if np.any(weights < 0) or not np.any(weights > 0):
            raise ValueError("weights must be non-negative and not all zero")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @property
    def units(self) -> str:
        return KINDS[self.kind]

    def save(self, path: Union[str, Path]) -> Path:
        comments = [f"kind={self.kind}", f"units={self.units}", f"density_scale={self.density_scale!r}"]
        return write_csv(path, ("U", "value", "weight"), zip(self.U, self.values, self.weights), comments)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EnsembleCurve":
        meta = {}
        with open(path) as handle:
            for line in handle:
                if not line.startswith("#"):
                    break
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
        rows = read_csv(path)
        return cls([float(r["U"]) for r in rows], [float(r["value"]) for r in rows],
                   [float(r["weight"]) for r in rows], meta["kind"], float(meta.get("density_scale", 1.0)))


def _ordered(models):
    return sorted(models, key=lambda m: m.seed)


def support_bounds(models: Sequence) -> SupportBounds:
    """
    Raises:
        ValueError: if a split has no training densities
        EmptySupportError: if the central intervals do not overlap
    """
    lo_pct, hi_pct = config.support_percentiles
    intervals = []
    for model in _ordered(models):
        dens = np.asarray(model.train_densities, dtype=float)
        if dens.size == 0:
            raise ValueError(f"split seed {model.seed} has no training densities")
        intervals.append((float(np.percentile(dens, lo_pct)), float(np.percentile(dens, hi_pct))))
    lo = max(a for a, _ in intervals)
    hi = min(b for _, b in intervals)
    logger.debug(f"shared density support [{lo:.4f}, {hi:.4f}] from {len(intervals)} splits")
    return SupportBounds(lo, hi, tuple(intervals))


def density_weights(model, U) -> np.ndarray:
    """
    Histogram of the split's training densities, interpolated at U and
    normalised to sum to one.
    """
    U = np.asarray(U, dtype=float)
    counts, edges = np.histogram(np.asarray(model.train_densities, dtype=float),
                                 bins=config.histogram_bins)
    mass = counts / counts.sum()
    centres = 0.5 * (edges[:-1] + edges[1:])
    w = np.interp(U, centres, mass)
    w[(U < edges[0]) | (U > edges[-1])] = 0.0
    total = w.sum()
    if total <= 0:
        logger.warning(f"split seed {model.seed}: training densities carry no weight on the grid")
        return np.zeros_like(U)
    return w / total


def weighted_average(values: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-point weighted mean across splits.

    Args:
        values, weights: arrays of shape (n_splits, n_points)

    Returns:
        (mean, aggregate weight, mask of points with positive aggregate weight);
        the mean is NaN where the mask is False
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    aggregate = weights.sum(axis=0)
    keep = aggregate > 0
    mean = np.full(values.shape[1], np.nan)
    mean[keep] = (weights[:, keep] * values[:, keep]).sum(axis=0) / aggregate[keep]
    return mean, aggregate, keep


def ensemble_curves(models: Sequence, n_g: int = config.ensemble_grid_points
                    ) -> Tuple[EnsembleCurve, EnsembleCurve]:
    """
    Weighted ensemble D and G over the shared support.

    Grid points where every split has zero weight are dropped with a warning.
    """
    models = _ordered(models)
    bounds = support_bounds(models)
    U = np.linspace(bounds.lo, bounds.hi, n_g)
    weights = np.stack([density_weights(m, U) for m in models])
    D, aggregate, keep = weighted_average(np.stack([m.diffusion(U) for m in models]), weights)
    G, _, _ = weighted_average(np.stack([m.growth(U) for m in models]), weights)
    if not keep.all():
        logger.warning(f"dropped {int((~keep).sum())} ensemble grid point(s) with zero aggregate weight")
    agg = aggregate[keep] / aggregate[keep].sum()
    scale = float(models[0].scaling.density_scale) if hasattr(models[0], "scaling") else 1.0
    logger.info(f"ensemble of {len(models)} splits on {int(keep.sum())} points in [{bounds.lo:.4f}, {bounds.hi:.4f}]")
    return (EnsembleCurve(U[keep], D[keep], agg, "diffusion", scale),
            EnsembleCurve(U[keep], G[keep], agg, "growth", scale))


def split_curves(models: Sequence, U) -> List[tuple]:
    """Rows ``(U, split, D, G)`` of every split's own prediction on the grid."""
    U = np.asarray(U, dtype=float)
    rows = []
    for model in _ordered(models):
        for u, d, g in zip(U, model.diffusion(U), model.growth(U)):
            rows.append((float(u), model.seed, float(d), float(g)))
    return rows
