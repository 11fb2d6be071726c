"""
Spatial domain, point-cloud binning, density tensors and nondimensional scaling.

Densities are stored in cells per bin, so summing a frame over space gives
the total cell count directly. Bins are half-open on the lattice
``x_min + k * bin_size``; the final bin on each axis absorbs the remainder of
the domain and also owns the domain's upper edge.

Classes:
    Domain: Spatio-temporal bounding box (mm, mm, days)
    PointCloud: Observed cell coordinates grouped by frame time
    DensityField: Binned density tensor with its grid geometry
    Scaling: Length, time and density scales of the nondimensional problem
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from . import config
from .exceptions import DegenerateScalingError, OutOfDomainError

logger = logging.getLogger(__name__)


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Domain:
    """Spatio-temporal data domain; lengths in mm, times in days."""

    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float
    t_min: float
    t_max: float

    def __post_init__(self):
        if not self.x1_max > self.x1_min:
            raise ValueError(f"x1_max ({self.x1_max}) must exceed x1_min ({self.x1_min})")
        if not self.x2_max > self.x2_min:
            raise ValueError(f"x2_max ({self.x2_max}) must exceed x2_min ({self.x2_min})")
        if not self.t_max > self.t_min:
            raise ValueError(f"t_max ({self.t_max}) must exceed t_min ({self.t_min})")

    @property
    def extent_x1(self) -> float:
        return self.x1_max - self.x1_min

    @property
    def extent_x2(self) -> float:
        return self.x2_max - self.x2_min

    @property
    def duration(self) -> float:
        return self.t_max - self.t_min

    def contains(self, x1, x2, t) -> np.ndarray:
        """Vectorised membership test (closed box)."""
        x1, x2, t = np.asarray(x1), np.asarray(x2), np.asarray(t)
        return (
            (x1 >= self.x1_min) & (x1 <= self.x1_max)
            & (x2 >= self.x2_min) & (x2 <= self.x2_max)
            & (t >= self.t_min) & (t <= self.t_max)
        )

    def shifted(self, d1: float, d2: float) -> "Domain":
        return Domain(self.x1_min + d1, self.x1_max + d1,
                      self.x2_min + d2, self.x2_max + d2,
                      self.t_min, self.t_max)

    def to_dict(self) -> dict:
        return {
            "x1_min": self.x1_min, "x1_max": self.x1_max,
            "x2_min": self.x2_min, "x2_max": self.x2_max,
            "t_min": self.t_min, "t_max": self.t_max,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Domain":
        return cls(**{k: float(data[k]) for k in
                      ("x1_min", "x1_max", "x2_min", "x2_max", "t_min", "t_max")})


@dataclass(frozen=True, eq=False)
class PointCloud:
    """
    Discrete cell coordinates.

    Attributes:
        records: array of shape (n, 3) holding (x1 mm, x2 mm, t days)
        frame_times: sorted unique observation times; every record's t is one of them
    """

    records: np.ndarray
    frame_times: np.ndarray

    def __post_init__(self):
        records = np.asarray(self.records, dtype=float).reshape(-1, 3)
        frames = np.unique(np.asarray(self.frame_times, dtype=float))
        unknown = ~np.isin(records[:, 2], frames)
        if unknown.any():
            bad = np.unique(records[unknown, 2])
            raise ValueError(f"record times not among frame_times: {bad[:10].tolist()}")
        object.__setattr__(self, "records", _frozen(records))
        object.__setattr__(self, "frame_times", _frozen(frames))

    def __len__(self) -> int:
        return self.records.shape[0]

    def frame_counts(self) -> np.ndarray:
        """Number of records at each frame time."""
        idx = np.searchsorted(self.frame_times, self.records[:, 2])
        return np.bincount(idx, minlength=len(self.frame_times))

    def shifted(self, d1: float, d2: float) -> "PointCloud":
        moved = self.records + np.array([d1, d2, 0.0])
        return PointCloud(moved, self.frame_times)


@dataclass(frozen=True, eq=False)
class DensityField:
    """
    Binned density tensor u_data of shape (n_x1, n_x2, n_t), cells per bin.
    """

    values: np.ndarray
    bin_size_x1: float
    bin_size_x2: float
    domain: Domain
    times: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        times = np.asarray(self.times, dtype=float).ravel()
        if values.ndim != 3:
            raise ValueError(f"density values must be 3-D, got shape {values.shape}")
        if values.shape[2] != times.size:
            raise ValueError(f"{values.shape[2]} frames but {times.size} times")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("density field times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite")
        if np.any(values < 0):
            raise ValueError("density values must be non-negative")
        expected = (axis_bins(self.domain.extent_x1, self.bin_size_x1),
                    axis_bins(self.domain.extent_x2, self.bin_size_x2))
        if values.shape[:2] != expected:
            raise ValueError(f"grid shape {values.shape[:2]} does not tile the domain, expected {expected}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "times", _frozen(times))

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape

    @property
    def n_entries(self) -> int:
        return int(self.values.size)

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        return (axis_edges(self.domain.x1_min, self.domain.x1_max, self.bin_size_x1),
                axis_edges(self.domain.x2_min, self.domain.x2_max, self.bin_size_x2))

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Centres of the (possibly partial) bins along each axis, mm."""
        e1, e2 = self.edges()
        return 0.5 * (e1[:-1] + e1[1:]), 0.5 * (e2[:-1] + e2[1:])

    def with_values(self, values) -> "DensityField":
        return DensityField(values, self.bin_size_x1, self.bin_size_x2, self.domain, self.times)

    def counts(self) -> np.ndarray:
        """Total count at every frame."""
        return self.values.sum(axis=(0, 1))


@dataclass(frozen=True)
class Scaling:
    """
    Nondimensionalisation x = L X, t = t_min + T tau, u = u_max U.

    Under it the PDE keeps its form with D_scaled = D T / L^2 and
    G_scaled = G T.
    """

    length_scale: float
    time_scale: float
    density_scale: float
    x1_origin: float = 0.0
    x2_origin: float = 0.0
    t_origin: float = 0.0

    def __post_init__(self):
        for name in ("length_scale", "time_scale", "density_scale"):
            if not getattr(self, name) > 0:
                raise DegenerateScalingError(f"{name} must be positive, got {getattr(self, name)}")

    # coordinates
    def scale_x1(self, x1):
        return (np.asarray(x1, dtype=float) - self.x1_origin) / self.length_scale

    def scale_x2(self, x2):
        return (np.asarray(x2, dtype=float) - self.x2_origin) / self.length_scale

    def scale_t(self, t):
        return (np.asarray(t, dtype=float) - self.t_origin) / self.time_scale

    def unscale_x1(self, X1):
        return np.asarray(X1, dtype=float) * self.length_scale + self.x1_origin

    def unscale_x2(self, X2):
        return np.asarray(X2, dtype=float) * self.length_scale + self.x2_origin

    def unscale_t(self, tau):
        return np.asarray(tau, dtype=float) * self.time_scale + self.t_origin

    # fields and rates
    def scale_density(self, u):
        return np.asarray(u, dtype=float) / self.density_scale

    def unscale_density(self, U):
        return np.asarray(U, dtype=float) * self.density_scale

    def scale_diffusivity(self, d):
        return np.asarray(d, dtype=float) * self.time_scale / self.length_scale ** 2

    def unscale_diffusivity(self, d_scaled):
        return np.asarray(d_scaled, dtype=float) * self.length_scale ** 2 / self.time_scale

    def scale_growth(self, g):
        return np.asarray(g, dtype=float) * self.time_scale

    def unscale_growth(self, g_scaled):
        return np.asarray(g_scaled, dtype=float) / self.time_scale

    def scaled_box(self, domain: Domain) -> Tuple[float, float, float]:
        """Upper corner of the scaled data domain (lower corner is the origin)."""
        return (domain.extent_x1 / self.length_scale,
                domain.extent_x2 / self.length_scale,
                domain.duration / self.time_scale)

    def to_dict(self) -> dict:
        return {
            "length_scale": self.length_scale, "time_scale": self.time_scale,
            "density_scale": self.density_scale, "x1_origin": self.x1_origin,
            "x2_origin": self.x2_origin, "t_origin": self.t_origin,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scaling":
        return cls(**{k: float(v) for k, v in data.items()})


def axis_bins(extent: float, bin_size: float) -> int:
    """Number of bins covering an axis; the last one may be partial."""
    if not bin_size > 0:
        raise ValueError(f"bin_size must be positive, got {bin_size}")
    return max(1, math.ceil(round(extent / bin_size, config.bin_snap_decimals)))


def axis_edges(lo: float, hi: float, bin_size: float) -> np.ndarray:
    n = axis_bins(hi - lo, bin_size)
    edges = lo + bin_size * np.arange(n + 1, dtype=float)
    edges[-1] = hi
    return edges


def _bin_index(coords: np.ndarray, lo: float, bin_size: float, n: int) -> np.ndarray:
    offset = np.round((coords - lo) / bin_size, config.bin_snap_decimals)
    return np.clip(np.floor(offset).astype(int), 0, n - 1)


def bin_points(points: PointCloud, domain: Domain, bin_size: float = config.bin_size) -> DensityField:
    """
    Count records per (bin, frame).

    Args:
        points: observed coordinates
        domain: spatial-temporal box the grid tiles
        bin_size: bin edge length in mm, shared by both axes

    Returns:
        DensityField whose frame sums equal the per-frame record counts

    Raises:
        OutOfDomainError: if any record lies outside the domain
    """
    n1 = axis_bins(domain.extent_x1, bin_size)
    n2 = axis_bins(domain.extent_x2, bin_size)
    times = points.frame_times
    values = np.zeros((n1, n2, times.size))

    rec = points.records
    if rec.shape[0]:
        inside = domain.contains(rec[:, 0], rec[:, 1], rec[:, 2])
        if not inside.all():
            raise OutOfDomainError(rec[~inside])
        i = _bin_index(rec[:, 0], domain.x1_min, bin_size, n1)
        j = _bin_index(rec[:, 1], domain.x2_min, bin_size, n2)
        s = np.searchsorted(times, rec[:, 2])
        np.add.at(values, (i, j, s), 1.0)
    else:
        logger.warning(f"binning an empty point cloud over {times.size} frame(s)")

    logger.debug(f"binned {rec.shape[0]} records into a {n1}x{n2}x{times.size} tensor")
    return DensityField(values, bin_size, bin_size, domain, times)


def total_count(field: DensityField, s: int) -> float:
    """Sum of densities over space at frame index s."""
    n_t = field.shape[2]
    if not 0 <= s < n_t:
        raise IndexError(f"time index {s} outside [0, {n_t})")
    return float(field.values[:, :, s].sum())


def make_scaling(field: DensityField) -> Scaling:
    """
    Derive the nondimensional scales of a density field.

    L is the larger spatial extent, T the observation horizon and u_max the
    largest density entry.

    Raises:
        DegenerateScalingError: if the field has no positive entry
    """
    u_max = float(field.values.max()) if field.values.size else 0.0
    if u_max <= 0:
        raise DegenerateScalingError("density field is identically zero; cannot derive a density scale")
    d = field.domain
    return Scaling(
        length_scale=max(d.extent_x1, d.extent_x2),
        time_scale=d.duration,
        density_scale=u_max,
        x1_origin=d.x1_min,
        x2_origin=d.x2_min,
        t_origin=d.t_min,
    )
