"""
Total-cell-count curves and their comparison with the data.

    N_data  summed binned data
    N_u     summed density-network prediction
    N_fwd   summed forward solve with the learned MLP pair
    N_SR    summed forward solve with the symbolic pair
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np

from .grid import DensityField, Scaling, total_count
from .io import read_csv, write_csv
from .mlp import NetworkParams, forward

logger = logging.getLogger(__name__)

COLUMNS = ("N_data", "N_u", "N_fwd", "N_SR")


@dataclass(eq=False)
class CountCurves:
    """Count curves over common times; any subset of COLUMNS may be present."""

    times: np.ndarray
    curves: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        checked = {}
        for name, values in self.curves.items():
            if name not in COLUMNS:
                raise ValueError(f"unknown count curve {name!r}")
            values = np.asarray(values, dtype=float)
            if values.shape != self.times.shape:
                raise ValueError(f"{name} has {values.size} values for {self.times.size} times")
            if np.any(values < 0):
                raise ValueError(f"{name} has negative counts")
            checked[name] = values
        self.curves = checked

    def __getitem__(self, name: str) -> np.ndarray:
        return self.curves[name]

    def __contains__(self, name: str) -> bool:
        return name in self.curves

    def with_curve(self, name: str, values) -> "CountCurves":
        return CountCurves(self.times, {**self.curves, name: values})

    @property
    def metrics(self) -> Dict[str, Dict[str, float]]:
        return compare(self)

    def save(self, path: Union[str, Path]) -> Path:
        rows = ((t, *(self.curves[c][k] if c in self.curves else None for c in COLUMNS))
                for k, t in enumerate(self.times))
        return write_csv(path, ("t",) + COLUMNS, rows)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CountCurves":
        rows = read_csv(path)
        times = [float(r["t"]) for r in rows]
        curves = {c: [float(r[c]) for r in rows] for c in COLUMNS
                  if rows and all(r.get(c) not in (None, "") for r in rows)}
        return cls(times, curves)


def count_from_net(theta_u: NetworkParams, scaling: Scaling, grid: DensityField, times) -> np.ndarray:
    """Sum of NN_u over the cell centres of ``grid`` at each physical time, cells."""
    c1, c2 = grid.cell_centers()
    X1, X2 = np.meshgrid(scaling.scale_x1(c1), scaling.scale_x2(c2), indexing="ij")
    X1, X2 = X1.ravel(), X2.ravel()
    out = []
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        tau = np.full(X1.size, float(scaling.scale_t(t)))
        U = np.asarray(forward(theta_u, np.column_stack([X1, X2, tau])))
        out.append(float(scaling.unscale_density(U).sum()))
    return np.asarray(out)


def count_from_solve(field: DensityField) -> np.ndarray:
    """total_count at every frame of a (solved or binned) density field."""
    return np.asarray([total_count(field, s) for s in range(field.shape[2])])


def relative_l2(curve, reference) -> float:
    curve, reference = np.asarray(curve, dtype=float), np.asarray(reference, dtype=float)
    return float(np.linalg.norm(curve - reference) / np.linalg.norm(reference))


def final_error(curve, reference) -> float:
    return float(abs(curve[-1] - reference[-1]) / reference[-1])


def compare(curves: CountCurves) -> Dict[str, Dict[str, float]]:
    """
    Relative L2 and final-time relative error of every model curve against
    N_data; empty when N_data is absent. When both forward solves are present
    their mutual relative L2 is reported under ``N_SR_vs_N_fwd``.
    """
    if "N_data" not in curves:
        return {}
    ref = curves["N_data"]
    metrics = {}
    for name in COLUMNS[1:]:
        if name in curves:
            metrics[name] = {"rel_l2": relative_l2(curves[name], ref),
                             "final_error": final_error(curves[name], ref)}
    if "N_fwd" in curves and "N_SR" in curves:
        metrics["N_SR_vs_N_fwd"] = {"rel_l2": relative_l2(curves["N_SR"], curves["N_fwd"])}
    for name, m in metrics.items():
        logger.info(f"{name}: " + ", ".join(f"{k}={v:.4f}" for k, v in m.items()))
    return metrics
