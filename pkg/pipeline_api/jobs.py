"""
Worker-side job functions.

Kept free of Django imports so process workers can unpickle them without a
configured settings module.
"""

from pathlib import Path
from typing import Optional

import numpy as np

from py_rdeql.binn import TrainConfig, train
from py_rdeql.evaluate import count_from_solve
from py_rdeql.grid import DensityField
from py_rdeql.solver import RateFn, ReactionDiffusionSolver, SolveSpec
from py_rdeql.sr import Candidate, SrConfig, sr_fit


def train_job(field: DensityField, cfg: TrainConfig, seed: int, directory: str) -> dict:
    """Train one (patience, split) cell and save it; returns its summary row."""
    model = train(field, cfg, seed)
    model.save(directory)
    return {
        'patience': cfg.es_patience,
        'seed': seed,
        'stopped_epoch': model.stopped_epoch,
        'best_epoch': model.best_epoch,
        'best_val_loss': model.best_val_loss,
        'full_data_loss': model.full_data_loss,
        'wall_clock': model.wall_clock,
        'directory': str(directory),
    }


def sr_job(curve, cfg: SrConfig, seed: int) -> Candidate:
    return sr_fit(curve, cfg, seed)


def solve_job(diffusion: RateFn, growth: RateFn, spec: SolveSpec,
              diagnostics: Optional[str] = None) -> np.ndarray:
    """Forward solve and return the total count at every output time."""
    solver = ReactionDiffusionSolver(diffusion, growth, spec)
    solution = solver.run()
    if diagnostics:
        solver.write_diagnostics(Path(diagnostics))
    return count_from_solve(solution)
