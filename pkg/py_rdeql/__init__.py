''' Module entry point for any other python program importing
    this folder.

    Equation learning for 2D+t reaction-diffusion data: binning, joint
    training of density/diffusion/growth networks, symbolic regression of
    the learned rates and forward-solve validation.
    '''

__version__ = "1.0.0"

from .binn import BinnModel, TrainConfig, train
from .grid import DensityField, Domain, PointCloud, Scaling, bin_points, make_scaling
from .solver import RateFn, SolveSpec, solve_rd
