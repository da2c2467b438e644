"""Multi-tone CSI inverse scattering with ROI-restricted Born/QP reconstruction."""
from .em import Grid2D, build_frequency_grid, uniform_circular_array
from .forward import SensingSystem, make_pilots, simulate_observations
from .inversion import InversionConfig, roi_qp_reconstruct, tikhonov_bim
from .lsm import LsmConfig, run_lsm
from .roi import RoiIndexSet

__all__ = [
    "Grid2D",
    "InversionConfig",
    "LsmConfig",
    "RoiIndexSet",
    "SensingSystem",
    "build_frequency_grid",
    "make_pilots",
    "roi_qp_reconstruct",
    "run_lsm",
    "simulate_observations",
    "tikhonov_bim",
    "uniform_circular_array",
]
__version__ = "0.1.0"
