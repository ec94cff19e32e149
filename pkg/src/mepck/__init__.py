"""Multi-element polynomial-chaos Kriging surrogates with DRAM calibration."""

__version__ = "0.1.0"

from .design_space import Cell, Domain, Partition, split_regular
from .dram import Chain, DramConfig, InferenceProblem, dram_sample, hdr
from .kriging import GaConfig, Hyperparams, PckModel, fit_pck
from .metrics import ValidationReport, compute_metrics
from .models import FluxCurve, TdsConfig, TrapSet, dropwave, tds_solve
from .multielement import MultielementPck, build, refine
from .pce import SparsePce, fit_sparse_pce, sobol_indices
from .sampling import ExperimentalDesign, mipt_fill, mipt_next

__all__ = [
    "Cell",
    "Chain",
    "Domain",
    "DramConfig",
    "ExperimentalDesign",
    "FluxCurve",
    "GaConfig",
    "Hyperparams",
    "InferenceProblem",
    "MultielementPck",
    "Partition",
    "PckModel",
    "SparsePce",
    "TdsConfig",
    "TrapSet",
    "ValidationReport",
    "build",
    "compute_metrics",
    "dram_sample",
    "dropwave",
    "fit_pck",
    "fit_sparse_pce",
    "hdr",
    "mipt_fill",
    "mipt_next",
    "refine",
    "sobol_indices",
    "split_regular",
    "tds_solve",
    "__version__",
]
