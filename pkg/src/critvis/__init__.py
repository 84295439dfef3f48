"""Critical visibility of multipartite quantum correlations via matrix-free LPs."""
from .dsm import DsmSettings, critical_visibility_objective, ghz_reference_angles, minimize
from .lp_builder import ImplicitLp, build_lp
from .mf_ipm import IpmSettings, solve
from .quantum import AngleVector, ExperimentConfig, make_ghz, probability_table

__all__ = [
    "AngleVector",
    "DsmSettings",
    "ExperimentConfig",
    "ImplicitLp",
    "IpmSettings",
    "build_lp",
    "critical_visibility_objective",
    "ghz_reference_angles",
    "make_ghz",
    "minimize",
    "probability_table",
    "solve",
]
