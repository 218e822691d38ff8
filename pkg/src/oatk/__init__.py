"""One-at-a-time knockoffs for FDR-controlled variable selection in ridge regression."""

__version__ = "0.1.0"

from .calibration import CalibrationConfig, calibrated_evalues, calibrated_oatk, phi_j, sufficient_statistic
from .exceptions import (
    AllSkipped,
    ConfigError,
    DegenerateDraw,
    DimensionError,
    FactorizationFailure,
    GammaOutOfRange,
    LambdaMismatch,
    LeverageOne,
    NegativeBudget,
    NonFinite,
    OATKError,
    ParseError,
    RankDeficient,
    SingularCovariance,
    SOutOfRange,
)
from .knockoffs import (
    generate_knockoff_column,
    generate_multi_knockoffs,
    generate_residual,
    make_plan,
    verify_conditions,
)
from .linalg import DesignMatrix, column_geometry, ingest_design, ridge_fit, ridge_path, select_lambda_loocv
from .procedure import oatk_derandomized, oatk_multi, oatk_select, prepare
from .selection import bh, bh_baseline, derandomize, ebh, knockoff_threshold, seqstep_plus
from .simulation import (
    SimulationConfig,
    gen_gaussian_design,
    gen_markov_design,
    gen_response,
    gm_baseline,
    run_experiment,
)
from .statistics import knockoff_coefficients, multi_knockoff_pvalues, w_statistics

__all__ = [
    "AllSkipped", "CalibrationConfig", "ConfigError", "DegenerateDraw", "DesignMatrix",
    "DimensionError", "FactorizationFailure", "GammaOutOfRange", "LambdaMismatch",
    "LeverageOne", "NegativeBudget", "NonFinite", "OATKError", "ParseError", "RankDeficient",
    "SOutOfRange", "SimulationConfig", "SingularCovariance", "bh", "bh_baseline",
    "calibrated_evalues", "calibrated_oatk", "column_geometry", "derandomize", "ebh",
    "gen_gaussian_design", "gen_markov_design", "gen_response", "generate_knockoff_column",
    "generate_multi_knockoffs", "generate_residual", "gm_baseline", "ingest_design",
    "knockoff_coefficients", "knockoff_threshold", "make_plan", "multi_knockoff_pvalues",
    "oatk_derandomized", "oatk_multi", "oatk_select", "phi_j", "prepare", "ridge_fit",
    "ridge_path", "run_experiment", "select_lambda_loocv", "seqstep_plus",
    "sufficient_statistic", "verify_conditions", "w_statistics",
]
