"""Gradient-free stochastic approximation: SPSA, RDSA and FDSA estimators,
asymptotic theory and Monte Carlo experiment batteries."""

from ._spsalab import (
    ExperimentConfig,
    Family,
    GainSequence,
    LossModel,
    Method,
    MseDecomposition,
    NoiseModel,
    PerturbationDist,
    RngStream,
    SpsalabError,
    asymptotic_distribution,
    cmd_run,
    cmd_theory,
    fdsa_gradient,
    grid_search,
    moments,
    moments_table,
    mse_decomposition,
    predict_bias,
    predict_mse,
    prop3_predicate,
    rdsa_gradient,
    run_battery,
    run_sa,
    sample,
    spsa_gradient,
    validate_a1,
    welch_t_test,
    z_study,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
