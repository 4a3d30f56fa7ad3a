"""Kinetic pair-averaging exchange: stochastic simulators, a deterministic
grid solver for the limit dynamics, and inequality metrics built on them."""

from .core import (
    CdfTable,
    DistributionSpec,
    Exponential,
    Gamma,
    GridDensity,
    GridSpec,
    Table,
    TailMassTooLarge,
    TwoAtom,
    Uniform,
    UnsupportedSpec,
    WealthVector,
    cdf,
    default_grid,
    grid_ppf,
    make_grid_density,
    moments,
    near_dirac,
    sample,
    sample_density,
    sample_moments,
    spec_label,
)
from .metrics import (
    Envelope,
    EnvelopeBounds,
    GiniDissipation,
    GridTooLarge,
    NotLogConcave,
    SupportExceeded,
    ZeroMean,
    build_envelope,
    envelope_bounds,
    gamma_gini_closed_form,
    gini_density,
    gini_dissipation,
    gini_dissipation_sample,
    gini_sample,
    log_concavity_violation,
    w1,
)
from .pde import (
    DIRECT,
    FFT,
    NegativeDensityWarning,
    PdeConfig,
    Snapshot,
    euler_step,
    evolve,
    generator,
    q_plus,
)
from .particles import (
    SimConfig,
    SimRecord,
    Trajectory,
    exchange_step,
    simulate_exchange,
    simulate_nanbu,
)
from .experiments import (
    GiniReport,
    PocReport,
    PocRow,
    SurveyReport,
    SurveyRow,
    run_envelope_survey,
    run_gini_experiment,
    run_poc_experiment,
    run_variance_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "CdfTable",
    "DistributionSpec",
    "Exponential",
    "Gamma",
    "GridDensity",
    "GridSpec",
    "Table",
    "TailMassTooLarge",
    "TwoAtom",
    "Uniform",
    "UnsupportedSpec",
    "WealthVector",
    "cdf",
    "default_grid",
    "grid_ppf",
    "make_grid_density",
    "moments",
    "near_dirac",
    "sample",
    "sample_density",
    "sample_moments",
    "spec_label",
    "Envelope",
    "EnvelopeBounds",
    "GiniDissipation",
    "GridTooLarge",
    "NotLogConcave",
    "SupportExceeded",
    "ZeroMean",
    "build_envelope",
    "envelope_bounds",
    "gamma_gini_closed_form",
    "gini_density",
    "gini_dissipation",
    "gini_dissipation_sample",
    "gini_sample",
    "log_concavity_violation",
    "w1",
    "DIRECT",
    "FFT",
    "NegativeDensityWarning",
    "PdeConfig",
    "Snapshot",
    "euler_step",
    "evolve",
    "generator",
    "q_plus",
    "SimConfig",
    "SimRecord",
    "Trajectory",
    "exchange_step",
    "simulate_exchange",
    "simulate_nanbu",
    "GiniReport",
    "PocReport",
    "PocRow",
    "SurveyReport",
    "SurveyRow",
    "run_envelope_survey",
    "run_gini_experiment",
    "run_poc_experiment",
    "run_variance_experiment",
    "__version__",
]
