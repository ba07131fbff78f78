"""Numerical workbench for one-dimensional Dirichlet Schrodinger operators.

Forward solvers and eigensolvers (slcore), entire-function zero-density
diagnostics (analytic), regularized spectral-data inversion (inverse),
wave and Schrodinger boundary-trace simulators with time-domain oracles
(pdesim), nonharmonic window and interpolation machinery (harmonics), and
a batch experiment runner (cli).
"""

__version__ = "0.1.0"

from .slcore import (
    BracketError,
    EigenPair,
    PotentialField,
    SolverOverflowError,
    SolutionAtZ,
    SpectralDatum,
    SpectralParam,
    dirichlet_eigs,
    expansion_coeffs,
    solve_ivp,
    verify_asymptotics,
    verify_psi_estimates,
)
from .analytic import (
    ContourRejectionError,
    DegenerateSamplerError,
    DensityProfile,
    EntireSampler,
    PoleProximityError,
    ZeroCount,
    build_F,
    count_zeros_halfplane,
    density_profile,
)
from .inverse import (
    AgreementCertificate,
    IndexSet,
    ReconstructionProblem,
    ReconstructionReport,
    data_agreement_certificate,
    forward_data,
    reconstruct,
)
from .pdesim import (
    ExceptionalSet,
    ModeOverflowError,
    SchrodingerConfig,
    TimeTrace,
    WaveConfig,
    exceptional_set_P,
    schrodinger_mass_drift,
    schrodinger_modes,
    schrodinger_trace,
    wave_modes,
    wave_trace,
)
from .harmonics import (
    FrequencySet,
    InfeasibleTruncationError,
    Interpolant,
    KernelMatchResult,
    SequenceLP,
    WindowFunction,
    beurling_density,
    build_cos_window,
    build_exp_window,
    interpolate_lp,
    pair_window_with_trace,
    remling_map,
)
from . import cli

__all__ = [
    "AgreementCertificate",
    "BracketError",
    "ContourRejectionError",
    "DegenerateSamplerError",
    "DensityProfile",
    "EigenPair",
    "EntireSampler",
    "ExceptionalSet",
    "FrequencySet",
    "IndexSet",
    "InfeasibleTruncationError",
    "Interpolant",
    "KernelMatchResult",
    "ModeOverflowError",
    "PoleProximityError",
    "PotentialField",
    "ReconstructionProblem",
    "ReconstructionReport",
    "SchrodingerConfig",
    "SequenceLP",
    "SolverOverflowError",
    "SolutionAtZ",
    "SpectralDatum",
    "SpectralParam",
    "TimeTrace",
    "WaveConfig",
    "WindowFunction",
    "ZeroCount",
    "beurling_density",
    "build_F",
    "build_cos_window",
    "build_exp_window",
    "cli",
    "count_zeros_halfplane",
    "data_agreement_certificate",
    "density_profile",
    "dirichlet_eigs",
    "exceptional_set_P",
    "expansion_coeffs",
    "forward_data",
    "interpolate_lp",
    "pair_window_with_trace",
    "reconstruct",
    "remling_map",
    "schrodinger_mass_drift",
    "schrodinger_modes",
    "schrodinger_trace",
    "solve_ivp",
    "verify_asymptotics",
    "verify_psi_estimates",
    "wave_modes",
    "wave_trace",
]
