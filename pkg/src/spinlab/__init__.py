"""Numerical lab for spherical mixed p-spin glasses."""

from .errors import (
    AllZero,
    ConfigError,
    DimensionMismatch,
    DomainError,
    NegativeCoefficient,
    NonErgodicWarning,
    ResourceLimit,
    SpinlabError,
    UnsupportedDimension,
)
from .mixture import (
    DEFAULT_C,
    Mixture,
    PerturbationParams,
    convexity_report,
    draw_perturbation,
    eta_x,
    validate_mixture,
    xi_deriv,
)
from .field import (
    CouplingTensors,
    FieldBundle,
    Polynomial,
    ProductField,
    covariance_check,
    dump_couplings,
    evaluate_gradient,
    evaluate_hamiltonian,
    hamiltonian,
    load_couplings,
    perturbed_hamiltonian,
    sample_bundle,
    sample_disorder,
)
from .sphere import (
    ProductConfig,
    SphericalConfig,
    band_interval,
    band_measure,
    overlaps,
    poincare_check,
    sample_sphere,
    scale_map_f_r,
)
from .free_energy import (
    FreeEnergyEstimate,
    exact_log_partition,
    mc_log_partition,
    perturbation_gap,
    product_free_energy,
    quenched_free_energy,
    superadditivity_defect,
)
from .interpolation import (
    InterpolationPoint,
    MCMCParams,
    gibbs_sample,
    phi_curve,
    phi_prime_ibp,
    u_functional,
    u_plus_functional,
)
from .bands import LipschitzEstimates, d_split_membership, lemma_estimate_check, lipschitz_estimates, x_band_integral
from .config import ExperimentConfig, load_config

__version__ = "0.1.0"
