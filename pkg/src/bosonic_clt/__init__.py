"""Symmetric convolution of single-mode bosonic channels and their Gaussian limits, in a truncated Fock basis."""

from .analysis import (
    CapacityReport,
    ConvergenceReport,
    capacity_comparison,
    classical_clt_demo,
    coherent_information,
    convergence_study,
    dephasing_capacity,
    pure_loss_capacity,
    q_lower_bound_experiment,
)
from .channels import (
    KrausChannel,
    additive_noise_channel,
    amplifier,
    apply,
    channel_from_spec,
    dephasing_channel,
    from_choi,
    identity_channel,
    pure_loss,
    replacement_channel,
    two_point_noise,
    von_mises,
)
from .convolution import channel_convolve2, channel_convolve_pow2, state_convolve2, state_convolve_pow2
from .fock import FockOperator, FockSpaceConfig, coherent_state, fock_state, thermal_state, trace_distance
from .gaussification import (
    GaussianChannelParams,
    GaussianState,
    extract_xy,
    gaussian_state_to_fock,
    gaussification_output,
    uncertainty_certificate,
)

__version__ = "0.1.0"
