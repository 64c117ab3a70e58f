"""Recursive analog beam tracking in phased antenna arrays.

Library layout:

* :mod:`beamtrack.arrays` -- steering vectors, beamformers, observations,
  likelihood, and the tracking update field.
* :mod:`beamtrack.crlb` -- Fisher information and Cramer-Rao bounds.
* :mod:`beamtrack.trackers` -- coarse sweep plus the recursive trackers.
* :mod:`beamtrack.baselines` -- least squares, compressed sensing,
  sweep-and-refine, and Kalman-filter references.
* :mod:`beamtrack.dynamics` -- direction trajectory models.
* :mod:`beamtrack.analysis` -- convergence theory diagnostics.
* :mod:`beamtrack.harness` -- Monte-Carlo experiments and CSV output.
* :mod:`beamtrack.cli` -- command-line front end.
"""

from .arrays import (
    ArrayConfig,
    BeamformingVector,
    ChannelState,
    SnrConfig,
    array_response,
    conjugate_beamformer,
    f_gain,
    f_gain_closed,
    log_likelihood,
    observe,
    steering_vector,
)
from .crlb import (
    asymptotic_channel_crlb,
    fisher_information,
    max_fisher_information,
    min_crlb_x,
)
from .harness import ExperimentSpec, run_experiment
from .trackers import (
    DiminishingStep,
    FixedStep,
    TrackerState,
    alpha_star,
    angular_rbt_step,
    coarse_sweep_codebook,
    initial_estimate,
    rbt_step,
    run_tracker,
    step_size,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayConfig",
    "BeamformingVector",
    "ChannelState",
    "SnrConfig",
    "ExperimentSpec",
    "DiminishingStep",
    "FixedStep",
    "TrackerState",
    "alpha_star",
    "angular_rbt_step",
    "array_response",
    "asymptotic_channel_crlb",
    "coarse_sweep_codebook",
    "conjugate_beamformer",
    "f_gain",
    "f_gain_closed",
    "fisher_information",
    "initial_estimate",
    "log_likelihood",
    "max_fisher_information",
    "min_crlb_x",
    "observe",
    "rbt_step",
    "run_experiment",
    "run_tracker",
    "steering_vector",
    "step_size",
]
