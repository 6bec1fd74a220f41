"""Deterministic assumed-density likelihoods and filters for partially
observed stochastic compartmental models with over-dispersed reporting."""

from .bpf import ParticleDegeneracyError, Particle, PfOutput, run_bpf
from .estimators import (
    BetaPrior,
    Chain,
    ExponentialPrior,
    Parameter,
    ParamSpace,
    TruncNormalPrior,
    coordinate_ascent,
    log_prior,
    rwm_chain,
)
from .filters import (
    FilterOutput,
    FilterStep,
    laplace_qbar,
    laplace_s2,
    ll_increment,
    predict_step,
    run_lawpal,
    run_pal,
    update_step,
)
from .model import (
    CompartmentalSpec,
    LimitState,
    TransitionKernel,
    constant_kernel,
    eta_normalize,
    kernel_eval,
    limit_recursion,
    register_kernel,
    seir_control_kernel,
    seir_kernel,
    sir_kernel,
)
from .observation import FixedReporting, ObservationModel, TruncNormalReporting
from .randkit import child_rng, rng_from_seed
from .simulate import Trajectory, simulate, simulate_with_fixed_q_path

__version__ = "0.1.0"

__all__ = [
    "BetaPrior",
    "Chain",
    "CompartmentalSpec",
    "ExponentialPrior",
    "FilterOutput",
    "FilterStep",
    "FixedReporting",
    "LimitState",
    "ObservationModel",
    "Parameter",
    "ParamSpace",
    "Particle",
    "ParticleDegeneracyError",
    "PfOutput",
    "Trajectory",
    "TransitionKernel",
    "TruncNormalPrior",
    "TruncNormalReporting",
    "child_rng",
    "constant_kernel",
    "coordinate_ascent",
    "eta_normalize",
    "kernel_eval",
    "laplace_qbar",
    "laplace_s2",
    "limit_recursion",
    "ll_increment",
    "log_prior",
    "predict_step",
    "register_kernel",
    "rng_from_seed",
    "run_bpf",
    "run_lawpal",
    "run_pal",
    "rwm_chain",
    "seir_control_kernel",
    "seir_kernel",
    "simulate",
    "simulate_with_fixed_q_path",
    "sir_kernel",
    "update_step",
]
