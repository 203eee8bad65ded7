"""CRB-rate tradeoff for multi-antenna multicast integrated sensing and communication."""

from .beamforming import BeamformingSolution, ScaOptions, solve_p2_sca, taylor_lower_bound
from .covariance import P1Options, P1Solution, decompose_beams, solve_p1
from .endpoints import crb_min_point, rate_max_point
from .errors import ContractError, InfeasibleError, NotApplicableError, SolverError
from .estimation import ScatterTarget, mc_crb_check
from .model import (
    ChannelSet,
    CrPoint,
    SystemConfig,
    crb_trace,
    generate_rayleigh_channels,
    isotropic_covariance,
    multicast_rate,
)

__all__ = [
    "BeamformingSolution",
    "ChannelSet",
    "ContractError",
    "CrPoint",
    "InfeasibleError",
    "NotApplicableError",
    "P1Options",
    "P1Solution",
    "ScaOptions",
    "ScatterTarget",
    "SolverError",
    "SystemConfig",
    "crb_min_point",
    "crb_trace",
    "decompose_beams",
    "generate_rayleigh_channels",
    "isotropic_covariance",
    "mc_crb_check",
    "multicast_rate",
    "rate_max_point",
    "solve_p1",
    "solve_p2_sca",
    "taylor_lower_bound",
]
