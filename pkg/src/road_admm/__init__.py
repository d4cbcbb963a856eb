"""Decentralized consensus ADMM with erroneous agents, its robust variant and bound checkers."""

from .costs import GlobalCostProfile, LeastSquaresCost, LocalCost, SmoothedHingeSvmCost
from .engine import AdmmConfig, NetworkState, Problem, Trace, run, step
from .errors import Bounded, ErrorModel, Gaussian, LinearDecay, NoError, Scripted
from .operators import ConsensusOperators, Topology, build_operators, build_topology
from .road import DeviationTracker, run_road
from .theory import TheoryConstants, optimal_params

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig", "Bounded", "ConsensusOperators", "DeviationTracker", "ErrorModel", "Gaussian",
    "GlobalCostProfile", "LeastSquaresCost", "LinearDecay", "LocalCost", "NetworkState", "NoError",
    "Problem", "Scripted", "SmoothedHingeSvmCost", "TheoryConstants", "Topology", "Trace",
    "build_operators", "build_topology", "optimal_params", "run", "run_road", "step",
]
