"""Swarm layer: protocol simulation, target detection, localisation and repositioning."""

from .detect import DetectionResult, detect_target, welch_psd
from .protocol import NodeState, ProtocolResult, Scenario, SimEvent, load_scenario, parse_scenario, run_protocol
from .reposition import RepositionDecision, RepositionPlan, evaluate_reposition, hemisphere_candidates, reposition
from .tdoa import tdoa_localize, tdoa_residual

__all__ = [
    "DetectionResult",
    "detect_target",
    "welch_psd",
    "NodeState",
    "ProtocolResult",
    "Scenario",
    "SimEvent",
    "load_scenario",
    "parse_scenario",
    "run_protocol",
    "RepositionDecision",
    "RepositionPlan",
    "evaluate_reposition",
    "hemisphere_candidates",
    "reposition",
    "tdoa_localize",
    "tdoa_residual",
]
