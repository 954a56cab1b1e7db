"""Concurrent AND/OR-graph task planning for mixed human-robot teams.

The package splits into:

* :mod:`andorplan.graph` / :mod:`andorplan.episode` -- the 1-layer AND/OR
  graph model and its feasibility/solved calculus;
* :mod:`andorplan.hierarchy` -- layered graphs, subgraph transitions and
  entangled nodes;
* :mod:`andorplan.planner` -- lowest-cost traversal, task allocation and
  online replanning under operator overrides;
* :mod:`andorplan.simulator` -- deterministic discrete-event execution,
  rehearsal estimates and timing reports;
* :mod:`andorplan.scenario` -- the YAML scenario format, bundled scenarios
  and DOT export;
* :mod:`andorplan.service` / :mod:`andorplan.cli` -- the session service,
  wire protocol and batch commands.
"""

from .episode import Episode, EpisodeStatus, init_episode
from .errors import (
    AndOrPlanError,
    ModelError,
    NoEligibleAgentError,
    NoPathError,
    ProtocolViolation,
    ScenarioError,
    UnknownEntityError,
)
from .graph import (
    Action,
    GraphStructure,
    HyperArc,
    Node,
    ProcessSpec,
    validate_structure,
)
from .hierarchy import (
    ConcurrentModel,
    EntanglementLink,
    LayerTransition,
    check_invariants,
    initialize_episodes,
    propagate_entanglement,
    sync_hierarchy,
)
from .planner import (
    CooperationPath,
    Event,
    EventResult,
    Suggestion,
    allocate_action,
    best_path,
    enumerate_paths,
    handle_event,
    next_suggestions,
    select_target,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AndOrPlanError",
    "ConcurrentModel",
    "CooperationPath",
    "EntanglementLink",
    "Episode",
    "EpisodeStatus",
    "Event",
    "EventResult",
    "GraphStructure",
    "HyperArc",
    "LayerTransition",
    "ModelError",
    "NoEligibleAgentError",
    "NoPathError",
    "Node",
    "ProcessSpec",
    "ProtocolViolation",
    "ScenarioError",
    "Suggestion",
    "UnknownEntityError",
    "allocate_action",
    "best_path",
    "check_invariants",
    "enumerate_paths",
    "handle_event",
    "init_episode",
    "initialize_episodes",
    "next_suggestions",
    "propagate_entanglement",
    "select_target",
    "sync_hierarchy",
    "validate_structure",
]
