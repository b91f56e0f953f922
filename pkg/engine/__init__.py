from engine.tensor import Graph, Node, Tensor, backward, current_graph
from engine import ops
from engine.errors import (
    BuildError,
    CheckpointError,
    ConfigError,
    ContractError,
    DegenerateStatisticsError,
    ManifestError,
    NonFiniteLossError,
    SalClassError,
    ShapeError,
)

__all__ = [
    "Graph",
    "Node",
    "Tensor",
    "backward",
    "current_graph",
    "ops",
    "BuildError",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DegenerateStatisticsError",
    "ManifestError",
    "NonFiniteLossError",
    "SalClassError",
    "ShapeError",
]
