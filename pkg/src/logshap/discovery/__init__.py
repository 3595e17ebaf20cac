"""Process discovery miners and model representations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from ..eventlog import EventLog
from .dfg import dfg_discover, directly_follows
from .gateway import GatewayGraph, GraphError, tree_to_gateway_graph
from .inductive import inductive_discover
from .petri import (
    SOUND,
    UNKNOWN,
    UNSOUND,
    NetError,
    PetriNet,
    check_soundness,
    graph_to_petri,
    tree_to_petri,
)
from .tree import AND, LOOP, SEQ, TAU, XOR, ProcessTree, TreeError, parse_tree


@dataclass(frozen=True)
class DiscoveredModel:
    miner: str
    model: ProcessTree | GatewayGraph
    net: PetriNet = field(repr=False)
    graph: GatewayGraph = field(repr=False)

    @classmethod
    def from_tree(cls, miner: str, tree: ProcessTree) -> "DiscoveredModel":
        return cls(miner, tree, tree_to_petri(tree), tree_to_gateway_graph(tree))

    @classmethod
    def from_graph(cls, miner: str, graph: GatewayGraph) -> "DiscoveredModel":
        return cls(miner, graph, graph_to_petri(graph), graph)

    def to_text(self) -> str:
        if isinstance(self.model, ProcessTree):
            return str(self.model) + "\n"
        return self.model.to_text()


def to_petri(model: DiscoveredModel | ProcessTree | GatewayGraph) -> PetriNet:
    if isinstance(model, DiscoveredModel):
        return model.net
    if isinstance(model, ProcessTree):
        return tree_to_petri(model)
    return graph_to_petri(model)


Miner = Callable[[EventLog], DiscoveredModel]


class MinerNotAvailable(NotImplementedError):
    pass


def _inductive(log: EventLog) -> DiscoveredModel:
    return DiscoveredModel.from_tree("inductive", inductive_discover(log))


def _dfg(log: EventLog, eta: float = 0.0) -> DiscoveredModel:
    return DiscoveredModel.from_graph("dfg", dfg_discover(log, eta))


def _ilp(log: EventLog) -> DiscoveredModel:
    raise MinerNotAvailable("the ILP miner needs an external adapter; register one with register_miner")


MINERS: dict[str, Miner] = {"inductive": _inductive, "dfg": _dfg, "ilp": _ilp}
BUILTIN_MINERS = ("inductive", "dfg")


def register_miner(name: str, miner: Miner) -> None:
    MINERS[name] = miner


__all__ = [
    "AND",
    "BUILTIN_MINERS",
    "DiscoveredModel",
    "GatewayGraph",
    "GraphError",
    "LOOP",
    "MINERS",
    "MinerNotAvailable",
    "NetError",
    "PetriNet",
    "ProcessTree",
    "SEQ",
    "SOUND",
    "TAU",
    "TreeError",
    "UNKNOWN",
    "UNSOUND",
    "XOR",
    "check_soundness",
    "dfg_discover",
    "directly_follows",
    "graph_to_petri",
    "inductive_discover",
    "parse_tree",
    "register_miner",
    "to_petri",
    "tree_to_gateway_graph",
    "tree_to_petri",
]
