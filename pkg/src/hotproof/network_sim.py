"""In-process channel graph, probe forwarding and the probing estimator."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

from .errors import NoRoute, UnknownNode
from .ln_core import ChannelState, open_channel, outbound_liquidity


@dataclass
class NetworkGraph:
    """Undirected multigraph of channels; each state is stored as seen from ``a``."""

    nodes: set[str] = field(default_factory=set)
    channels: dict[str, tuple[str, str, ChannelState]] = field(default_factory=dict)

    def add_node(self, node: str) -> None:
        self.nodes.add(node)

    def add_channel(self, a: str, b: str, state: ChannelState) -> None:
        if a == b:
            raise ValueError("channel endpoints must differ")
        for n in (a, b):
            if n not in self.nodes:
                raise UnknownNode(n)
        if state.channel_id in self.channels:
            raise ValueError(f"duplicate channel {state.channel_id}")
        self.channels[state.channel_id] = (a, b, state)

    def neighbours(self, node: str):
        """Yield ``(channel_id, peer)`` for every channel touching ``node``."""
        for cid, (a, b, _) in self.channels.items():
            if a == node:
                yield cid, b
            elif b == node:
                yield cid, a

    def liquidity(self, channel_id: str, from_node: str) -> int:
        """Outbound satoshis ``from_node`` can push through ``channel_id``."""
        a, b, state = self.channels[channel_id]
        if from_node == a:
            return outbound_liquidity(state)
        if from_node == b:
            return outbound_liquidity(state.mirrored())
        raise UnknownNode(f"{from_node} is not an endpoint of {channel_id}")

    def other_end(self, channel_id: str, node: str) -> str:
        a, b, _ = self.channels[channel_id]
        return b if node == a else a

    @classmethod
    def from_fixture(cls, items: list[dict]) -> "NetworkGraph":
        """Fixture: ``[{id, a, b, capacity_sat, local_sat_of_a, reserve_sat}, ...]``."""
        g = cls()
        for item in items:
            g.add_node(item["a"])
            g.add_node(item["b"])
        for item in items:
            state = open_channel(
                item["id"], int(item["capacity_sat"]), int(item["local_sat_of_a"]), int(item.get("reserve_sat", 0))
            )
            g.add_channel(item["a"], item["b"], state)
        return g

    def to_fixture(self) -> list[dict]:
        return [
            {
                "id": cid,
                "a": a,
                "b": b,
                "capacity_sat": s.capacity_sat,
                "local_sat_of_a": s.local_msat // 1000,
                "reserve_sat": s.reserve_sat,
            }
            for cid, (a, b, s) in self.channels.items()
        ]


def find_route(graph: NetworkGraph, src: str, dst: str, amount_sat: int) -> list[str]:
    """Fewest-hop path over channels with capacity >= amount.

    Ties go to the lexicographically smallest channel-id sequence. Liquidity
    is not consulted here; it only matters while forwarding.
    """
    for n in (src, dst):
        if n not in graph.nodes:
            raise UnknownNode(n)
    if src == dst:
        return []

    def usable(cid):
        return graph.channels[cid][2].capacity_sat >= amount_sat

    # hop distance to dst, then walk forward taking the smallest usable id each step
    dist = {dst: 0}
    queue = deque([dst])
    while queue:
        node = queue.popleft()
        for cid, peer in graph.neighbours(node):
            if peer not in dist and usable(cid):
                dist[peer] = dist[node] + 1
                queue.append(peer)
    if src not in dist:
        raise NoRoute(f"{src} -> {dst} for {amount_sat} sat")

    path, node = [], src
    while node != dst:
        cid = min(
            cid for cid, peer in graph.neighbours(node) if usable(cid) and dist.get(peer) == dist[node] - 1
        )
        path.append(cid)
        node = graph.other_end(cid, node)
    return path


class ProbeResult(enum.Enum):
    REACHED_DESTINATION = "ReachedDestination"
    TEMPORARY_CHANNEL_FAILURE = "TemporaryChannelFailure"
    NO_ROUTE = "NoRoute"


@dataclass(frozen=True)
class ProbeOutcome:
    result: ProbeResult
    failing_channel_id: str | None = None

    def __post_init__(self):
        has_id = self.failing_channel_id is not None
        if has_id != (self.result is ProbeResult.TEMPORARY_CHANNEL_FAILURE):
            raise ValueError("failing_channel_id is set iff the probe hit a temporary channel failure")

    @property
    def succeeded(self) -> bool:
        return self.result is ProbeResult.REACHED_DESTINATION


def probe_path(graph: NetworkGraph, src: str, path: list[str], amount_sat: int) -> ProbeOutcome:
    """Forward a probe hop by hop along ``path``.

    The payment hash has no known preimage, so a probe that reaches the
    destination is failed back and no channel state ever changes.
    """
    if amount_sat <= 0:
        raise ValueError("probe amount must be positive")
    node = src
    for cid in path:
        if graph.liquidity(cid, node) < amount_sat:
            return ProbeOutcome(ProbeResult.TEMPORARY_CHANNEL_FAILURE, cid)
        node = graph.other_end(cid, node)
    return ProbeOutcome(ProbeResult.REACHED_DESTINATION)


def send_probe(graph: NetworkGraph, src: str, dst: str, amount_sat: int) -> ProbeOutcome:
    if amount_sat <= 0:
        raise ValueError("probe amount must be positive")
    try:
        path = find_route(graph, src, dst, amount_sat)
    except NoRoute:
        return ProbeOutcome(ProbeResult.NO_ROUTE)
    return probe_path(graph, src, path, amount_sat)


@dataclass(frozen=True)
class LiquidityEstimate:
    lower_bound_sat: int
    upper_bound_sat: int
    probes_used: int

    def __post_init__(self):
        if self.lower_bound_sat > self.upper_bound_sat:
            raise ValueError("lower bound above upper bound")


def probe_budget(capacity_sat: int, tolerance_sat: int) -> int:
    if capacity_sat <= 0:
        return 2
    return max(0, math.ceil(math.log2(capacity_sat / tolerance_sat))) + 2


def estimate_liquidity(
    graph: NetworkGraph,
    src: str,
    target_channel: str,
    tolerance_sat: int = 1,
    from_node: str | None = None,
) -> LiquidityEstimate:
    """Binary-search the outbound liquidity of ``target_channel``.

    Probes travel ``src -> ... -> from_node -> far end``; ``from_node``
    defaults to the channel's ``a`` endpoint. The search starts from
    ``[0, capacity]`` and stops once ``upper - lower < tolerance_sat``, so a
    tolerance of 1 pins the value exactly.
    """
    if tolerance_sat < 1:
        raise ValueError("tolerance must be at least 1 sat")
    if target_channel not in graph.channels:
        raise NoRoute(f"unknown channel {target_channel}")
    a, b, state = graph.channels[target_channel]
    sender = from_node or a
    prefix = find_route(graph, src, sender, 1) if src != sender else []
    path = prefix + [target_channel]

    lower, upper, probes = 0, state.capacity_sat, 0
    while upper - lower >= tolerance_sat:
        amount = lower + (upper - lower + 1) // 2
        outcome = probe_path(graph, src, path, amount)
        probes += 1
        if outcome.succeeded:
            lower = amount
        elif outcome.failing_channel_id == target_channel:
            upper = amount - 1
        else:
            raise NoRoute(f"probe failed upstream at {outcome.failing_channel_id}; target is not the binding hop")
    return LiquidityEstimate(lower, upper, probes)
