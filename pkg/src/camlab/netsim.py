"""Deterministic single-threaded event fabric.

Nodes sit on links grouped into named segments; taps eavesdrop on links and
interposers may rewrite or drop traffic in transit.  Virtual time advances
only through `Fabric.advance`, so a replay with the same topology, seed and
script yields the same event trace and the same capture bytes.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

from .core import CaptureRecord, Packet


@dataclass(frozen=True)
class Outcome:
    status: str                 # delivered | dropped | unroutable
    by: str | None = None

    @property
    def delivered(self) -> bool:
        return self.status == "delivered"


DELIVERED = Outcome("delivered")
UNROUTABLE = Outcome("unroutable")


def dropped(by: str) -> Outcome:
    return Outcome("dropped", by)


def _link_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


class Topology:
    def __init__(self):
        self.nodes: set[str] = set()
        self.links: dict[tuple[str, str], str] = {}   # link -> segment name
        self.taps: list[tuple[str, tuple[str, str]]] = []
        self.interposer_sites: list[tuple[str, tuple[str, str]]] = []
        self._adjacency: dict[str, list[str]] = {}

    def add_node(self, node: str) -> None:
        self.nodes.add(node)
        self._adjacency.setdefault(node, [])

    def add_link(self, a: str, b: str, segment: str = "main") -> None:
        if a not in self.nodes or b not in self.nodes:
            raise ValueError(f"link references unknown node: {a}-{b}")
        key = _link_key(a, b)
        if key not in self.links:
            self._adjacency[a].append(b)
            self._adjacency[b].append(a)
        self.links[key] = segment

    def add_tap(self, tap_id: str, a: str, b: str) -> None:
        key = _link_key(a, b)
        if key not in self.links:
            raise ValueError(f"tap {tap_id} references unknown link {a}-{b}")
        self.taps.append((tap_id, key))

    def add_interposer_site(self, node: str, a: str, b: str) -> None:
        key = _link_key(a, b)
        if key not in self.links:
            raise ValueError(f"interposer {node} references unknown link {a}-{b}")
        if node not in self.nodes:
            raise ValueError(f"interposer references unknown node {node}")
        self.interposer_sites.append((node, key))

    def segment_links(self, segment: str) -> list[tuple[str, str]]:
        return [link for link, seg in self.links.items() if seg == segment]

    def path(self, src: str, dst: str) -> list[str] | None:
        """Shortest node path; deterministic tie-break by insertion order."""
        if src not in self.nodes or dst not in self.nodes:
            return None
        if src == dst:
            return [src]
        seen = {src}
        queue = deque([[src]])
        while queue:
            trail = queue.popleft()
            for nxt in self._adjacency[trail[-1]]:
                if nxt in seen:
                    continue
                if nxt == dst:
                    return trail + [nxt]
                seen.add(nxt)
                queue.append(trail + [nxt])
        return None


class Fabric:
    """Owns the clock, the timers, the captures and the node handlers.

    Handlers implement `receive(fabric, packet) -> iterable[Packet] | None`;
    returned packets are sent as responses.  Interposer hooks are callables
    `hook(fabric, link, packet) -> Packet | None`; None drops the packet, a
    returned packet replaces it for the rest of the path.  Taps on a link
    record before the link's interposers act, so a dropper's own tap still
    sees what it dropped.
    """

    def __init__(self, topology: Topology):
        self.topology = topology
        self.now = 0
        self.captures: dict[str, list[CaptureRecord]] = {
            tap_id: [] for tap_id, _ in topology.taps
        }
        self.handlers: dict[str, object] = {}
        self._hooks: dict[tuple[str, tuple[str, str]], object] = {}
        self._timers: list[tuple[int, int, object, str]] = []
        self._timer_seq = 0
        self._tick_end_hooks: list[object] = []
        self._collectors: list[tuple[object, list[Packet]]] = []
        self.sent = 0
        self.delivered = 0

    # -- wiring ------------------------------------------------------------

    def attach(self, node: str, handler: object) -> None:
        if node not in self.topology.nodes:
            raise ValueError(f"no such node: {node}")
        self.handlers[node] = handler

    def set_interposer(self, node: str, a: str, b: str, hook) -> None:
        key = _link_key(a, b)
        if (node, key) not in self.topology.interposer_sites:
            raise ValueError(f"{node} has no interposer site on {a}-{b}")
        self._hooks[(node, key)] = hook

    def clear_interposer(self, node: str, a: str, b: str) -> None:
        self._hooks.pop((node, _link_key(a, b)), None)

    def add_tick_end(self, callback) -> None:
        """callback(tick) runs after the last event of each active tick."""
        self._tick_end_hooks.append(callback)

    # -- traffic -----------------------------------------------------------

    def send(self, packet: Packet) -> Outcome:
        path = self.topology.path(packet.src.node, packet.dst.node)
        if path is None or len(path) < 2:
            return UNROUTABLE
        self.sent += 1
        for a, b in zip(path, path[1:]):
            link = _link_key(a, b)
            for tap_id, tap_link in self.topology.taps:
                if tap_link == link:
                    self.captures[tap_id].append(
                        CaptureRecord(self.now, tap_id, packet.observed())
                    )
            for site_node, site_link in self.topology.interposer_sites:
                if site_link != link:
                    continue
                hook = self._hooks.get((site_node, site_link))
                if hook is None:
                    continue
                result = hook(self, link, packet)
                if result is None:
                    return dropped(site_node)
                packet = result
        self.delivered += 1
        for endpoint, bucket in self._collectors:
            if endpoint == packet.dst:
                bucket.append(packet)
        handler = self.handlers.get(packet.dst.node)
        if handler is not None:
            responses = handler.receive(self, packet)
            for response in responses or ():
                self.send(response)
        return DELIVERED

    def request(self, packet: Packet) -> tuple[Outcome, list[Packet]]:
        """Send and collect every packet delivered back to the sender."""
        bucket: list[Packet] = []
        self._collectors.append((packet.src, bucket))
        try:
            outcome = self.send(packet)
        finally:
            self._collectors.pop()
        return outcome, bucket

    # -- time --------------------------------------------------------------

    def at(self, tick: int, callback, label: str = "") -> None:
        if tick < self.now:
            raise ValueError(f"cannot schedule at {tick}, clock is at {self.now}")
        heapq.heappush(self._timers, (tick, self._timer_seq, callback, label))
        self._timer_seq += 1

    def advance(self, to: int) -> list[tuple[int, str]]:
        """Fire all timers due up to `to`; returns (tick, label) per firing."""
        if to < self.now:
            raise ValueError(f"cannot advance to {to}, clock is at {self.now}")
        fired: list[tuple[int, str]] = []
        active_tick: int | None = None
        while self._timers and self._timers[0][0] <= to:
            tick, _, callback, label = heapq.heappop(self._timers)
            if active_tick is not None and tick > active_tick:
                self._finish_tick(active_tick)
            active_tick = tick
            self.now = tick
            callback()
            fired.append((tick, label))
        if active_tick is not None:
            self._finish_tick(active_tick)
        self.now = to
        return fired

    def _finish_tick(self, tick: int) -> None:
        for hook in self._tick_end_hooks:
            hook(tick)
