"""Encrypting relay and player-side decrypt shim.

The relay stands in for an inexpensive single-board access point placed
between the camera and the rest of the network: it lifts the body out of
every camera datagram past the 28 header bytes, seals it with a pre-shared
key, and re-sends the sealed body under a freshly synthesized header.
Fragments and too-short datagrams are never forwarded.  The shim undoes the
sealing on the player side and silently drops anything that fails
authentication.

Both transforms run inside the simulator as interposer hooks, and over real
UDP sockets via `UdpRelay`.
"""

from __future__ import annotations

import os
import socket
import threading
from dataclasses import dataclass, replace

from .core import (
    ChannelError,
    DeterministicRng,
    Endpoint,
    Packet,
    Protection,
    RELAY_OVERHEAD,
    Transport,
    UDP_HEADER_LEN,
    header_is_fragment,
    make_udp_header,
    prf,
    relay_open,
    relay_seal,
)

HEADER_SKIP = UDP_HEADER_LEN
ENCRYPT_QUEUE = 1
DECRYPT_QUEUE = 2


@dataclass(frozen=True)
class RelayConfig:
    camera_source: Endpoint
    shared_key: bytes
    queue_id_encrypt: int = ENCRYPT_QUEUE
    queue_id_decrypt: int = DECRYPT_QUEUE
    header_skip: int = HEADER_SKIP
    mtu: int = 2048
    drop_fragments: bool = True

    def __post_init__(self):
        if self.header_skip != HEADER_SKIP:
            raise ValueError(f"header_skip must be {HEADER_SKIP}")
        if self.queue_id_encrypt == self.queue_id_decrypt:
            raise ValueError("encrypt and decrypt queues must differ")
        if len(self.shared_key) != 32:
            raise ValueError("shared key must be 32 bytes")


@dataclass
class RelayStats:
    forwarded: int = 0
    frag_dropped: int = 0
    tampered: int = 0

    def line(self) -> str:
        return (f"forwarded={self.forwarded}"
                f" frag_dropped={self.frag_dropped}"
                f" tampered={self.tampered}")


class EncryptingRelay:
    """In-simulator relay; install as an interposer hook on the camera link."""

    def __init__(self, config: RelayConfig, relay_endpoint: Endpoint,
                 nonce_seed: bytes):
        self.config = config
        self.relay_endpoint = relay_endpoint
        self.key_id = prf(config.shared_key, b"relay-key-id")[:8].hex()
        self.stats = RelayStats()
        self._nonce_rng = DeterministicRng(nonce_seed)
        self._ident = 0

    def relay_encrypt(self, packet: Packet) -> Packet | None:
        """Seal one camera datagram; None means the packet is dropped."""
        cfg = self.config
        if packet.transport is not Transport.UDP \
                or packet.src.node != cfg.camera_source.node:
            return packet
        payload = packet.payload
        if len(payload) < cfg.header_skip + 1:
            self.stats.frag_dropped += 1
            return None
        if cfg.drop_fragments and header_is_fragment(payload):
            self.stats.frag_dropped += 1
            return None
        if len(payload) > cfg.mtu:
            self.stats.frag_dropped += 1
            return None
        sealed = relay_seal(cfg.shared_key, self._nonce_rng.take(24),
                            payload[cfg.header_skip:])
        header = make_udp_header(self.relay_endpoint, packet.dst,
                                 len(sealed), self._ident)
        self._ident += 1
        self.stats.forwarded += 1
        return Packet(
            src=self.relay_endpoint, dst=packet.dst,
            transport=Transport.UDP, protection=Protection.RELAY,
            payload=header + sealed, key_ref=self.key_id,
        )

    def hook(self, fabric, link, packet: Packet) -> Packet | None:
        return self.relay_encrypt(packet)


class PlayerShim:
    """Player-side decrypt hook for relay-sealed datagrams."""

    def __init__(self, shared_key: bytes, relay_node: str):
        self.shared_key = shared_key
        self.relay_node = relay_node
        self.stats = RelayStats()

    def matches(self, packet: Packet) -> bool:
        return (packet.transport is Transport.UDP
                and packet.src.node == self.relay_node)

    def process(self, packet: Packet) -> Packet | None:
        return self.shim_decrypt(packet)

    def shim_decrypt(self, packet: Packet) -> Packet | None:
        """Open one relay datagram; None means drop (tamper detected)."""
        if not self.matches(packet):
            return packet
        payload = packet.payload
        if len(payload) < HEADER_SKIP + RELAY_OVERHEAD:
            self.stats.tampered += 1
            return None
        try:
            body = relay_open(self.shared_key, payload[HEADER_SKIP:])
        except ChannelError:
            self.stats.tampered += 1
            return None
        self.stats.forwarded += 1
        return replace(packet, payload=body, protection=Protection.PLAIN, key_ref="")


# -----------------------------------------------------------------------------
# Real-socket mode.

def parse_hostport(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host:
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


def load_key_file(path: str) -> bytes:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read().strip()
    if len(text) != 64:
        raise ValueError(f"key file must hold 64 hex chars, got {len(text)}")
    return bytes.fromhex(text)


class UdpRelay:
    """Datagram relay over real sockets.

    In encrypt mode each inbound datagram is treated like a queued raw
    packet: the first 28 bytes are header, the rest is sealed and re-sent
    under a fresh synthesized header.  In decrypt mode the transform is the
    shim's: skip the header, open the record, forward the bare body.
    """

    def __init__(self, listen: tuple[str, int], forward: tuple[str, int],
                 key: bytes, mtu: int = 2048, mode: str = "encrypt",
                 nonce_seed: bytes | None = None):
        if mode not in ("encrypt", "decrypt"):
            raise ValueError(f"unknown mode {mode!r}")
        if len(key) != 32:
            raise ValueError("key must be 32 bytes")
        self.listen = listen
        self.forward = forward
        self.key = key
        self.mtu = mtu
        self.mode = mode
        self.stats = RelayStats()
        self._nonce_rng = DeterministicRng(
            nonce_seed if nonce_seed is not None else os.urandom(32))
        self._ident = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._sock: socket.socket | None = None
        self.bound_port: int | None = None

    def start(self) -> None:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.bind(self.listen)
        sock.settimeout(0.1)
        self._sock = sock
        self.bound_port = sock.getsockname()[1]
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def _loop(self) -> None:
        out = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            while not self._stop.is_set():
                try:
                    data, _ = self._sock.recvfrom(65535)
                except socket.timeout:
                    continue
                except OSError:
                    break
                forwarded = self._transform(data)
                if forwarded is not None:
                    out.sendto(forwarded, self.forward)
        finally:
            out.close()

    def _transform(self, data: bytes) -> bytes | None:
        if len(data) > self.mtu:
            self.stats.frag_dropped += 1
            return None
        if len(data) < HEADER_SKIP + 1:
            self.stats.frag_dropped += 1
            return None
        if self.mode == "encrypt":
            if header_is_fragment(data):
                self.stats.frag_dropped += 1
                return None
            sealed = relay_seal(self.key, self._nonce_rng.take(24),
                                data[HEADER_SKIP:])
            src = Endpoint("relay", self.listen[1] or self.bound_port or 0)
            dst = Endpoint("peer", self.forward[1])
            header = make_udp_header(src, dst, len(sealed), self._ident)
            self._ident += 1
            self.stats.forwarded += 1
            return header + sealed
        try:
            body = relay_open(self.key, data[HEADER_SKIP:])
        except ChannelError:
            self.stats.tampered += 1
            return None
        self.stats.forwarded += 1
        return body

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        if self._sock is not None:
            self._sock.close()

    def run_forever(self, stop_event: threading.Event | None = None) -> None:
        """Block until stopped; used by the CLI."""
        event = stop_event or self._stop
        while not event.wait(0.2):
            pass
        self.stop()
