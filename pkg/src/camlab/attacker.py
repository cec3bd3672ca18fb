"""Exploitation suite: traffic side-channel analysis, notification denial,
flood generation, and cleartext stream extraction.

The analysis functions are pure functions of a capture log; the flood and
the drop rule run inside the event fabric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import (
    CaptureLog,
    DeterministicRng,
    Endpoint,
    FrameChunk,
    MOTION_WIRE_LEN,
    Packet,
    Protection,
    Transport,
    UDP_HEADER_LEN,
    make_udp_header,
    scan_frames,
)
from .netsim import Fabric

BIN_WIDTH = 600          # ticks per timeline bin (10 minutes)
FLOOD_BODY_LEN = 64


@dataclass(frozen=True)
class TimelineBin:
    bin_start: int
    count: int


def motion_oracle(capture: CaptureLog, target_len: int = MOTION_WIRE_LEN,
                  camera: str = "camera", server: str = "cloud",
                  bin_width: int = BIN_WIDTH, origin: int = 0,
                  length_only: bool = False) -> list[TimelineBin]:
    """Count suspected motion notifications per time bin.

    A record matches when it flows camera to server with the target on-wire
    length; unless `length_only` is set, it must also carry the sealed-channel
    protection tag, which excludes plaintext chatter of coincidental size.
    """
    if not capture:
        return []
    last_ts = max(rec.ts for rec in capture)
    n_bins = (last_ts - origin) // bin_width + 1
    counts = [0] * n_bins
    for rec in capture:
        p = rec.packet
        if p.src.node != camera or p.dst.node != server:
            continue
        if len(p.payload) != target_len:
            continue
        if not length_only and p.protection is not Protection.TLS:
            continue
        index = (rec.ts - origin) // bin_width
        if 0 <= index < n_bins:
            counts[index] += 1
    return [TimelineBin(bin_start=origin + i * bin_width, count=c)
            for i, c in enumerate(counts)]


def drop_motion_notifications(camera: str = "camera", server: str = "cloud",
                              target_len: int = MOTION_WIRE_LEN):
    """Interposer hook that silently drops suspected motion notifications."""
    def hook(fabric, link, packet: Packet):
        if (packet.src.node == camera and packet.dst.node == server
                and packet.protection is Protection.TLS
                and len(packet.payload) == target_len):
            return None
        return packet
    return hook


def flood(fabric: Fabric, src: Endpoint, target: Endpoint, rate: int,
          duration: int, rng: DeterministicRng, start_tick: int | None = None) -> None:
    """Schedule `rate` junk datagrams per tick at the target for `duration` ticks."""
    start = fabric.now if start_tick is None else start_tick
    ident = [0]

    def burst():
        for _ in range(rate):
            body = rng.take(FLOOD_BODY_LEN)
            header = make_udp_header(src, target, len(body), ident[0])
            ident[0] += 1
            fabric.send(Packet(
                src=src, dst=target, transport=Transport.UDP,
                protection=Protection.PLAIN, payload=header + body,
            ))

    for offset in range(duration):
        fabric.at(start + offset, burst, label=f"flood:{start + offset}")


@dataclass
class ExtractResult:
    frames: list[FrameChunk] = field(default_factory=list)
    skipped_bytes: int = 0
    datagrams_scanned: int = 0


def extract_with_stats(capture: CaptureLog) -> ExtractResult:
    """Pull frame chunks out of every plaintext datagram in a capture.

    Non-plaintext records are ignored entirely; undecodable bytes inside
    plaintext datagrams are skipped and counted.
    """
    result = ExtractResult()
    for rec in capture:
        p = rec.packet
        if p.transport is not Transport.UDP or p.protection is not Protection.PLAIN:
            continue
        result.datagrams_scanned += 1
        if len(p.payload) < UDP_HEADER_LEN:
            result.skipped_bytes += len(p.payload)
            continue
        frames, skipped = scan_frames(p.payload[UDP_HEADER_LEN:])
        result.frames.extend(frames)
        result.skipped_bytes += skipped
    result.frames.sort(key=lambda f: f.frame_index)
    return result


def extract_stream(capture: CaptureLog) -> list[FrameChunk]:
    return extract_with_stats(capture).frames
