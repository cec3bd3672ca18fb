"""Shared domain types, the deterministic crypto model, and the byte-exact
wire formats (capture lines, frame chunks, datagram headers) used by every
other module.

All randomness is derived from explicit seeds, so replaying a scenario with
the same seed produces byte-identical traffic and capture files.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass, replace
from enum import Enum

# Sealing overheads are fixed per protection mode; ciphertext length is an
# affine function of plaintext length in every mode.
TLS_OVERHEAD = 16        # 8-byte record nonce + 8-byte tag
RELAY_OVERHEAD = 40      # 24-byte nonce + 16-byte tag
NONCE_LEN = 16           # camera handshake nonce
STOK_BYTES = 16          # session token, rendered as 32 hex chars

# Datagrams are modeled with their network+transport header bytes visible in
# the payload (20-byte IPv4-style + 8-byte UDP-style), mirroring what a raw
# packet-queue interceptor sees.  Connection-oriented records are modeled at
# application-record level and carry no such prefix.
UDP_HEADER_LEN = 28

# Motion notification plaintext is padded to a fixed size so the sealed
# record is always exactly 523 bytes on the wire.
MOTION_PLAINTEXT_LEN = 507
MOTION_WIRE_LEN = MOTION_PLAINTEXT_LEN + TLS_OVERHEAD

# Well-known camera ports.
CONTROL_PORT = 443
RTSP_PORT = 554
ONVIF_PORT = 2020
STREAM_PORT = 8800

ONVIF_SERVICE_PATH = "/onvif/device_service"
RTSP_STREAM_PATH = "/stream/1"


class LabError(Exception):
    """Base class for all lab errors."""


class FormatError(LabError):
    """Malformed value (wrong length, bad field, undecodable region)."""


class ParseError(LabError):
    """Malformed serialized input; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class ChannelError(LabError):
    """Unknown channel, or a sealed record that fails authentication."""


class AuthError(LabError):
    """Bad credentials, unknown session token, or a bad response tag."""


class Unavailable(LabError):
    """The device is crashed or rebooting and answers nothing."""


class PinningError(LabError):
    """Presented identity does not match the pinned one."""


class ProtocolError(LabError):
    """Directive sent out of order."""


class Transport(Enum):
    TCP = "TCP"
    UDP = "UDP"


class Protection(Enum):
    PLAIN = "PLAIN"
    TLS = "TLS"
    STREAM = "STREAM"
    RELAY = "RELAY"


@dataclass(frozen=True)
class Endpoint:
    node: str
    port: int

    def __post_init__(self):
        if not self.node or any(c in self.node for c in " :=\t\n"):
            raise FormatError(f"bad node id: {self.node!r}")
        if not 0 <= self.port <= 65535:
            raise FormatError(f"port out of range: {self.port}")

    def __str__(self) -> str:
        return f"{self.node}:{self.port}"


@dataclass(frozen=True)
class Packet:
    src: Endpoint
    dst: Endpoint
    transport: Transport
    protection: Protection
    payload: bytes
    # Channel or key id used by the legitimate endpoints to route the
    # record to the right key.  Not visible on the wire: taps drop it.
    key_ref: str = ""

    @property
    def wire_len(self) -> int:
        return len(self.payload)

    def observed(self) -> "Packet":
        """The packet as an eavesdropper records it (no key routing info)."""
        if not self.key_ref:
            return self
        return replace(self, key_ref="")


@dataclass(frozen=True)
class CaptureRecord:
    ts: int
    tap: str
    packet: Packet


# A capture log is a plain list of records, ordered by observation time.
CaptureLog = list


@dataclass(frozen=True)
class StreamKey:
    key: bytes
    iv: bytes
    key_id: str


@dataclass(frozen=True)
class MotionEvent:
    ts: int
    magnitude: int

    def __post_init__(self):
        if self.magnitude < 1:
            raise FormatError(f"motion magnitude must be >= 1, got {self.magnitude}")


# --------------------------------------------------------------------------
# Deterministic byte sources.

def prf(key: bytes, *parts: bytes) -> bytes:
    """Keyed 32-byte digest over length-prefixed parts."""
    h = hashlib.sha256()
    h.update(len(key).to_bytes(4, "big"))
    h.update(key)
    for part in parts:
        h.update(len(part).to_bytes(4, "big"))
        h.update(part)
    return h.digest()


def keystream(key: bytes, label: bytes, n: int) -> bytes:
    """n pseudorandom bytes bound to (key, label)."""
    out = bytearray()
    counter = 0
    while len(out) < n:
        out += prf(key, label, counter.to_bytes(8, "big"))
        counter += 1
    return bytes(out[:n])


def xor_bytes(data: bytes, mask: bytes) -> bytes:
    return bytes(a ^ b for a, b in zip(data, mask))


class DeterministicRng:
    """Seeded byte source; the draw sequence is stable across runs."""

    def __init__(self, seed: bytes):
        self._key = prf(seed, b"det-rng")
        self._counter = 0

    def take(self, n: int) -> bytes:
        out = keystream(self._key, self._counter.to_bytes(8, "big"), n)
        self._counter += 1
        return out


# --------------------------------------------------------------------------
# Opaque channels (the stand-in for TLS record protection).

class OpaqueChannel:
    """Length-disciplined sealed channel between two pinned identities.

    Sealed record layout: nonce(8) || body xor keystream || tag(8).
    The record reveals nothing but its length; overhead is TLS_OVERHEAD.
    """

    def __init__(self, channel_id: str, key: bytes, nonce_seed: bytes):
        self.channel_id = channel_id
        self._key = key
        self._nonce_rng = DeterministicRng(nonce_seed)

    def seal(self, plaintext: bytes) -> bytes:
        nonce = self._nonce_rng.take(8)
        body = xor_bytes(plaintext, keystream(self._key, nonce, len(plaintext)))
        tag = prf(self._key, b"tag", nonce, plaintext)[:8]
        record = nonce + body + tag
        assert len(record) == len(plaintext) + TLS_OVERHEAD
        return record

    def unseal(self, record: bytes) -> bytes:
        if len(record) < TLS_OVERHEAD:
            raise ChannelError(f"record too short: {len(record)} bytes")
        nonce, body, tag = record[:8], record[8:-8], record[-8:]
        plaintext = xor_bytes(body, keystream(self._key, nonce, len(body)))
        if not hmac.compare_digest(tag, prf(self._key, b"tag", nonce, plaintext)[:8]):
            raise ChannelError(f"bad record tag on channel {self.channel_id}")
        return plaintext


class ChannelBook:
    """Registry of established opaque channels, keyed by channel id."""

    def __init__(self, secret: bytes):
        self._secret = secret
        self._channels: dict[str, OpaqueChannel] = {}

    def establish(self, channel_id: str) -> OpaqueChannel:
        if channel_id not in self._channels:
            key = prf(self._secret, b"chan-key", channel_id.encode())
            nonce_seed = prf(self._secret, b"chan-nonce", channel_id.encode())
            self._channels[channel_id] = OpaqueChannel(channel_id, key, nonce_seed)
        return self._channels[channel_id]

    def get(self, channel_id: str) -> OpaqueChannel:
        if channel_id not in self._channels:
            raise ChannelError(f"unknown channel: {channel_id}")
        return self._channels[channel_id]

    def seal(self, channel_id: str, plaintext: bytes) -> bytes:
        return self.get(channel_id).seal(plaintext)

    def unseal(self, channel_id: str, record: bytes) -> bytes:
        return self.get(channel_id).unseal(record)


# --------------------------------------------------------------------------
# Proprietary stream key derivation and per-chunk sealing.

def derive_stream_key(account_secret: bytes, nonce: bytes) -> StreamKey:
    """Both ends derive the same key material from the handshake nonce."""
    if len(nonce) != NONCE_LEN:
        raise FormatError(f"nonce must be {NONCE_LEN} bytes, got {len(nonce)}")
    digest = hmac.new(account_secret, nonce, hashlib.sha512).digest()
    key, iv = digest[:32], digest[32:48]
    key_id = prf(key, b"stream-key-id", iv)[:8].hex()
    return StreamKey(key=key, iv=iv, key_id=key_id)


def stream_seal(sk: StreamKey, seq: int, data: bytes) -> bytes:
    """Seal one stream chunk; zero overhead, sequence-bound keystream."""
    mask = keystream(sk.key, sk.iv + seq.to_bytes(8, "big"), len(data))
    return xor_bytes(data, mask)


def stream_open(sk: StreamKey, seq: int, sealed: bytes) -> bytes:
    return stream_seal(sk, seq, sealed)


# --------------------------------------------------------------------------
# Authenticated relay sealing (the fix's tunnel layer).

def relay_seal(key: bytes, nonce: bytes, body: bytes) -> bytes:
    """nonce(24) || body xor keystream || tag(16); overhead RELAY_OVERHEAD."""
    if len(nonce) != 24:
        raise FormatError(f"relay nonce must be 24 bytes, got {len(nonce)}")
    sealed_body = xor_bytes(body, keystream(key, b"relay" + nonce, len(body)))
    tag = prf(key, b"relay-tag", nonce, sealed_body)[:16]
    record = nonce + sealed_body + tag
    assert len(record) == len(body) + RELAY_OVERHEAD
    return record


def relay_open(key: bytes, record: bytes) -> bytes:
    """Open a relay record; raises ChannelError on any tampering."""
    if len(record) < RELAY_OVERHEAD:
        raise ChannelError(f"relay record too short: {len(record)} bytes")
    nonce, sealed_body, tag = record[:24], record[24:-16], record[-16:]
    if not hmac.compare_digest(tag, prf(key, b"relay-tag", nonce, sealed_body)[:16]):
        raise ChannelError("relay record failed authentication")
    return xor_bytes(sealed_body, keystream(key, b"relay" + nonce, len(sealed_body)))


# --------------------------------------------------------------------------
# Synthetic video frame chunks.
#
# A chunk serializes as the 4-byte start code followed by the escaped
# concatenation of type byte, 4-byte big-endian frame index, and body.  The
# escaping inserts 0x03 after every 00 00 pair, so a start code can never
# appear anywhere after the real one; a scanner recovers exactly the chunks
# that were serialized.

START_CODE = b"\x00\x00\x00\x01"


@dataclass(frozen=True)
class FrameChunk:
    nal_type: int
    frame_index: int
    body: bytes

    def __post_init__(self):
        if not 0 <= self.nal_type <= 255:
            raise FormatError(f"nal_type out of range: {self.nal_type}")
        if not 0 <= self.frame_index <= 0xFFFFFFFF:
            raise FormatError(f"frame_index out of range: {self.frame_index}")


def escape_frame_bytes(data: bytes) -> bytes:
    out = bytearray()
    zeros = 0
    for b in data:
        if zeros == 2:
            out.append(0x03)
            zeros = 0
        out.append(b)
        zeros = zeros + 1 if b == 0 else 0
    return bytes(out)


def unescape_frame_bytes(data: bytes) -> bytes:
    out = bytearray()
    zeros = 0
    i = 0
    while i < len(data):
        b = data[i]
        if zeros == 2:
            if b != 0x03:
                raise FormatError(f"expected escape byte at offset {i}")
            zeros = 0
            i += 1
            continue
        out.append(b)
        zeros = zeros + 1 if b == 0 else 0
        i += 1
    return bytes(out)


def encode_frame(chunk: FrameChunk) -> bytes:
    inner = bytes([chunk.nal_type]) + chunk.frame_index.to_bytes(4, "big") + chunk.body
    return START_CODE + escape_frame_bytes(inner)


def decode_frame_region(region: bytes) -> FrameChunk:
    """Decode the escaped bytes between one start code and the next."""
    inner = unescape_frame_bytes(region)
    if len(inner) < 5:
        raise FormatError(f"frame region too short: {len(inner)} bytes")
    return FrameChunk(
        nal_type=inner[0],
        frame_index=int.from_bytes(inner[1:5], "big"),
        body=inner[5:],
    )


def scan_frames(data: bytes) -> tuple[list[FrameChunk], int]:
    """Scan a byte stream for serialized chunks.

    Returns the decoded chunks plus the count of bytes that did not belong
    to any decodable chunk.
    """
    frames: list[FrameChunk] = []
    skipped = 0
    starts = []
    pos = data.find(START_CODE)
    while pos != -1:
        starts.append(pos)
        pos = data.find(START_CODE, pos + len(START_CODE))
    if not starts:
        return frames, len(data)
    skipped += starts[0]
    bounds = starts + [len(data)]
    for lo, hi in zip(bounds, bounds[1:]):
        region = data[lo + len(START_CODE):hi]
        try:
            frames.append(decode_frame_region(region))
        except FormatError:
            skipped += hi - lo
    return frames, skipped


# --------------------------------------------------------------------------
# Synthesized datagram headers.

_IP_FLAG_DF = 0x4000
_IP_FLAG_MF = 0x2000


def node_addr(node: str) -> bytes:
    """Stable 4-byte pseudo-address for a node id."""
    return prf(b"node-addr", node.encode())[:4]


def make_udp_header(src: Endpoint, dst: Endpoint, body_len: int,
                    ident: int, fragment: bool = False) -> bytes:
    """28-byte IPv4+UDP style prefix for a datagram payload."""
    total_len = (UDP_HEADER_LEN + body_len) & 0xFFFF
    flags = _IP_FLAG_MF if fragment else _IP_FLAG_DF
    return struct.pack(
        ">BBHHHBBH4s4sHHHH",
        0x45, 0x00, total_len,
        ident & 0xFFFF, flags,
        64, 17, 0x0000,
        node_addr(src.node), node_addr(dst.node),
        src.port, dst.port, (8 + body_len) & 0xFFFF, 0x0000,
    )


def header_is_fragment(header: bytes) -> bool:
    if len(header) < UDP_HEADER_LEN:
        return False
    flags = struct.unpack_from(">H", header, 6)[0]
    return bool(flags & _IP_FLAG_MF)


# --------------------------------------------------------------------------
# Capture file codec.
#
# One UTF-8 line per record, fixed field order, exactly one space between
# fields:
#   ts=<int> tap=<id> src=<node>:<port> dst=<node>:<port> tr=<TCP|UDP>
#   prot=<PLAIN|TLS|STREAM|RELAY> len=<int> hex=<lowercase hex payload>

_CAPTURE_FIELDS = ("ts", "tap", "src", "dst", "tr", "prot", "len", "hex")


def encode_capture(log: CaptureLog) -> str:
    lines = []
    for rec in log:
        p = rec.packet
        lines.append(
            f"ts={rec.ts} tap={rec.tap} src={p.src} dst={p.dst}"
            f" tr={p.transport.value} prot={p.protection.value}"
            f" len={len(p.payload)} hex={p.payload.hex()}"
        )
    return "".join(line + "\n" for line in lines)


def _parse_endpoint(text: str, lineno: int) -> Endpoint:
    node, sep, port = text.rpartition(":")
    if not sep or not node:
        raise ParseError(f"bad endpoint {text!r}", lineno)
    try:
        return Endpoint(node, int(port))
    except (ValueError, FormatError) as exc:
        raise ParseError(f"bad endpoint {text!r}: {exc}", lineno)


def decode_capture(text: str) -> CaptureLog:
    log: CaptureLog = []
    last_ts = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split(" ")
        if len(parts) != len(_CAPTURE_FIELDS):
            raise ParseError(f"expected {len(_CAPTURE_FIELDS)} fields, got {len(parts)}", lineno)
        values = {}
        for key, part in zip(_CAPTURE_FIELDS, parts):
            prefix = key + "="
            if not part.startswith(prefix):
                raise ParseError(f"expected field {key!r}, got {part!r}", lineno)
            values[key] = part[len(prefix):]
        try:
            ts = int(values["ts"])
            wire_len = int(values["len"])
        except ValueError as exc:
            raise ParseError(str(exc), lineno)
        try:
            transport = Transport(values["tr"])
            protection = Protection(values["prot"])
        except ValueError as exc:
            raise ParseError(str(exc), lineno)
        try:
            payload = bytes.fromhex(values["hex"])
        except ValueError:
            raise ParseError(f"bad hex payload {values['hex']!r}", lineno)
        if len(payload) != wire_len:
            raise ParseError(f"len={wire_len} but payload has {len(payload)} bytes", lineno)
        if last_ts is not None and ts < last_ts:
            raise ParseError(f"ts={ts} goes backwards (previous {last_ts})", lineno)
        last_ts = ts
        packet = Packet(
            src=_parse_endpoint(values["src"], lineno),
            dst=_parse_endpoint(values["dst"], lineno),
            transport=transport,
            protection=protection,
            payload=payload,
        )
        log.append(CaptureRecord(ts=ts, tap=values["tap"], packet=packet))
    return log
