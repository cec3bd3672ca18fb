"""Simulated entry-level IP camera.

Models credential login with session tokens, settings changes, the
proprietary encrypted streaming flow, the third-party RTSP/ONVIF plaintext
flow, fixed-size motion notifications, and an inbound-overload crash with
reboot.  By design the device accepts and counts every inbound packet; it
never filters.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from enum import Enum

from .core import (
    AuthError,
    CONTROL_PORT,
    ChannelBook,
    ChannelError,
    DeterministicRng,
    Endpoint,
    FormatError,
    MOTION_PLAINTEXT_LEN,
    MotionEvent,
    NONCE_LEN,
    ONVIF_PORT,
    ONVIF_SERVICE_PATH,
    OpaqueChannel,
    Packet,
    Protection,
    RTSP_PORT,
    RTSP_STREAM_PATH,
    STOK_BYTES,
    STREAM_PORT,
    FrameChunk,
    StreamKey,
    Transport,
    Unavailable,
    derive_stream_key,
    encode_frame,
    keystream,
    make_udp_header,
    prf,
    stream_seal,
)
from .netsim import Fabric

DEFAULT_INBOUND_BUDGET = 200
DEFAULT_OVERLOAD_TICKS = 3
DEFAULT_REBOOT_TICKS = 30
DEFAULT_FRAME_RATE = 15
DEFAULT_CHUNK_BODY_LEN = 1200

# Source port the camera uses when it acts as a client toward the cloud.
CAMERA_CLIENT_PORT = 33000


class CameraMode(Enum):
    ONLINE = "ONLINE"
    CRASHED = "CRASHED"
    REBOOTING = "REBOOTING"


@dataclass(frozen=True)
class StokSession:
    stok: str
    account: str
    created: int


@dataclass
class StreamSession:
    sid: str
    src_port: int
    dst: Endpoint
    key: StreamKey | None      # None for the plaintext third-party stream
    next_index: int = 0


def response_tag(key: StreamKey, nonce: bytes) -> str:
    """Client proof for the proprietary stream handshake."""
    return hmac.new(key.key, nonce, hashlib.sha256).hexdigest()


class Camera:
    def __init__(
        self,
        fabric: Fabric,
        node: str,
        seed: bytes,
        owner_user: str,
        owner_pass: str,
        account_secret: bytes,
        channels: ChannelBook,
        inbound_budget: int = DEFAULT_INBOUND_BUDGET,
        overload_ticks: int = DEFAULT_OVERLOAD_TICKS,
        reboot_ticks: int = DEFAULT_REBOOT_TICKS,
        frame_rate: int = DEFAULT_FRAME_RATE,
        chunk_body_len: int = DEFAULT_CHUNK_BODY_LEN,
        motion_enabled: bool = True,
    ):
        self._fabric = fabric
        self.node = node
        self.owner_user = owner_user
        self.owner_pass = owner_pass
        self.account_secret = account_secret
        self.channels = channels
        self.inbound_budget = inbound_budget
        self.overload_ticks = overload_ticks
        self.reboot_ticks = reboot_ticks
        self.frame_rate = frame_rate
        self.chunk_body_len = chunk_body_len
        self.motion_enabled = motion_enabled

        self._token_rng = DeterministicRng(prf(seed, b"camera-stok"))
        self._nonce_rng = DeterministicRng(prf(seed, b"camera-nonce"))
        self._video_key = prf(seed, b"camera-video")

        self.sessions: dict[str, StokSession] = {}
        self.issued_tokens: set[str] = set()
        self.third_party_user: tuple[str, str] | None = None
        self.settings_audit: list[tuple[int, str, str]] = []
        self.notification_log: list[int] = []

        self._pending_handshake: dict[str, tuple[bytes, StreamKey]] = {}
        self._streams: dict[str, StreamSession] = {}
        self._rtsp_setup: dict[Endpoint, bool] = {}

        self._cloud_channel: OpaqueChannel | None = None
        self._cloud_endpoint: Endpoint | None = None

        # Inbound-overload bookkeeping.
        self._count_tick = -1
        self._count = 0
        self._streak = 0
        self._last_eval_tick: int | None = None
        self.crash_windows: list[tuple[int, int]] = []

        self._ident = 0
        self._notify_seq = 0
        self.frames_emitted = 0

        fabric.attach(node, self)
        fabric.add_tick_end(self._end_of_tick)

    # -- state ---------------------------------------------------------------

    def mode_at(self, tick: int) -> CameraMode:
        for lo, hi in self.crash_windows:
            if lo <= tick <= hi:
                return CameraMode.CRASHED if tick == lo else CameraMode.REBOOTING
        return CameraMode.ONLINE

    @property
    def mode(self) -> CameraMode:
        return self.mode_at(self._fabric.now)

    def _require_online(self) -> None:
        if self.mode is not CameraMode.ONLINE:
            raise Unavailable(f"camera is {self.mode.value}")

    def _crash(self, tick: int) -> None:
        self.crash_windows.append((tick + 1, tick + self.reboot_ticks))
        self.sessions.clear()
        self._pending_handshake.clear()
        self._streams.clear()
        self._rtsp_setup.clear()
        self._streak = 0

    def _end_of_tick(self, tick: int) -> None:
        count = self._count if self._count_tick == tick else 0
        if self.mode_at(tick) is not CameraMode.ONLINE:
            self._streak = 0
            return
        if self._last_eval_tick is not None and tick > self._last_eval_tick + 1:
            self._streak = 0     # at least one quiet tick passed
        self._last_eval_tick = tick
        if count > self.inbound_budget:
            self._streak += 1
        else:
            self._streak = 0
        if self._streak >= self.overload_ticks:
            self._crash(tick)

    # -- inbound dispatch ------------------------------------------------------

    def receive(self, fabric: Fabric, packet: Packet):
        if self._count_tick != fabric.now:
            self._count_tick = fabric.now
            self._count = 0
        self._count += 1
        if self.mode is not CameraMode.ONLINE:
            return None
        if packet.dst.port == CONTROL_PORT and packet.protection is Protection.TLS:
            return self._control_packet(fabric, packet)
        if packet.dst.port == RTSP_PORT and packet.protection is Protection.PLAIN \
                and packet.transport is Transport.TCP:
            return self._directive_packet(fabric, packet, onvif=False)
        if packet.dst.port == ONVIF_PORT and packet.protection is Protection.PLAIN \
                and packet.transport is Transport.TCP:
            return self._directive_packet(fabric, packet, onvif=True)
        return None    # honored (counted) but not a service request

    # -- control plane (sealed, port 443) --------------------------------------

    def _control_packet(self, fabric: Fabric, packet: Packet):
        try:
            text = self.channels.unseal(packet.key_ref, packet.payload).decode()
        except (ChannelError, UnicodeDecodeError):
            return None
        try:
            reply = self._handle_control(text)
        except AuthError:
            reply = "err auth"
        except (FormatError, KeyError, ValueError):
            reply = "err request"
        sealed = self.channels.seal(packet.key_ref, reply.encode())
        return [Packet(
            src=Endpoint(self.node, CONTROL_PORT), dst=packet.src,
            transport=Transport.TCP, protection=Protection.TLS,
            payload=sealed, key_ref=packet.key_ref,
        )]

    def _handle_control(self, text: str) -> str:
        fields = _parse_fields(text)
        op = fields.get("", "")
        if op == "login":
            stok = self.login(fields.get("user", ""), fields.get("pass", ""))
            return f"ok stok={stok}"
        if op == "settings":
            setting = fields.get("op", "")
            if setting == "create_user":
                self.settings_request(fields["stok"], "create_third_party_user",
                                      user=fields.get("user", ""),
                                      password=fields.get("pass", ""))
            elif setting == "set_motion":
                self.settings_request(fields["stok"], "set_motion",
                                      enabled=fields.get("value") == "on")
            else:
                raise FormatError(f"unknown setting {setting!r}")
            return "ok"
        if op == "stream-init":
            nonce = self.start_proprietary_stream(fields["stok"])
            return f"ok nonce={nonce.hex()}"
        if op == "stream-go":
            node, _, port = fields.get("to", "").rpartition(":")
            dst = Endpoint(node, int(port))
            key_id = self.begin_proprietary_stream(fields["stok"], fields.get("tag", ""), dst)
            return f"ok key={key_id}"
        if op == "stream-stop":
            self.stop_proprietary_stream(fields["stok"])
            return "ok"
        raise FormatError(f"unknown op {op!r}")

    def login(self, username: str, password: str) -> str:
        self._require_online()
        if username != self.owner_user or password != self.owner_pass:
            raise AuthError("bad credentials")
        stok = self._token_rng.take(STOK_BYTES).hex()
        self.sessions[stok] = StokSession(stok=stok, account=username,
                                          created=self._fabric.now)
        self.issued_tokens.add(stok)
        return stok

    def _session_for(self, stok: str) -> StokSession:
        session = self.sessions.get(stok)
        if session is None:
            raise AuthError("unknown stok")
        return session

    def settings_request(self, stok: str, op: str, **params) -> None:
        self._require_online()
        self._session_for(stok)
        if op == "create_third_party_user":
            self.third_party_user = (params["user"], params["password"])
        elif op == "set_motion":
            self.motion_enabled = bool(params["enabled"])
        else:
            raise FormatError(f"unknown settings op {op!r}")
        self.settings_audit.append((self._fabric.now, op, stok))

    # -- proprietary stream (sealed, UDP port 8800) -----------------------------

    def start_proprietary_stream(self, stok: str) -> bytes:
        self._require_online()
        self._session_for(stok)
        nonce = self._nonce_rng.take(NONCE_LEN)
        self._pending_handshake[stok] = (nonce, derive_stream_key(self.account_secret, nonce))
        return nonce

    def begin_proprietary_stream(self, stok: str, tag: str, dst: Endpoint) -> str:
        self._require_online()
        self._session_for(stok)
        pending = self._pending_handshake.get(stok)
        if pending is None:
            raise AuthError("no stream handshake in progress")
        nonce, key = pending
        if not hmac.compare_digest(tag, response_tag(key, nonce)):
            raise AuthError("bad response tag")
        del self._pending_handshake[stok]
        sid = f"prop:{stok}"
        self._streams[sid] = StreamSession(sid=sid, src_port=STREAM_PORT, dst=dst, key=key)
        self._schedule_pump(sid)
        return key.key_id

    def stop_proprietary_stream(self, stok: str) -> None:
        self._session_for(stok)
        self._streams.pop(f"prop:{stok}", None)

    # -- third-party flow (plaintext directives) --------------------------------

    def _directive_packet(self, fabric: Fabric, packet: Packet, onvif: bool):
        try:
            line = packet.payload.decode()
        except UnicodeDecodeError:
            return None
        reply = self.rtsp_request(packet.src, line, onvif=onvif)
        return [Packet(
            src=Endpoint(self.node, packet.dst.port), dst=packet.src,
            transport=Transport.TCP, protection=Protection.PLAIN,
            payload=reply.encode(),
        )]

    def rtsp_request(self, client: Endpoint, line: str, onvif: bool = False) -> str:
        self._require_online()
        parts = line.split(" ")
        if len(parts) != 3 or not parts[2].startswith("creds="):
            return "ERR 400"
        directive, path, creds = parts[0], parts[1], parts[2][len("creds="):]
        user, _, password = creds.partition(":")
        if self.third_party_user is None:
            return "ERR 403"
        if (user, password) != self.third_party_user:
            return "ERR 401"
        if onvif:
            if directive == "LOGIN" and path == ONVIF_SERVICE_PATH:
                return f"OK profile=S stream=rtsp://{self.node}:{RTSP_PORT}{RTSP_STREAM_PATH}"
            return "ERR 400"
        if directive == "DESCRIBE":
            if path != RTSP_STREAM_PATH:
                return "ERR 404"
            return f"OK path={RTSP_STREAM_PATH} codec=synth-h264 rate={self.frame_rate}"
        if directive == "SETUP":
            self._rtsp_setup[client] = True
            return "OK transport=udp"
        if directive == "PLAY":
            if not self._rtsp_setup.get(client):
                return "ERR 455"
            sid = f"rtsp:{client}"
            if sid not in self._streams:
                self._streams[sid] = StreamSession(sid=sid, src_port=RTSP_PORT,
                                                   dst=client, key=None)
                self._schedule_pump(sid)
            return "OK"
        if directive == "PAUSE":
            self._streams.pop(f"rtsp:{client}", None)
            return "OK"
        return "ERR 400"

    # -- stream emission ---------------------------------------------------------

    def frame_chunk(self, index: int) -> FrameChunk:
        body = keystream(self._video_key, index.to_bytes(4, "big"), self.chunk_body_len)
        return FrameChunk(nal_type=5 if index % 15 == 0 else 1,
                          frame_index=index, body=body)

    def _schedule_pump(self, sid: str) -> None:
        self._fabric.at(self._fabric.now + 1, lambda: self._pump(sid), label=f"pump:{sid}")

    def _pump(self, sid: str) -> None:
        session = self._streams.get(sid)
        if session is None:
            return
        if self.mode is not CameraMode.ONLINE:
            self._streams.pop(sid, None)
            return
        src = Endpoint(self.node, session.src_port)
        for _ in range(self.frame_rate):
            data = encode_frame(self.frame_chunk(session.next_index))
            if session.key is not None:
                body = stream_seal(session.key, session.next_index, data)
                protection, key_ref = Protection.STREAM, session.key.key_id
            else:
                body = data
                protection, key_ref = Protection.PLAIN, ""
            header = make_udp_header(src, session.dst, len(body), self._ident)
            self._ident += 1
            self._fabric.send(Packet(
                src=src, dst=session.dst, transport=Transport.UDP,
                protection=protection, payload=header + body, key_ref=key_ref,
            ))
            session.next_index += 1
            self.frames_emitted += 1
        self._schedule_pump(sid)

    # -- motion notifications ------------------------------------------------------

    def register_cloud(self, channel: OpaqueChannel, endpoint: Endpoint) -> None:
        self._cloud_channel = channel
        self._cloud_endpoint = endpoint

    def on_motion(self, event: MotionEvent) -> int:
        """Emit one fixed-size sealed notification per unit of magnitude."""
        if not self.motion_enabled or self.mode is not CameraMode.ONLINE:
            return 0
        if self._cloud_channel is None or self._cloud_endpoint is None:
            raise FormatError("camera has no cloud channel")
        for _ in range(event.magnitude):
            head = f"motion acct={self.owner_user} seq={self._notify_seq} ts={event.ts}"
            self._notify_seq += 1
            plaintext = head.encode().ljust(MOTION_PLAINTEXT_LEN, b".")
            assert len(plaintext) == MOTION_PLAINTEXT_LEN
            self._fabric.send(Packet(
                src=Endpoint(self.node, CAMERA_CLIENT_PORT),
                dst=self._cloud_endpoint,
                transport=Transport.TCP, protection=Protection.TLS,
                payload=self._cloud_channel.seal(plaintext),
                key_ref=self._cloud_channel.channel_id,
            ))
            self.notification_log.append(self._fabric.now)
        return event.magnitude


def _parse_fields(text: str) -> dict[str, str]:
    """First token is the op (key ''); the rest are key=value fields."""
    fields: dict[str, str] = {}
    parts = text.split(" ")
    if parts:
        fields[""] = parts[0]
    for part in parts[1:]:
        key, sep, value = part.partition("=")
        if sep:
            fields[key] = value
    return fields
