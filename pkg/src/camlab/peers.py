"""Companion app, cloud server stub, and third-party player clients.

The app speaks the sealed control protocol and the proprietary stream; the
players speak plaintext RTSP directives (directly, or after an ONVIF
Profile-S login).  All clients pin the identity of the peer they are willing
to open a sealed channel with.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    AuthError,
    CONTROL_PORT,
    ChannelBook,
    ChannelError,
    Endpoint,
    FrameChunk,
    ONVIF_PORT,
    ONVIF_SERVICE_PATH,
    OpaqueChannel,
    Packet,
    PinningError,
    Protection,
    ProtocolError,
    RTSP_PORT,
    RTSP_STREAM_PATH,
    StreamKey,
    Transport,
    UDP_HEADER_LEN,
    Unavailable,
    derive_stream_key,
    scan_frames,
    stream_open,
)
from .camera import response_tag
from .netsim import Fabric

CLOUD_IDENTITY = "vendor-cloud"
DEVICE_IDENTITY = "vendor-device"


@dataclass(frozen=True)
class Account:
    username: str
    password: str
    secret: bytes


def pinned_connect(book: ChannelBook, channel_id: str,
                   pinned_identity: str, presented_identity: str) -> OpaqueChannel:
    """Open a sealed channel iff the presented identity is the pinned one."""
    if presented_identity != pinned_identity:
        raise PinningError(
            f"refusing channel {channel_id}: presented {presented_identity!r},"
            f" pinned {pinned_identity!r}"
        )
    return book.establish(channel_id)


class AppClient:
    """The owner's companion app."""

    def __init__(self, fabric: Fabric, node: str, port: int, account: Account,
                 cloud_node: str = "cloud"):
        self.node = node
        self.port = port
        self.account = account
        self.cloud_node = cloud_node
        self.stok: str | None = None
        self.alerts_received = 0
        self.tamper_drops = 0
        self._camera_channel: OpaqueChannel | None = None
        self._camera_endpoint: Endpoint | None = None
        self._alert_channel: OpaqueChannel | None = None
        self._stream_key: StreamKey | None = None
        self._stream_packets: list[Packet] = []
        fabric.attach(node, self)

    @property
    def endpoint(self) -> Endpoint:
        return Endpoint(self.node, self.port)

    def connect_camera(self, book: ChannelBook, camera_node: str,
                       presented_identity: str) -> None:
        self._camera_channel = pinned_connect(
            book, f"{self.node}->{camera_node}", DEVICE_IDENTITY, presented_identity)
        self._camera_endpoint = Endpoint(camera_node, CONTROL_PORT)

    def set_alert_channel(self, channel: OpaqueChannel) -> None:
        self._alert_channel = channel

    # -- inbound ---------------------------------------------------------------

    def receive(self, fabric: Fabric, packet: Packet):
        if packet.protection is Protection.STREAM:
            self._stream_packets.append(packet)
            return None
        if packet.protection is Protection.TLS and packet.src.node == self.cloud_node \
                and self._alert_channel is not None:
            try:
                text = self._alert_channel.unseal(packet.payload)
            except ChannelError:
                self.tamper_drops += 1
                return None
            if text.startswith(b"alert"):
                self.alerts_received += 1
        return None

    # -- control plane -----------------------------------------------------------

    def control(self, fabric: Fabric, text: str) -> str:
        if self._camera_channel is None or self._camera_endpoint is None:
            raise ChannelError("app not connected to a camera")
        sealed = self._camera_channel.seal(text.encode())
        outcome, responses = fabric.request(Packet(
            src=self.endpoint, dst=self._camera_endpoint,
            transport=Transport.TCP, protection=Protection.TLS,
            payload=sealed, key_ref=self._camera_channel.channel_id,
        ))
        if not outcome.delivered:
            raise Unavailable(f"request {outcome.status}")
        for response in responses:
            if response.protection is Protection.TLS \
                    and response.src == self._camera_endpoint:
                return self._camera_channel.unseal(response.payload).decode()
        raise Unavailable("camera did not answer")

    def _checked(self, fabric: Fabric, text: str) -> str:
        reply = self.control(fabric, text)
        if reply.startswith("err auth"):
            raise AuthError(reply)
        if reply.startswith("err"):
            raise ProtocolError(reply)
        return reply

    def login(self, fabric: Fabric) -> str:
        reply = self._checked(
            fabric, f"login user={self.account.username} pass={self.account.password}")
        self.stok = _field(reply, "stok")
        return self.stok

    def _require_stok(self, fabric: Fabric) -> str:
        if self.stok is None:
            self.login(fabric)
        return self.stok

    def provision_third_party(self, fabric: Fabric, user: str, password: str) -> None:
        stok = self._require_stok(fabric)
        self._checked(fabric, f"settings stok={stok} op=create_user user={user} pass={password}")

    def set_motion(self, fabric: Fabric, enabled: bool) -> None:
        stok = self._require_stok(fabric)
        value = "on" if enabled else "off"
        self._checked(fabric, f"settings stok={stok} op=set_motion value={value}")

    # -- proprietary stream ---------------------------------------------------------

    def start_stream(self, fabric: Fabric) -> StreamKey:
        """Run the nonce handshake and ask the camera to start streaming."""
        stok = self._require_stok(fabric)
        reply = self._checked(fabric, f"stream-init stok={stok}")
        nonce = bytes.fromhex(_field(reply, "nonce"))
        key = derive_stream_key(self.account.secret, nonce)
        tag = response_tag(key, nonce)
        reply = self._checked(
            fabric, f"stream-go stok={stok} tag={tag} to={self.node}:{self.port}")
        if _field(reply, "key") != key.key_id:
            raise ChannelError("camera derived a different stream key")
        self._stream_key = key
        self._stream_packets.clear()
        return key

    def finish_stream(self, fabric: Fabric) -> list[FrameChunk]:
        """Stop the stream and decrypt everything received so far."""
        if self._stream_key is None:
            raise ChannelError("no stream in progress")
        stok = self._require_stok(fabric)
        self._checked(fabric, f"stream-stop stok={stok}")
        frames: list[FrameChunk] = []
        for seq, packet in enumerate(self._stream_packets):
            body = packet.payload[UDP_HEADER_LEN:]
            data = stream_open(self._stream_key, seq, body)
            found, _ = scan_frames(data)
            frames.extend(found)
        self._stream_key = None
        self._stream_packets.clear()
        return sorted(frames, key=lambda f: f.frame_index)

    def stream_session(self, fabric: Fabric, ticks: int) -> list[FrameChunk]:
        """Convenience wrapper for scripts running outside the event loop."""
        self.start_stream(fabric)
        fabric.advance(fabric.now + ticks)
        return self.finish_stream(fabric)


class CloudServer:
    """Store-and-fanout stub for the vendor cloud."""

    identity = CLOUD_IDENTITY

    def __init__(self, fabric: Fabric, node: str, book: ChannelBook):
        self.node = node
        self.book = book
        self.notifications_received = 0
        self.alerts_sent = 0
        self._devices: dict[str, list[tuple[Endpoint, OpaqueChannel]]] = {}
        fabric.attach(node, self)

    def register_device(self, account: str, endpoint: Endpoint,
                        channel: OpaqueChannel) -> None:
        self._devices.setdefault(account, []).append((endpoint, channel))

    def receive(self, fabric: Fabric, packet: Packet):
        if packet.protection is not Protection.TLS or not packet.key_ref:
            return None
        try:
            text = self.book.unseal(packet.key_ref, packet.payload).decode()
        except (ChannelError, UnicodeDecodeError):
            return None
        if text.startswith("motion "):
            self.notifications_received += 1
            return self.server_fanout(text)
        return None

    def server_fanout(self, notification: str) -> list[Packet]:
        """One alert per device registered to the notifying account."""
        account = _field(notification, "acct")
        alerts = []
        for endpoint, channel in self._devices.get(account, ()):
            body = f"alert kind=motion seq={self.alerts_sent}"
            self.alerts_sent += 1
            alerts.append(Packet(
                src=Endpoint(self.node, CONTROL_PORT), dst=endpoint,
                transport=Transport.TCP, protection=Protection.TLS,
                payload=channel.seal(body.encode()), key_ref=channel.channel_id,
            ))
        return alerts


class PlayerClient:
    """Third-party video player (direct RTSP, or ONVIF Profile-S login first)."""

    def __init__(self, fabric: Fabric, node: str, port: int):
        self.node = node
        self.port = port
        self.shim = None                    # optional fixguard.PlayerShim
        self.tamper_drops = 0
        self._data: list[bytes] = []
        fabric.attach(node, self)

    @property
    def endpoint(self) -> Endpoint:
        return Endpoint(self.node, self.port)

    def receive(self, fabric: Fabric, packet: Packet):
        if packet.dst != self.endpoint:
            return None
        if self.shim is not None and self.shim.matches(packet):
            opened = self.shim.process(packet)
            if opened is None:
                self.tamper_drops += 1
            else:
                self._data.append(opened.payload)
            return None
        if packet.protection is Protection.PLAIN and packet.transport is Transport.UDP:
            if len(packet.payload) >= UDP_HEADER_LEN:
                self._data.append(packet.payload[UDP_HEADER_LEN:])
        return None

    def _directive(self, fabric: Fabric, camera_node: str, port: int, line: str) -> str:
        outcome, responses = fabric.request(Packet(
            src=self.endpoint, dst=Endpoint(camera_node, port),
            transport=Transport.TCP, protection=Protection.PLAIN,
            payload=line.encode(),
        ))
        if not outcome.delivered:
            raise Unavailable(f"request {outcome.status}")
        for response in responses:
            if response.transport is Transport.TCP \
                    and response.protection is Protection.PLAIN:
                return response.payload.decode()
        raise Unavailable("camera did not answer")

    def _checked(self, fabric: Fabric, camera_node: str, port: int, line: str) -> str:
        reply = self._directive(fabric, camera_node, port, line)
        if reply.startswith("ERR 401") or reply.startswith("ERR 403"):
            raise AuthError(reply)
        if reply.startswith("ERR"):
            raise ProtocolError(reply)
        return reply

    def start_session(self, fabric: Fabric, camera_node: str,
                      username: str, password: str, kind: str = "rtsp_direct") -> None:
        creds = f"creds={username}:{password}"
        if kind == "onvif_profile_s":
            self._checked(fabric, camera_node, ONVIF_PORT,
                          f"LOGIN {ONVIF_SERVICE_PATH} {creds}")
        elif kind != "rtsp_direct":
            raise ValueError(f"unknown player kind {kind!r}")
        self._checked(fabric, camera_node, RTSP_PORT, f"DESCRIBE {RTSP_STREAM_PATH} {creds}")
        self._checked(fabric, camera_node, RTSP_PORT, f"SETUP {RTSP_STREAM_PATH} {creds}")
        self._data.clear()
        self._checked(fabric, camera_node, RTSP_PORT, f"PLAY {RTSP_STREAM_PATH} {creds}")

    def finish_session(self, fabric: Fabric, camera_node: str,
                       username: str, password: str) -> list[FrameChunk]:
        creds = f"creds={username}:{password}"
        self._checked(fabric, camera_node, RTSP_PORT, f"PAUSE {RTSP_STREAM_PATH} {creds}")
        frames: list[FrameChunk] = []
        for data in self._data:
            found, _ = scan_frames(data)
            frames.extend(found)
        self._data.clear()
        return sorted(frames, key=lambda f: f.frame_index)

    def player_session(self, fabric: Fabric, camera_node: str, username: str,
                       password: str, ticks: int, kind: str = "rtsp_direct") -> list[FrameChunk]:
        """Convenience wrapper for scripts running outside the event loop."""
        self.start_session(fabric, camera_node, username, password, kind)
        fabric.advance(fabric.now + ticks)
        return self.finish_session(fabric, camera_node, username, password)


def _field(text: str, key: str) -> str:
    for part in text.split(" "):
        k, sep, value = part.partition("=")
        if sep and k == key:
            return value
    raise ChannelError(f"missing field {key!r} in {text!r}")
