"""Scenario configs and the lab runner.

A scenario is a plain-text file: key/value settings, explicit topology
lines, a scripted event list, and the expectations the run is checked
against.  Node names carry roles: camera, app, cloud, attacker, player,
pi, switch.  The bundled scenarios cover one experiment each plus the
baselines.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from . import attacker as attacker_mod
from .attacker import (
    BIN_WIDTH,
    ExtractResult,
    TimelineBin,
    drop_motion_notifications,
    extract_with_stats,
    motion_oracle,
)
from .camera import CAMERA_CLIENT_PORT, Camera, CameraMode
from .core import (
    CONTROL_PORT,
    AuthError,
    ChannelBook,
    DeterministicRng,
    Endpoint,
    MotionEvent,
    Packet,
    ParseError,
    Protection,
    RTSP_PORT,
    STREAM_PORT,
    Transport,
    Unavailable,
    prf,
)
from .fixguard import EncryptingRelay, PlayerShim, RelayConfig
from .netsim import Fabric, Topology
from .peers import (
    Account,
    AppClient,
    CLOUD_IDENTITY,
    CloudServer,
    DEVICE_IDENTITY,
    PlayerClient,
    pinned_connect,
)

OWNER_USER = "owner"
OWNER_PASS = "0wn3r-pass"
APP_PORT = 40000
PLAYER_PORT = 9000
ATTACKER_PORT = 6666
RELAY_PORT = 5600

_ACTIONS = {
    "app-login", "stale-stok-probe", "provision-user", "set-motion",
    "app-stream", "player-stream", "motion", "flood", "drop-motion", "chatter",
}

_EXPECT_ARGS = {
    "crash": 0,
    "no-crash": 0,
    "crash-window": 2,
    "unavailable-during-down": 0,
    "stale-stok-rejected": 0,
    "timeline-matches-truth": 0,
    "bin": 2,
    "alerts": 1,
    "alerts-equal-notifications": 0,
    "notifications-min": 1,
    "extracted": 1,
    "extracted-equals-player": 0,
    "player-frames": 1,
    "app-frames": 1,
    "attacker-plain-udp": 1,
    "tamper": 1,
    "relay-forwarded": 1,
}


@dataclass(frozen=True)
class ScenarioEvent:
    tick: int
    action: str
    params: dict
    line: int


@dataclass(frozen=True)
class ScenarioExpect:
    kind: str
    args: tuple
    line: int


@dataclass
class Scenario:
    name: str = "unnamed"
    seed: int = 0
    duration: int = 0
    wall_start: str | None = None
    nodes: list = field(default_factory=list)
    links: list = field(default_factory=list)          # (a, b, segment)
    taps: list = field(default_factory=list)           # (tap_id, a, b)
    interposer_sites: list = field(default_factory=list)
    inbound_budget: int = 200
    overload_ticks: int = 3
    reboot_ticks: int = 30
    frame_rate: int = 15
    chunk_body_len: int = 1200
    motion_enabled: bool = True
    relay_key: bytes | None = None
    shim: bool = False
    events: list = field(default_factory=list)
    expects: list = field(default_factory=list)
    text: str = ""


def _int(token: str, lineno: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {token!r}", lineno)


def parse_scenario(text: str) -> Scenario:
    sc = Scenario(text=text)
    seen_nodes: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        key, args = tokens[0], tokens[1:]

        if key == "name":
            if len(args) != 1:
                raise ParseError("name takes one value", lineno)
            sc.name = args[0]
        elif key == "seed":
            sc.seed = _int(args[0], lineno, "seed") if args else 0
        elif key == "duration":
            sc.duration = _int(args[0], lineno, "duration")
        elif key == "wall-start":
            if len(args) != 1 or ":" not in args[0]:
                raise ParseError("wall-start takes HH:MM", lineno)
            sc.wall_start = args[0]
        elif key == "node":
            if len(args) != 1:
                raise ParseError("node takes one id", lineno)
            sc.nodes.append(args[0])
            seen_nodes.add(args[0])
        elif key == "link":
            if len(args) not in (2, 4) or (len(args) == 4 and args[2] != "segment"):
                raise ParseError("link takes: <a> <b> [segment <name>]", lineno)
            a, b = args[0], args[1]
            if a not in seen_nodes or b not in seen_nodes:
                raise ParseError(f"link references undeclared node: {a} {b}", lineno)
            sc.links.append((a, b, args[3] if len(args) == 4 else "main"))
        elif key == "tap":
            if len(args) != 3:
                raise ParseError("tap takes: <id> <a> <b>", lineno)
            sc.taps.append(tuple(args))
        elif key == "interpose":
            if len(args) != 3:
                raise ParseError("interpose takes: <node> <a> <b>", lineno)
            sc.interposer_sites.append(tuple(args))
        elif key == "inbound-budget":
            sc.inbound_budget = _int(args[0], lineno, "inbound-budget")
        elif key == "overload-ticks":
            sc.overload_ticks = _int(args[0], lineno, "overload-ticks")
        elif key == "reboot-ticks":
            sc.reboot_ticks = _int(args[0], lineno, "reboot-ticks")
        elif key == "frame-rate":
            sc.frame_rate = _int(args[0], lineno, "frame-rate")
        elif key == "chunk-body":
            sc.chunk_body_len = _int(args[0], lineno, "chunk-body")
        elif key == "motion":
            if args not in (["on"], ["off"]):
                raise ParseError("motion takes on|off", lineno)
            sc.motion_enabled = args == ["on"]
        elif key == "relay-key":
            if len(args) != 1 or len(args[0]) != 64:
                raise ParseError("relay-key takes 64 hex chars", lineno)
            try:
                sc.relay_key = bytes.fromhex(args[0])
            except ValueError:
                raise ParseError("relay-key is not valid hex", lineno)
        elif key == "shim":
            if args not in (["on"], ["off"]):
                raise ParseError("shim takes on|off", lineno)
            sc.shim = args == ["on"]
        elif key == "at":
            if len(args) < 2:
                raise ParseError("at takes: <tick> <action> [k v ...]", lineno)
            tick = _int(args[0], lineno, "event tick")
            action = args[1]
            if action not in _ACTIONS:
                raise ParseError(f"unknown action {action!r}", lineno)
            rest = args[2:]
            if len(rest) % 2:
                raise ParseError("event parameters must be key value pairs", lineno)
            params = dict(zip(rest[::2], rest[1::2]))
            sc.events.append(ScenarioEvent(tick, action, params, lineno))
        elif key == "expect":
            if not args:
                raise ParseError("expect takes a check name", lineno)
            kind, rest = args[0], tuple(args[1:])
            if kind not in _EXPECT_ARGS:
                raise ParseError(f"unknown expectation {kind!r}", lineno)
            if len(rest) != _EXPECT_ARGS[kind]:
                raise ParseError(
                    f"{kind} takes {_EXPECT_ARGS[kind]} argument(s)", lineno)
            sc.expects.append(ScenarioExpect(kind, rest, lineno))
        else:
            raise ParseError(f"unknown directive {key!r}", lineno)

    if sc.duration <= 0:
        raise ParseError("scenario needs a positive duration")
    if "camera" not in seen_nodes:
        raise ParseError("scenario needs a camera node")
    for ev in sc.events:
        if not 0 <= ev.tick <= sc.duration:
            raise ParseError(f"event tick {ev.tick} outside duration", ev.line)
    return sc


# -----------------------------------------------------------------------------
# The runner.

class LabRun:
    """Builds the testbed from a scenario, replays the script, and keeps
    everything needed for analysis and reporting."""

    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        seed_bytes = self.seed.to_bytes(8, "big")

        topology = Topology()
        for node in scenario.nodes:
            topology.add_node(node)
        for a, b, segment in scenario.links:
            topology.add_link(a, b, segment)
        for tap_id, a, b in scenario.taps:
            topology.add_tap(tap_id, a, b)
        for node, a, b in scenario.interposer_sites:
            topology.add_interposer_site(node, a, b)
        self.fabric = Fabric(topology)

        self.book = ChannelBook(prf(seed_bytes, b"channels"))
        self.account = Account(OWNER_USER, OWNER_PASS, prf(seed_bytes, b"account-secret"))

        self.camera = Camera(
            self.fabric, "camera", seed_bytes, OWNER_USER, OWNER_PASS,
            self.account.secret, self.book,
            inbound_budget=scenario.inbound_budget,
            overload_ticks=scenario.overload_ticks,
            reboot_ticks=scenario.reboot_ticks,
            frame_rate=scenario.frame_rate,
            chunk_body_len=scenario.chunk_body_len,
            motion_enabled=scenario.motion_enabled,
        )

        self.cloud = None
        self.app = None
        self.player = None
        self.relay = None
        nodes = set(scenario.nodes)

        if "cloud" in nodes:
            self.cloud = CloudServer(self.fabric, "cloud", self.book)
            channel = pinned_connect(self.book, "camera->cloud",
                                     CLOUD_IDENTITY, self.cloud.identity)
            self.camera.register_cloud(channel, Endpoint("cloud", CONTROL_PORT))
        if "app" in nodes:
            self.app = AppClient(self.fabric, "app", APP_PORT, self.account)
            self.app.connect_camera(self.book, "camera", DEVICE_IDENTITY)
            if self.cloud is not None:
                alert_channel = pinned_connect(self.book, "cloud->app",
                                               CLOUD_IDENTITY, self.cloud.identity)
                self.app.set_alert_channel(alert_channel)
                self.cloud.register_device(OWNER_USER, self.app.endpoint, alert_channel)
        if "player" in nodes:
            self.player = PlayerClient(self.fabric, "player", PLAYER_PORT)

        if scenario.relay_key is not None and "pi" in nodes:
            config = RelayConfig(camera_source=Endpoint("camera", RTSP_PORT),
                                 shared_key=scenario.relay_key)
            self.relay = EncryptingRelay(config, Endpoint("pi", RELAY_PORT),
                                         prf(seed_bytes, b"relay-nonce"))
            self.fabric.set_interposer("pi", "camera", "pi", self.relay.hook)
        if scenario.shim:
            if scenario.relay_key is None or self.player is None:
                raise ParseError("shim needs a relay-key and a player node")
            self.player.shim = PlayerShim(scenario.relay_key, "pi")

        self._attacker_rng = DeterministicRng(prf(seed_bytes, b"attacker"))
        self._chatter_ident = 0

        self.events_log: list[str] = []
        self.first_stok: str | None = None
        self.third_creds: tuple[str, str] | None = None
        self.app_frames = None
        self.player_frames = None
        self.motion_schedule: list[tuple[int, int]] = []
        self.flood_packets = 0
        self.dropper_active = False

        for event in scenario.events:
            self._register(event)

        self.timeline: list[TimelineBin] = []
        self.truth: list[TimelineBin] = []
        self.extract = ExtractResult()
        self.checks: list[tuple[str, bool, str]] = []

    # -- event handling ------------------------------------------------------

    def _log(self, tick: int, action: str, result: str) -> None:
        self.events_log.append(f"tick={tick} action={action} result={result}")

    def _register(self, event: ScenarioEvent) -> None:
        handler = getattr(self, "_ev_" + event.action.replace("-", "_"))
        if event.action in ("app-stream", "player-stream"):
            ticks = int(event.params.get("ticks", "10"))
            self.fabric.at(event.tick, lambda e=event: handler(e, phase="start"),
                           label=f"{event.action}@{event.tick}")
            self.fabric.at(event.tick + ticks + 1,
                           lambda e=event: handler(e, phase="finish"),
                           label=f"{event.action}-end@{event.tick}")
        else:
            self.fabric.at(event.tick, lambda e=event: handler(e),
                           label=f"{event.action}@{event.tick}")

    def _need(self, role, what: str):
        if role is None:
            raise ParseError(f"scenario uses {what} but has no such node")
        return role

    def _ev_app_login(self, event: ScenarioEvent) -> None:
        app = self._need(self.app, "app")
        try:
            stok = app.login(self.fabric)
            if self.first_stok is None:
                self.first_stok = stok
            self._log(self.fabric.now, "app-login", f"ok stok={stok}")
        except Unavailable:
            self._log(self.fabric.now, "app-login", "unavailable")
        except AuthError:
            self._log(self.fabric.now, "app-login", "auth-rejected")

    def _ev_stale_stok_probe(self, event: ScenarioEvent) -> None:
        app = self._need(self.app, "app")
        if self.first_stok is None:
            self._log(self.fabric.now, "stale-stok-probe", "no-stok")
            return
        try:
            reply = app.control(
                self.fabric, f"settings stok={self.first_stok} op=set_motion value=on")
        except Unavailable:
            self._log(self.fabric.now, "stale-stok-probe", "unavailable")
            return
        result = "auth-rejected" if reply.startswith("err auth") else "honored"
        self._log(self.fabric.now, "stale-stok-probe", result)

    def _ev_provision_user(self, event: ScenarioEvent) -> None:
        app = self._need(self.app, "app")
        user = event.params.get("user", "viewer")
        password = event.params.get("pass", "viewerpass")
        try:
            app.provision_third_party(self.fabric, user, password)
            self.third_creds = (user, password)
            self._log(self.fabric.now, "provision-user", f"ok user={user}")
        except (Unavailable, AuthError) as exc:
            self._log(self.fabric.now, "provision-user",
                      type(exc).__name__.lower())

    def _ev_set_motion(self, event: ScenarioEvent) -> None:
        app = self._need(self.app, "app")
        enabled = event.params.get("value", "on") == "on"
        try:
            app.set_motion(self.fabric, enabled)
            self._log(self.fabric.now, "set-motion", f"ok value={event.params.get('value')}")
        except (Unavailable, AuthError) as exc:
            self._log(self.fabric.now, "set-motion", type(exc).__name__.lower())

    def _ev_app_stream(self, event: ScenarioEvent, phase: str) -> None:
        app = self._need(self.app, "app")
        if phase == "start":
            try:
                app.start_stream(self.fabric)
                self._log(self.fabric.now, "app-stream", "started")
            except (Unavailable, AuthError) as exc:
                self._log(self.fabric.now, "app-stream", type(exc).__name__.lower())
            return
        if app._stream_key is None:
            self._log(self.fabric.now, "app-stream", "no-stream")
            return
        try:
            self.app_frames = app.finish_stream(self.fabric)
            self._log(self.fabric.now, "app-stream",
                      f"finished frames={len(self.app_frames)}")
        except (Unavailable, AuthError) as exc:
            self._log(self.fabric.now, "app-stream", type(exc).__name__.lower())

    def _ev_player_stream(self, event: ScenarioEvent, phase: str) -> None:
        player = self._need(self.player, "player")
        kind = {"rtsp": "rtsp_direct", "onvif": "onvif_profile_s"}.get(
            event.params.get("kind", "rtsp"))
        if kind is None:
            raise ParseError(f"unknown player kind {event.params.get('kind')!r}",
                             event.line)
        user, password = self.third_creds or ("nobody", "nopass")
        if phase == "start":
            try:
                player.start_session(self.fabric, "camera", user, password, kind)
                self._log(self.fabric.now, "player-stream", "playing")
            except Exception as exc:
                self._log(self.fabric.now, "player-stream",
                          type(exc).__name__.lower())
            return
        try:
            self.player_frames = player.finish_session(self.fabric, "camera",
                                                       user, password)
            self._log(self.fabric.now, "player-stream",
                      f"finished frames={len(self.player_frames)}")
        except Exception as exc:
            self._log(self.fabric.now, "player-stream", type(exc).__name__.lower())

    def _ev_motion(self, event: ScenarioEvent) -> None:
        magnitude = int(event.params.get("magnitude", "1"))
        emitted = self.camera.on_motion(MotionEvent(ts=self.fabric.now,
                                                    magnitude=magnitude))
        self.motion_schedule.append((self.fabric.now, magnitude))
        self._log(self.fabric.now, "motion", f"emitted={emitted}")

    def _ev_flood(self, event: ScenarioEvent) -> None:
        rate = int(event.params.get("rate", "400"))
        duration = int(event.params.get("duration", "5"))
        attacker_mod.flood(
            self.fabric, Endpoint("attacker", ATTACKER_PORT),
            Endpoint("camera", CONTROL_PORT), rate, duration, self._attacker_rng)
        self.flood_packets += rate * duration
        self._log(self.fabric.now, "flood", f"scheduled rate={rate} duration={duration}")

    def _ev_drop_motion(self, event: ScenarioEvent) -> None:
        self.fabric.set_interposer("attacker", "camera", "switch",
                                   drop_motion_notifications())
        self.dropper_active = True
        self._log(self.fabric.now, "drop-motion", "installed")

    def _ev_chatter(self, event: ScenarioEvent) -> None:
        length = int(event.params.get("len", "523"))
        head = f"OPTIONS keepalive seq={self._chatter_ident}".encode()
        self._chatter_ident += 1
        payload = head.ljust(length, b".")[:length]
        self.fabric.send(Packet(
            src=Endpoint("camera", CAMERA_CLIENT_PORT),
            dst=Endpoint("cloud", CONTROL_PORT),
            transport=Transport.TCP, protection=Protection.PLAIN,
            payload=payload,
        ))
        self._log(self.fabric.now, "chatter", f"len={length}")

    # -- run and analyze -------------------------------------------------------

    def run(self) -> None:
        self.fabric.advance(self.scenario.duration)
        self._analyze()
        self._evaluate()

    @property
    def atk_capture(self):
        if "atk" in self.fabric.captures:
            return self.fabric.captures["atk"]
        for log in self.fabric.captures.values():
            return log
        return []

    def _analyze(self) -> None:
        capture = self.atk_capture
        self.timeline = motion_oracle(capture)
        self.truth = self._truth_bins(len(self.timeline))
        self.extract = extract_with_stats(capture)

    def _truth_bins(self, n_bins: int) -> list[TimelineBin]:
        counts = [0] * n_bins
        for ts in self.camera.notification_log:
            index = ts // BIN_WIDTH
            if 0 <= index < n_bins:
                counts[index] += 1
        return [TimelineBin(bin_start=i * BIN_WIDTH, count=c)
                for i, c in enumerate(counts)]

    def state_trace(self) -> list[CameraMode]:
        return [self.camera.mode_at(t) for t in range(self.scenario.duration + 1)]

    def down_windows(self) -> list[tuple[int, int]]:
        return list(self.camera.crash_windows)

    def stats(self) -> dict:
        equals_player = (self.player_frames is not None
                         and self.extract.frames == self.player_frames)
        stats = {
            "scenario": self.scenario.name,
            "seed": self.seed,
            "duration": self.scenario.duration,
            "notifications_emitted": len(self.camera.notification_log),
            "notifications_received": 0 if self.cloud is None else self.cloud.notifications_received,
            "alerts_delivered": 0 if self.app is None else self.app.alerts_received,
            "frames_emitted": self.camera.frames_emitted,
            "frames_app": -1 if self.app_frames is None else len(self.app_frames),
            "frames_player": -1 if self.player_frames is None else len(self.player_frames),
            "frames_extracted": len(self.extract.frames),
            "extract_skipped_bytes": self.extract.skipped_bytes,
            "extract_datagrams": self.extract.datagrams_scanned,
            "extracted_equals_player": int(equals_player),
            "crashes": len(self.camera.crash_windows),
            "crash_windows": ";".join(f"{lo}-{hi}" for lo, hi in self.camera.crash_windows) or "-",
            "flood_packets": self.flood_packets,
            "dropper_active": int(self.dropper_active),
            "relay_active": int(self.relay is not None),
            "relay_forwarded": 0 if self.relay is None else self.relay.stats.forwarded,
            "relay_frag_dropped": 0 if self.relay is None else self.relay.stats.frag_dropped,
            "shim_active": int(self.player is not None and self.player.shim is not None),
            "shim_tampered": 0 if self.player is None or self.player.shim is None
                             else self.player.shim.stats.tampered,
        }
        for tap_id, log in self.fabric.captures.items():
            stats[f"capture_records_{tap_id}"] = len(log)
        return stats

    # -- checks ------------------------------------------------------------------

    def _all_records(self):
        for log in self.fabric.captures.values():
            yield from log

    def _evaluate(self) -> None:
        checks = self.checks
        checks.clear()

        bad = sum(1 for rec in self._all_records()
                  if rec.packet.protection is Protection.TLS
                  and rec.packet.src.node == "camera"
                  and rec.packet.dst.node == "cloud"
                  and len(rec.packet.payload) != 523)
        checks.append(("notification-wire-length", bad == 0,
                       f"{bad} sealed camera-to-cloud records off-size"))

        windows = self.camera.crash_windows
        noisy = sum(1 for rec in self._all_records()
                    if rec.packet.src.node == "camera"
                    and any(lo <= rec.ts <= hi for lo, hi in windows))
        checks.append(("crash-silence", noisy == 0,
                       f"{noisy} camera packets while down"))

        leaks = sum(1 for rec in self._all_records()
                    if rec.packet.src == Endpoint("camera", STREAM_PORT)
                    and rec.packet.protection is not Protection.STREAM)
        checks.append(("proprietary-protection", leaks == 0,
                       f"{leaks} proprietary stream records not sealed"))

        odd = sum(1 for rec in self._all_records()
                  if rec.packet.src == Endpoint("camera", RTSP_PORT)
                  and rec.packet.transport is Transport.UDP
                  and rec.packet.protection is not Protection.PLAIN)
        checks.append(("third-party-plaintext", odd == 0,
                       f"{odd} third-party stream records not plaintext"))

        rogue = sum(1 for _, _, stok in self.camera.settings_audit
                    if stok not in self.camera.issued_tokens)
        checks.append(("settings-need-stok", rogue == 0,
                       f"{len(self.camera.settings_audit)} honored settings ops,"
                       f" {rogue} without an issued token"))

        for expect in self.scenario.expects:
            ok, detail = self._check_expect(expect)
            checks.append((f"expect:{expect.kind}", ok, detail))

    def _check_expect(self, expect: ScenarioExpect) -> tuple[bool, str]:
        kind, args = expect.kind, expect.args
        stats = self.stats()
        if kind == "crash":
            return stats["crashes"] >= 1, f"crashes={stats['crashes']}"
        if kind == "no-crash":
            return stats["crashes"] == 0, f"crashes={stats['crashes']}"
        if kind == "crash-window":
            want = (int(args[0]), int(args[1]))
            got = self.camera.crash_windows
            return want in got, f"windows={got}"
        if kind == "unavailable-during-down":
            probes = []
            for line in self.events_log:
                fields = dict(part.split("=", 1) for part in line.split(" ") if "=" in part)
                if fields.get("action") == "app-login":
                    tick = int(fields["tick"])
                    if any(lo <= tick <= hi for lo, hi in self.camera.crash_windows):
                        probes.append(fields["result"])
            ok = bool(probes) and all(r == "unavailable" for r in probes)
            return ok, f"probes={probes}"
        if kind == "stale-stok-rejected":
            results = [line.split("result=")[1] for line in self.events_log
                       if "action=stale-stok-probe" in line]
            return results == ["auth-rejected"], f"results={results}"
        if kind == "timeline-matches-truth":
            ok = [ (b.bin_start, b.count) for b in self.timeline ] == \
                 [ (b.bin_start, b.count) for b in self.truth ]
            return ok, f"bins={len(self.timeline)}"
        if kind == "bin":
            start, want = int(args[0]), int(args[1])
            got = {b.bin_start: b.count for b in self.timeline}.get(start)
            return got == want, f"bin[{start}]={got}"
        if kind == "alerts":
            return stats["alerts_delivered"] == int(args[0]), \
                f"alerts={stats['alerts_delivered']}"
        if kind == "alerts-equal-notifications":
            return stats["alerts_delivered"] == stats["notifications_emitted"], \
                f"alerts={stats['alerts_delivered']} notifications={stats['notifications_emitted']}"
        if kind == "notifications-min":
            return stats["notifications_emitted"] >= int(args[0]), \
                f"notifications={stats['notifications_emitted']}"
        if kind == "extracted":
            return stats["frames_extracted"] == int(args[0]), \
                f"extracted={stats['frames_extracted']}"
        if kind == "extracted-equals-player":
            return bool(stats["extracted_equals_player"]), \
                f"extracted={stats['frames_extracted']} player={stats['frames_player']}"
        if kind == "player-frames":
            return stats["frames_player"] == int(args[0]), \
                f"player={stats['frames_player']}"
        if kind == "app-frames":
            return stats["frames_app"] == int(args[0]), f"app={stats['frames_app']}"
        if kind == "attacker-plain-udp":
            count = sum(1 for rec in self.atk_capture
                        if rec.packet.transport is Transport.UDP
                        and rec.packet.protection is Protection.PLAIN)
            return count == int(args[0]), f"plain-udp={count}"
        if kind == "tamper":
            return stats["shim_tampered"] == int(args[0]), \
                f"tampered={stats['shim_tampered']}"
        if kind == "relay-forwarded":
            return stats["relay_forwarded"] == int(args[0]), \
                f"forwarded={stats['relay_forwarded']}"
        return False, f"unknown expectation {kind}"

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _ in self.checks)


# -----------------------------------------------------------------------------
# Bundled scenarios.

_BASE_TOPOLOGY = """\
node camera
node app
node cloud
node attacker
node player
node switch
link camera switch segment main
link app switch segment main
link cloud switch segment main
link attacker switch segment main
link player switch segment main
tap atk camera switch
interpose attacker camera switch
"""

_PI_TOPOLOGY = """\
node camera
node pi
node app
node cloud
node attacker
node player
node switch
link camera pi segment camera-ap
link pi switch segment main
link app switch segment main
link cloud switch segment main
link attacker switch segment main
link player switch segment main
tap atk pi switch
interpose pi camera pi
"""

_RELAY_KEY = "8c1f4b9e2d703a65514f8e9bb0c62d7ae3905f18c4762b3da8e1f05946372c1b"


def _overnight_events() -> str:
    # Per-bin notification counts shaped like an overnight suburban street:
    # busy before midnight, quietest around 03:00, busiest after 05:00.
    per_bin = [8, 7, 7, 6, 6, 5,
               10, 5, 4, 4, 3, 3,
               3, 2, 2, 2, 1, 1,
               1, 1, 0, 1, 0, 1,
               0, 0, 1,
               2, 2, 3,
               4, 5, 6, 7, 8, 9,
               11, 12, 13]
    lines = []
    for index, count in enumerate(per_bin):
        if count:
            lines.append(f"at {index * 600 + 300} motion magnitude {count}")
    return "\n".join(lines) + "\n"


BUILTIN_SCENARIOS = {
    "dos": (
        "name dos\n"
        "seed 7\n"
        "duration 120\n"
        "inbound-budget 200\n"
        "overload-ticks 3\n"
        "reboot-ticks 30\n"
        + _BASE_TOPOLOGY +
        "at 2 app-login\n"
        "at 5 motion magnitude 3\n"
        "at 10 flood rate 400 duration 8\n"
        "at 14 app-login\n"
        "at 20 app-login\n"
        "at 30 motion magnitude 2\n"
        "at 50 app-login\n"
        "at 52 stale-stok-probe\n"
        "expect crash\n"
        "expect crash-window 13 42\n"
        "expect unavailable-during-down\n"
        "expect stale-stok-rejected\n"
        "expect alerts 3\n"
    ),
    "overnight-motion": (
        "name overnight-motion\n"
        "seed 21\n"
        "duration 23400\n"
        "wall-start 23:00\n"
        + _BASE_TOPOLOGY +
        "at 1 app-login\n"
        + _overnight_events() +
        "at 7800 chatter len 523\n"
        "at 16500 chatter len 523\n"
        "expect timeline-matches-truth\n"
        "expect bin 3600 10\n"
        "expect alerts-equal-notifications\n"
        "expect notifications-min 100\n"
    ),
    "notification-denial": (
        "name notification-denial\n"
        "seed 13\n"
        "duration 1800\n"
        + _BASE_TOPOLOGY +
        "at 1 drop-motion\n"
        "at 2 app-login\n"
        "at 4 provision-user user viewer pass viewerpass\n"
        "at 100 motion magnitude 4\n"
        "at 200 player-stream kind rtsp ticks 20\n"
        "at 700 motion magnitude 6\n"
        "at 1300 motion magnitude 5\n"
        "expect alerts 0\n"
        "expect notifications-min 15\n"
        "expect player-frames 300\n"
        "expect timeline-matches-truth\n"
    ),
    "third-party-breach": (
        "name third-party-breach\n"
        "seed 11\n"
        "duration 60\n"
        + _BASE_TOPOLOGY +
        "at 2 app-login\n"
        "at 4 provision-user user viewer pass viewerpass\n"
        "at 10 player-stream kind rtsp ticks 20\n"
        "expect extracted 300\n"
        "expect extracted-equals-player\n"
        "expect player-frames 300\n"
    ),
    "third-party-fixed": (
        "name third-party-fixed\n"
        "seed 11\n"
        "duration 60\n"
        f"relay-key {_RELAY_KEY}\n"
        "shim on\n"
        + _PI_TOPOLOGY +
        "at 2 app-login\n"
        "at 4 provision-user user viewer pass viewerpass\n"
        "at 10 player-stream kind rtsp ticks 20\n"
        "expect extracted 0\n"
        "expect player-frames 300\n"
        "expect attacker-plain-udp 0\n"
        "expect tamper 0\n"
        "expect relay-forwarded 300\n"
    ),
    "proprietary-baseline": (
        "name proprietary-baseline\n"
        "seed 11\n"
        "duration 60\n"
        + _BASE_TOPOLOGY +
        "at 2 app-login\n"
        "at 10 app-stream ticks 20\n"
        "expect extracted 0\n"
        "expect app-frames 300\n"
    ),
}


def load_scenario(name_or_path: str) -> Scenario:
    if name_or_path in BUILTIN_SCENARIOS:
        return parse_scenario(BUILTIN_SCENARIOS[name_or_path])
    if os.path.exists(name_or_path):
        with open(name_or_path, "r", encoding="utf-8") as fh:
            return parse_scenario(fh.read())
    known = ", ".join(sorted(BUILTIN_SCENARIOS))
    raise ParseError(f"no scenario {name_or_path!r} (bundled: {known})")
