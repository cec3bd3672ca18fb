"""Shared testbed builders for the unit tests.

`build_lab` wires the standard single-switch testbed by hand (camera, app,
cloud, attacker, player) so the lower-level APIs get exercised without the
scenario layer.  `build_pi_lab` inserts the relay host between the camera
and the switch.
"""

from dataclasses import dataclass

import pytest

from camlab.camera import Camera
from camlab.core import CONTROL_PORT, ChannelBook, Endpoint, prf
from camlab.netsim import Fabric, Topology
from camlab.peers import (
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
ATTACKER = Endpoint("attacker", 6666)


@dataclass
class Lab:
    fabric: Fabric
    topology: Topology
    book: ChannelBook
    account: Account
    camera: Camera
    cloud: CloudServer
    app: AppClient
    player: PlayerClient


def _wire(topology: Topology, seed: int, camera_knobs: dict) -> Lab:
    fabric = Fabric(topology)
    seed_bytes = seed.to_bytes(8, "big")
    book = ChannelBook(prf(seed_bytes, b"channels"))
    account = Account(OWNER_USER, OWNER_PASS, prf(seed_bytes, b"account-secret"))
    camera = Camera(fabric, "camera", seed_bytes, OWNER_USER, OWNER_PASS,
                    account.secret, book, **camera_knobs)
    cloud = CloudServer(fabric, "cloud", book)
    channel = pinned_connect(book, "camera->cloud", CLOUD_IDENTITY, cloud.identity)
    camera.register_cloud(channel, Endpoint("cloud", CONTROL_PORT))
    app = AppClient(fabric, "app", APP_PORT, account)
    app.connect_camera(book, "camera", DEVICE_IDENTITY)
    alert_channel = pinned_connect(book, "cloud->app", CLOUD_IDENTITY, cloud.identity)
    app.set_alert_channel(alert_channel)
    cloud.register_device(OWNER_USER, app.endpoint, alert_channel)
    player = PlayerClient(fabric, "player", PLAYER_PORT)
    return Lab(fabric, topology, book, account, camera, cloud, app, player)


def build_lab(seed: int = 5, **camera_knobs) -> Lab:
    topology = Topology()
    for node in ("camera", "app", "cloud", "attacker", "player", "switch"):
        topology.add_node(node)
    for node in ("camera", "app", "cloud", "attacker", "player"):
        topology.add_link(node, "switch", "main")
    topology.add_tap("atk", "camera", "switch")
    topology.add_interposer_site("attacker", "camera", "switch")
    return _wire(topology, seed, camera_knobs)


def build_pi_lab(seed: int = 5, **camera_knobs) -> Lab:
    topology = Topology()
    for node in ("camera", "pi", "app", "cloud", "attacker", "player", "switch"):
        topology.add_node(node)
    topology.add_link("camera", "pi", "camera-ap")
    for node in ("pi", "app", "cloud", "attacker", "player"):
        topology.add_link(node, "switch", "main")
    topology.add_tap("atk", "pi", "switch")
    topology.add_interposer_site("pi", "camera", "pi")
    return _wire(topology, seed, camera_knobs)


@pytest.fixture
def lab() -> Lab:
    return build_lab()


def oracle_trace(counts, budget, overload_ticks, reboot_ticks, horizon):
    """Reference reimplementation of the camera overload state machine.

    counts maps tick -> inbound packets; returns one CameraMode per tick.
    """
    from camlab.camera import CameraMode

    modes = []
    windows = []
    streak = 0
    for tick in range(horizon + 1):
        window = next(((lo, hi) for lo, hi in windows if lo <= tick <= hi), None)
        if window is not None:
            modes.append(CameraMode.CRASHED if tick == window[0]
                         else CameraMode.REBOOTING)
            streak = 0
            continue
        modes.append(CameraMode.ONLINE)
        if counts.get(tick, 0) > budget:
            streak += 1
        else:
            streak = 0
        if streak >= overload_ticks:
            windows.append((tick + 1, tick + reboot_ticks))
            streak = 0
    return modes


def inbound_counts(capture, camera="camera"):
    counts = {}
    for rec in capture:
        if rec.packet.dst.node == camera:
            counts[rec.ts] = counts.get(rec.ts, 0) + 1
    return counts
