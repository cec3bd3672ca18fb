import random
import socket
import time

import pytest

from conftest import build_lab, build_pi_lab

from camlab.attacker import extract_stream
from camlab.core import (
    Endpoint,
    Packet,
    Protection,
    RELAY_OVERHEAD,
    Transport,
    UDP_HEADER_LEN,
    make_udp_header,
    prf,
    relay_open,
)
from camlab.fixguard import (
    EncryptingRelay,
    PlayerShim,
    RelayConfig,
    UdpRelay,
    load_key_file,
    parse_hostport,
)

VIEWER = ("viewer", "viewerpass")
KEY = prf(b"fix", b"shared-key")
CAMERA_554 = Endpoint("camera", 554)
PI = Endpoint("pi", 5600)


def make_relay(**overrides):
    config = RelayConfig(camera_source=CAMERA_554, shared_key=KEY, **overrides)
    return EncryptingRelay(config, PI, nonce_seed=b"relay-nonces")


def camera_datagram(body, dst=Endpoint("player", 9000), fragment=False):
    header = make_udp_header(CAMERA_554, dst, len(body), ident=1, fragment=fragment)
    return Packet(CAMERA_554, dst, Transport.UDP, Protection.PLAIN, header + body)


# ---------------------------------------------------------------------------
# The relay transform.

def test_relay_seals_past_the_header():
    relay = make_relay()
    body = b"\x00\x00\x00\x01" + b"F" * 1196       # 1200-byte pseudo chunk
    out = relay.relay_encrypt(camera_datagram(body))
    assert out is not None
    assert out.protection is Protection.RELAY
    assert out.src == PI
    assert out.dst == Endpoint("player", 9000)      # destination preserved
    assert len(out.payload) == UDP_HEADER_LEN + len(body) + RELAY_OVERHEAD
    assert relay_open(KEY, out.payload[UDP_HEADER_LEN:]) == body
    assert relay.stats.forwarded == 1


def test_relay_drops_fragments_and_runts():
    relay = make_relay()
    assert relay.relay_encrypt(camera_datagram(b"x" * 64, fragment=True)) is None
    short = Packet(CAMERA_554, Endpoint("player", 9000), Transport.UDP,
                   Protection.PLAIN, b"y" * UDP_HEADER_LEN)   # no body at all
    assert relay.relay_encrypt(short) is None
    assert relay.stats.frag_dropped == 2
    assert relay.stats.forwarded == 0


def test_relay_passes_tcp_and_foreign_sources_untouched():
    relay = make_relay()
    settings = Packet(CAMERA_554, Endpoint("cloud", 443), Transport.TCP,
                      Protection.TLS, b"sealed-settings")
    assert relay.relay_encrypt(settings) is settings
    foreign = camera_datagram(b"hello")
    foreign = Packet(Endpoint("app", 40000), foreign.dst, Transport.UDP,
                     Protection.PLAIN, foreign.payload)
    assert relay.relay_encrypt(foreign) is foreign
    assert relay.stats.forwarded == 0


def test_relay_config_validation():
    with pytest.raises(ValueError):
        RelayConfig(camera_source=CAMERA_554, shared_key=KEY, header_skip=20)
    with pytest.raises(ValueError):
        RelayConfig(camera_source=CAMERA_554, shared_key=KEY,
                    queue_id_encrypt=2, queue_id_decrypt=2)
    with pytest.raises(ValueError):
        RelayConfig(camera_source=CAMERA_554, shared_key=b"short")


# ---------------------------------------------------------------------------
# The shim transform.

def test_shim_roundtrip_over_random_bodies():
    relay = make_relay()
    shim = PlayerShim(KEY, "pi")
    rnd = random.Random(5150)
    for _ in range(1000):
        body = rnd.randbytes(rnd.randrange(1, 1500))
        sealed = relay.relay_encrypt(camera_datagram(body))
        opened = shim.process(sealed)
        assert opened is not None
        assert opened.payload == body
        assert opened.protection is Protection.PLAIN
    assert shim.stats.tampered == 0


def test_shim_drops_bit_flipped_records():
    relay = make_relay()
    shim = PlayerShim(KEY, "pi")
    sealed = relay.relay_encrypt(camera_datagram(b"stream body"))
    mangled = bytearray(sealed.payload)
    mangled[UDP_HEADER_LEN + 5] ^= 0x40
    flipped = Packet(sealed.src, sealed.dst, sealed.transport,
                     sealed.protection, bytes(mangled))
    assert shim.process(flipped) is None
    assert shim.stats.tampered == 1


def test_shim_passes_non_relay_sources_untouched():
    shim = PlayerShim(KEY, "pi")
    direct = camera_datagram(b"direct")
    assert shim.shim_decrypt(direct) is direct
    assert shim.stats.tampered == 0


# ---------------------------------------------------------------------------
# End-to-end transparency and opacity inside the simulator.

def run_third_party(lab, relay_key=None, shim=False, ticks=6):
    if relay_key is not None:
        config = RelayConfig(camera_source=CAMERA_554, shared_key=relay_key)
        relay = EncryptingRelay(config, PI, nonce_seed=b"sim-relay")
        lab.fabric.set_interposer("pi", "camera", "pi", relay.hook)
    if shim:
        lab.player.shim = PlayerShim(relay_key, "pi")
    lab.app.login(lab.fabric)
    lab.app.provision_third_party(lab.fabric, *VIEWER)
    frames = lab.player.player_session(lab.fabric, "camera", *VIEWER, ticks=ticks)
    return frames, lab.fabric.captures["atk"]


def test_relay_transparency_player_sees_baseline_frames():
    baseline, _ = run_third_party(build_lab(seed=12))
    fixed, _ = run_third_party(build_pi_lab(seed=12), relay_key=KEY, shim=True)
    assert fixed == baseline
    assert len(fixed) == 6 * 15


def test_relay_opacity_attacker_sees_only_sealed_records():
    _, capture = run_third_party(build_pi_lab(seed=12), relay_key=KEY, shim=True)
    udp = [rec for rec in capture if rec.packet.transport is Transport.UDP]
    assert udp, "stream crossed the tapped link"
    assert all(rec.packet.protection is Protection.RELAY for rec in udp)
    assert extract_stream(capture) == []


def test_without_relay_attacker_extracts_everything():
    frames, capture = run_third_party(build_lab(seed=12))
    assert extract_stream(capture) == frames


# ---------------------------------------------------------------------------
# Real sockets.

def canned_datagram(rnd, fragment=False):
    body = rnd.randbytes(rnd.randrange(1, 1400))
    header = make_udp_header(CAMERA_554, Endpoint("player", 9000),
                             len(body), ident=rnd.randrange(65536),
                             fragment=fragment)
    return header + body, body


def recv_all(sock, count, timeout=5.0):
    got = []
    deadline = time.monotonic() + timeout
    sock.settimeout(0.2)
    while len(got) < count and time.monotonic() < deadline:
        try:
            data, _ = sock.recvfrom(65535)
            got.append(data)
        except socket.timeout:
            continue
    return got


def test_real_udp_relay_loopback_roundtrip():
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sink.bind(("127.0.0.1", 0))
    relay = UdpRelay(("127.0.0.1", 0), sink.getsockname(), KEY,
                     nonce_seed=b"udp-test")
    relay.start()
    try:
        out = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        rnd = random.Random(77)
        sent_bodies = []
        for _ in range(50):
            datagram, body = canned_datagram(rnd)
            sent_bodies.append(body)
            out.sendto(datagram, ("127.0.0.1", relay.bound_port))
        received = recv_all(sink, 50)
        assert len(received) == 50
        opened = [relay_open(KEY, data[UDP_HEADER_LEN:]) for data in received]
        assert opened == sent_bodies
        assert relay.stats.forwarded == 50
    finally:
        relay.stop()
        sink.close()


def test_real_udp_relay_drops_runts_and_fragments():
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sink.bind(("127.0.0.1", 0))
    relay = UdpRelay(("127.0.0.1", 0), sink.getsockname(), KEY,
                     nonce_seed=b"udp-test")
    relay.start()
    try:
        out = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        rnd = random.Random(78)
        out.sendto(b"x" * 27, ("127.0.0.1", relay.bound_port))      # runt
        frag, _ = canned_datagram(rnd, fragment=True)
        out.sendto(frag, ("127.0.0.1", relay.bound_port))
        good, body = canned_datagram(rnd)
        out.sendto(good, ("127.0.0.1", relay.bound_port))
        received = recv_all(sink, 1)
        assert len(received) == 1
        assert relay_open(KEY, received[0][UDP_HEADER_LEN:]) == body
        deadline = time.monotonic() + 2.0
        while relay.stats.frag_dropped < 2 and time.monotonic() < deadline:
            time.sleep(0.01)
        assert relay.stats.frag_dropped == 2
        assert relay.stats.forwarded == 1
    finally:
        relay.stop()
        sink.close()


def test_real_udp_decrypt_mode_chains_with_encrypt_mode():
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sink.bind(("127.0.0.1", 0))
    decryptor = UdpRelay(("127.0.0.1", 0), sink.getsockname(), KEY, mode="decrypt")
    decryptor.start()
    encryptor = UdpRelay(("127.0.0.1", 0), ("127.0.0.1", decryptor.bound_port),
                         KEY, nonce_seed=b"chain")
    encryptor.start()
    try:
        out = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        rnd = random.Random(79)
        bodies = []
        for _ in range(20):
            datagram, body = canned_datagram(rnd)
            bodies.append(body)
            out.sendto(datagram, ("127.0.0.1", encryptor.bound_port))
        received = recv_all(sink, 20)
        assert received == bodies
    finally:
        encryptor.stop()
        decryptor.stop()
        sink.close()


def test_relay_drops_oversize_datagrams():
    relay = make_relay(mtu=256)
    assert relay.relay_encrypt(camera_datagram(b"z" * 300)) is None
    assert relay.stats.frag_dropped == 1
    udp = UdpRelay(("127.0.0.1", 0), ("127.0.0.1", 9), KEY, mtu=128)
    assert udp._transform(b"q" * 200) is None
    assert udp.stats.frag_dropped == 1


def test_real_udp_relay_bind_failure():
    taken = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    taken.bind(("127.0.0.1", 0))
    try:
        relay = UdpRelay(taken.getsockname(), ("127.0.0.1", 9), KEY)
        with pytest.raises(OSError):
            relay.start()
    finally:
        taken.close()


def test_relay_cli_signal_shutdown_prints_stats(tmp_path):
    import signal
    import subprocess
    import sys

    key_path = tmp_path / "relay.key"
    key_path.write_text(KEY.hex())
    proc = subprocess.Popen(
        [sys.executable, "-m", "camlab.cli", "relay",
         "--listen", "127.0.0.1:0", "--forward", "127.0.0.1:9",
         "--key-file", str(key_path)],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
    )
    banner = proc.stdout.readline()        # wait until the relay is up
    assert banner.startswith("relay encrypt")
    proc.send_signal(signal.SIGTERM)
    out, err = proc.communicate(timeout=10.0)
    assert proc.returncode == 0, err
    assert "forwarded=0 frag_dropped=0 tampered=0" in out


def test_relay_stats_line_format():
    relay = make_relay()
    relay.relay_encrypt(camera_datagram(b"x"))
    relay.relay_encrypt(camera_datagram(b"y" * 10, fragment=True))
    assert relay.stats.line() == "forwarded=1 frag_dropped=1 tampered=0"


def test_key_file_and_hostport_parsing(tmp_path):
    path = tmp_path / "relay.key"
    path.write_text(KEY.hex() + "\n")
    assert load_key_file(str(path)) == KEY
    path.write_text("abcd")
    with pytest.raises(ValueError):
        load_key_file(str(path))
    assert parse_hostport("127.0.0.1:9000") == ("127.0.0.1", 9000)
    with pytest.raises(ValueError):
        parse_hostport("9000")
