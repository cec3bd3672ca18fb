"""Acceptance suite.

One test per acceptance criterion; each prints a single pass line (run with
`pytest tests/test_acceptance.py -v -s`) and enforces its runtime bound.
The bundled scenarios are run once per session and shared.
"""

import itertools
import os
import random
import socket
import time

import pytest

from conftest import inbound_counts, oracle_trace

from camlab.core import (
    ChannelError,
    Endpoint,
    Protection,
    UDP_HEADER_LEN,
    decode_capture,
    encode_frame,
    make_udp_header,
    prf,
    relay_open,
)
from camlab.cvss import CvssVector, METRIC_VALUES, base_score, score_vector_string
from camlab.fixguard import UdpRelay
from camlab.report import write_artifacts
from camlab.scenarios import BUILTIN_SCENARIOS, LabRun, load_scenario

ALL_SCENARIOS = sorted(BUILTIN_SCENARIOS)


class Timer:
    def __init__(self, limit):
        self.limit = limit
        self.started = time.monotonic()

    def check(self, criterion, description):
        elapsed = time.monotonic() - self.started
        assert elapsed < self.limit, \
            f"criterion {criterion} took {elapsed:.2f}s (limit {self.limit}s)"
        print(f"[criterion {criterion}] PASS {description} ({elapsed:.2f}s)")


RUNTIMES = {}


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    """One finished LabRun plus its artifacts directory per bundled scenario."""
    root = tmp_path_factory.mktemp("artifacts")
    result = {}
    for name in ALL_SCENARIOS:
        started = time.monotonic()
        run = LabRun(load_scenario(name))
        run.run()
        outdir = str(root / name)
        write_artifacts(run, outdir)
        RUNTIMES[name] = time.monotonic() - started
        result[name] = (run, outdir)
    return result


# ---------------------------------------------------------------------------
# 1. CVSS exactness.

def test_criterion_1_cvss_exactness():
    timer = Timer(limit=1.0)
    assert score_vector_string(
        "CVSS:3.1/AV:A/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:H") == (6.5, "Medium")
    assert score_vector_string(
        "CVSS:3.1/AV:A/AC:L/PR:N/UI:N/S:U/C:L/I:N/A:L") == (5.4, "Medium")
    assert score_vector_string(
        "CVSS:3.1/AV:A/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H") == (8.8, "High")

    # Full-oracle equivalence over every base vector.
    from test_cvss import reference_score
    keys = list(METRIC_VALUES)
    count = 0
    for combo in itertools.product(*(METRIC_VALUES[k] for k in keys)):
        vector = CvssVector(**dict(zip(keys, combo)))
        assert base_score(vector) == reference_score(*combo)
        count += 1
    assert count == 2592
    timer.check(1, "three scores exact, 2592-vector oracle equivalence")


# ---------------------------------------------------------------------------
# 2. Denial of service reproduction.

def test_criterion_2_dos_reproduction(runs):
    timer = Timer(limit=5.0)
    timer.started -= RUNTIMES["dos"]          # charge the scenario run itself
    run, outdir = runs["dos"]
    sc = run.scenario

    # Exact state trace against the independent oracle, fed by the capture.
    counts = inbound_counts(run.atk_capture)
    expected = oracle_trace(counts, sc.inbound_budget, sc.overload_ticks,
                            sc.reboot_ticks, sc.duration)
    assert run.state_trace() == expected
    assert run.camera.crash_windows == [(13, 42)]

    # Crash arrived within OVERLOAD_TICKS of the flood start (tick 10).
    assert run.camera.crash_windows[0][0] == 10 + sc.overload_ticks

    # Every service call during the outage failed; service returned after.
    probes = {}
    for line in run.events_log:
        if "action=app-login" in line:
            tick = int(line.split("tick=")[1].split(" ")[0])
            probes[tick] = line.split("result=")[1]
    lo, hi = run.camera.crash_windows[0]
    down_probes = {t: r for t, r in probes.items() if lo <= t <= hi}
    up_probes = {t: r for t, r in probes.items() if t > hi}
    assert down_probes and all(r == "unavailable" for r in down_probes.values())
    assert up_probes and all(r.startswith("ok") for r in up_probes.values())

    # The written state log agrees.
    state_log = open(os.path.join(outdir, "camera_state.log")).read().splitlines()
    assert state_log[13] == "tick=13 mode=CRASHED"
    assert state_log[14] == "tick=14 mode=REBOOTING"
    assert state_log[43] == "tick=43 mode=ONLINE"
    timer.check(2, "flood crash, total outage, exact oracle state trace")


# ---------------------------------------------------------------------------
# 3. Motion side channel and notification denial.

def test_criterion_3_motion_side_channel(runs):
    timer = Timer(limit=10.0)
    timer.started -= RUNTIMES["overnight-motion"] + RUNTIMES["notification-denial"]
    run, outdir = runs["overnight-motion"]
    timeline = [(b.bin_start, b.count) for b in run.timeline]
    truth = [(b.bin_start, b.count) for b in run.truth]
    assert timeline == truth
    matched = sum(min(a[1], b[1]) for a, b in zip(timeline, truth))
    inferred = sum(count for _, count in timeline)
    actual = sum(count for _, count in truth)
    assert actual > 0
    assert matched / inferred == 1.0        # precision
    assert matched / actual == 1.0          # recall
    assert dict(timeline)[3600] == 10       # the bin covering 00:05

    csv_lines = open(os.path.join(outdir, "timeline.csv")).read().splitlines()
    assert csv_lines[0] == "bin_start,count"
    assert "3600,10" in csv_lines

    denial, _ = runs["notification-denial"]
    stats = denial.stats()
    assert stats["alerts_delivered"] == 0
    assert stats["notifications_emitted"] > 0
    timer.check(3, "timeline precision=recall=1.0, 00:05 bin=10, denial works")


# ---------------------------------------------------------------------------
# 4. Cleartext stream breach and its two negatives.

def test_criterion_4_stream_breach(runs):
    timer = Timer(limit=10.0)
    timer.started -= (RUNTIMES["third-party-breach"]
                      + RUNTIMES["third-party-fixed"]
                      + RUNTIMES["proprietary-baseline"])
    breach, outdir = runs["third-party-breach"]
    extracted = breach.extract.frames
    assert len(extracted) == breach.camera.frames_emitted == 300
    emitted = [breach.camera.frame_chunk(i) for i in range(300)]
    assert extracted == emitted
    assert [encode_frame(f) for f in extracted] == [encode_frame(f) for f in emitted]
    frames_dir = os.path.join(outdir, "frames")
    assert len(os.listdir(frames_dir)) == 300
    on_disk = open(os.path.join(frames_dir, "frame_0.bin"), "rb").read()
    assert on_disk == encode_frame(emitted[0])

    for name in ("proprietary-baseline", "third-party-fixed"):
        run, out = runs[name]
        assert run.extract.frames == [], name
        assert os.listdir(os.path.join(out, "frames")) == [], name
    timer.check(4, "breach recovers 300/300 byte-identical; both negatives 0")


# ---------------------------------------------------------------------------
# 5. Fix transparency.

def test_criterion_5_fix_transparency(runs):
    timer = Timer(limit=10.0)
    breach, _ = runs["third-party-breach"]
    fixed, _ = runs["third-party-fixed"]
    assert breach.seed == fixed.seed
    assert fixed.player_frames is not None and breach.player_frames is not None
    assert [encode_frame(f) for f in fixed.player_frames] == \
        [encode_frame(f) for f in breach.player_frames]
    assert len(fixed.player_frames) == 300
    assert fixed.player.shim.stats.tampered == 0
    timer.check(5, "player frames under the fix byte-identical to baseline")


# ---------------------------------------------------------------------------
# 6. Notification length law.

def test_criterion_6_notification_length_law(runs):
    timer = Timer(limit=10.0)
    total = 0
    for name in ALL_SCENARIOS:
        run, outdir = runs[name]
        for tap in run.fabric.captures:
            capture = decode_capture(
                open(os.path.join(outdir, f"capture_{tap}.log")).read())
            for rec in capture:
                p = rec.packet
                if p.protection is Protection.TLS and p.src.node == "camera" \
                        and p.dst.node == "cloud":
                    assert len(p.payload) == 523, name
                    total += 1
        assert len(run.camera.notification_log) <= total
    assert total > 180      # the overnight capture alone holds 166
    timer.check(6, f"all {total} captured notifications are exactly 523 bytes")


# ---------------------------------------------------------------------------
# 7. Relay round-trip over real sockets.

def test_criterion_7_relay_roundtrip_real_udp():
    timer = Timer(limit=5.0)
    key = prf(b"acceptance", b"relay-key")
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sink.bind(("127.0.0.1", 0))
    sink.settimeout(2.0)
    relay = UdpRelay(("127.0.0.1", 0), sink.getsockname(), key,
                     mtu=8192, nonce_seed=b"acceptance-nonces")
    relay.start()
    sender = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    rnd = random.Random(20_26)
    src, dst = Endpoint("camera", 554), Endpoint("player", 9000)
    try:
        for index in range(1000):
            body = rnd.randbytes(rnd.randrange(1, 4097))
            header = make_udp_header(src, dst, len(body), ident=index)
            sender.sendto(header + body, ("127.0.0.1", relay.bound_port))
            sealed, _ = sink.recvfrom(65535)
            assert relay_open(key, sealed[UDP_HEADER_LEN:]) == body

            flipped = bytearray(sealed)
            flipped[rnd.randrange(len(flipped) - UDP_HEADER_LEN) + UDP_HEADER_LEN] ^= \
                1 << rnd.randrange(8)
            with pytest.raises(ChannelError):
                relay_open(key, bytes(flipped[UDP_HEADER_LEN:]))

        assert relay.stats.forwarded == 1000
        for index in range(20):
            body = rnd.randbytes(64)
            header = make_udp_header(src, dst, len(body), ident=index, fragment=True)
            sender.sendto(header + body, ("127.0.0.1", relay.bound_port))
        deadline = time.monotonic() + 2.0
        while relay.stats.frag_dropped < 20 and time.monotonic() < deadline:
            time.sleep(0.005)
        assert relay.stats.frag_dropped == 20
        assert relay.stats.forwarded == 1000
    finally:
        relay.stop()
        sink.close()
    timer.check(7, "1000/1000 recovered, 1000/1000 flips rejected, fragments dropped")


# ---------------------------------------------------------------------------
# 8. Determinism.

def _hash_tree(root):
    import hashlib
    digest = {}
    for dirpath, _, filenames in os.walk(root):
        for filename in filenames:
            path = os.path.join(dirpath, filename)
            relative = os.path.relpath(path, root)
            digest[relative] = hashlib.sha256(open(path, "rb").read()).hexdigest()
    return digest


def test_criterion_8_determinism(runs, tmp_path):
    timer = Timer(limit=60.0)
    for name in ALL_SCENARIOS:
        _, first_dir = runs[name]
        rerun = LabRun(load_scenario(name))
        rerun.run()
        second_dir = str(tmp_path / name)
        write_artifacts(rerun, second_dir)
        first, second = _hash_tree(first_dir), _hash_tree(second_dir)
        assert first == second, f"{name}: artifact trees differ"
        assert first, f"{name}: no artifacts hashed"
    timer.check(8, f"byte-identical artifact trees for {len(ALL_SCENARIOS)} scenarios")
