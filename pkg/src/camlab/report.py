"""Artifact writing and reporting.

A run leaves a flat artifacts directory: capture logs, the timeline CSV with
its rendered figure, recovered frames, the camera state log, the CVSS
assessment, a stats file, and a summary naming every check and whether it
held.  `format_report` turns an artifacts directory back into a
per-vulnerability report.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import cvss
from .attacker import BIN_WIDTH, TimelineBin
from .core import Protection, encode_capture, encode_frame
from .scenarios import LabRun

# The three assessed weaknesses, with the base vectors used in the lab.
VULNS = [
    ("V1", "denial of service by unfiltered inbound flood",
     "CVSS:3.1/AV:A/AC:L/PR:N/UI:N/S:U/C:N/I:N/A:H"),
    ("V2", "motion-notification length side channel",
     "CVSS:3.1/AV:A/AC:L/PR:N/UI:N/S:U/C:L/I:N/A:L"),
    ("V3", "cleartext third-party video stream",
     "CVSS:3.1/AV:A/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H"),
]

_FIG_METADATA = {"Software": "camlab"}


def write_artifacts(run: LabRun, outdir: str) -> bool:
    """Write every artifact for a finished run; returns True if all checks held."""
    os.makedirs(outdir, exist_ok=True)

    _write(outdir, "scenario.cfg", run.scenario.text)

    for tap_id, log in run.fabric.captures.items():
        _write(outdir, f"capture_{tap_id}.log", encode_capture(log))

    _write(outdir, "events.log", "".join(line + "\n" for line in run.events_log))

    state_lines = [f"tick={t} mode={mode.value}"
                   for t, mode in enumerate(run.state_trace())]
    _write(outdir, "camera_state.log", "".join(line + "\n" for line in state_lines))

    _write(outdir, "timeline.csv", _timeline_csv(run.timeline))
    _write(outdir, "motion_truth.csv", _timeline_csv(run.truth))

    frames_dir = os.path.join(outdir, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    for frame in run.extract.frames:
        with open(os.path.join(frames_dir, f"frame_{frame.frame_index}.bin"), "wb") as fh:
            fh.write(encode_frame(frame))

    if run.player_frames is not None:
        player_dir = os.path.join(outdir, "player_frames")
        os.makedirs(player_dir, exist_ok=True)
        for frame in run.player_frames:
            with open(os.path.join(player_dir, f"frame_{frame.frame_index}.bin"), "wb") as fh:
                fh.write(encode_frame(frame))

    _write(outdir, "cvss.txt", _cvss_text())
    stats = run.stats()
    _write(outdir, "stats.txt",
           "".join(f"{key}={value}\n" for key, value in stats.items()))

    render_figures(run, outdir)
    _write(outdir, "summary.txt", _summary_text(run, stats))
    return run.ok


def _write(outdir: str, name: str, text: str) -> None:
    with open(os.path.join(outdir, name), "w", encoding="utf-8") as fh:
        fh.write(text)


def _timeline_csv(bins: list[TimelineBin]) -> str:
    lines = ["bin_start,count"]
    lines += [f"{b.bin_start},{b.count}" for b in bins]
    return "".join(line + "\n" for line in lines)


def _cvss_text() -> str:
    lines = []
    for vid, title, vector in VULNS:
        score, sev = cvss.score_vector_string(vector)
        lines.append(f"{vid} {title}: {vector} score={score} severity={sev}")
    return "".join(line + "\n" for line in lines)


def _summary_text(run: LabRun, stats: dict) -> str:
    sc = run.scenario
    out = [
        f"scenario: {sc.name}",
        f"seed: {run.seed}",
        f"duration: {sc.duration} ticks",
        "",
        "[stage] setup: "
        f"nodes={len(sc.nodes)} links={len(sc.links)} taps={len(sc.taps)}"
        f" interposers={len(sc.interposer_sites)}",
        "[stage] gather: " + " ".join(
            f"{tap}={len(log)}" for tap, log in run.fabric.captures.items()),
        "[stage] analyze: "
        f"bins={len(run.timeline)} frames_extracted={stats['frames_extracted']}"
        f" skipped_bytes={stats['extract_skipped_bytes']}",
        "[stage] assess: " + "; ".join(
            f"{vid} {cvss.score_vector_string(vector)[0]}"
            f" {cvss.score_vector_string(vector)[1]}"
            for vid, _, vector in VULNS),
        "[stage] exploit: "
        f"crashes={stats['crashes']} windows={stats['crash_windows']}"
        f" alerts={stats['alerts_delivered']}"
        f" notifications={stats['notifications_emitted']}",
        "[stage] fix: "
        f"relay={'on' if stats['relay_active'] else 'off'}"
        f" shim={'on' if stats['shim_active'] else 'off'}"
        f" forwarded={stats['relay_forwarded']}"
        f" tampered={stats['shim_tampered']}",
        "",
        "checks:",
    ]
    for name, ok, detail in run.checks:
        out.append(f"{'ok  ' if ok else 'FAIL'} {name} ({detail})")
    out.append("")
    out.append(f"result: {'PASS' if run.ok else 'FAIL'}")
    return "".join(line + "\n" for line in out)


# -----------------------------------------------------------------------------
# Figures.

def render_figures(run: LabRun, outdir: str) -> None:
    _render_timeline(run, os.path.join(outdir, "timeline.png"))
    _render_traffic(run, os.path.join(outdir, "traffic.png"))


def _tick_labeler(wall_start: str | None):
    if wall_start is None:
        return lambda tick: str(tick)
    hours, minutes = wall_start.split(":")
    offset = int(hours) * 3600 + int(minutes) * 60

    def label(tick: int) -> str:
        total = (offset + tick) % 86400
        return f"{total // 3600:02d}:{total % 3600 // 60:02d}"
    return label


def _render_timeline(run: LabRun, path: str) -> None:
    bins = run.timeline
    label = _tick_labeler(run.scenario.wall_start)
    fig, ax = plt.subplots(figsize=(8, 3.2))
    if bins:
        xs = [b.bin_start for b in bins]
        ax.bar(xs, [b.count for b in bins], width=BIN_WIDTH * 0.9,
               align="edge", color="#3465a4")
        step = max(1, len(xs) // 12)
        ax.set_xticks(xs[::step])
        ax.set_xticklabels([label(x) for x in xs[::step]], rotation=45, fontsize=8)
    ax.set_xlabel("time" if run.scenario.wall_start else "tick")
    ax.set_ylabel("matching records")
    ax.set_title("Sealed 523-byte records per 10-minute bin")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_FIG_METADATA)
    plt.close(fig)


def _render_traffic(run: LabRun, path: str) -> None:
    capture = run.atk_capture
    duration = max(1, run.scenario.duration)
    bucket = max(1, duration // 60)
    n_buckets = duration // bucket + 1
    series = {}
    for rec in capture:
        name = rec.packet.protection.value
        series.setdefault(name, [0] * n_buckets)[min(rec.ts // bucket, n_buckets - 1)] += 1
    fig, ax = plt.subplots(figsize=(8, 3.2))
    xs = [i * bucket for i in range(n_buckets)]
    colors = {"PLAIN": "#cc0000", "TLS": "#3465a4",
              "STREAM": "#73d216", "RELAY": "#75507b"}
    for name in (p.value for p in Protection):
        if name in series:
            ax.plot(xs, series[name], label=name, color=colors.get(name),
                    drawstyle="steps-post")
    ax.set_xlabel("tick")
    ax.set_ylabel(f"records per {bucket} ticks")
    ax.set_title("Observed traffic by protection mode")
    if series:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_FIG_METADATA)
    plt.close(fig)


# -----------------------------------------------------------------------------
# The report subcommand.

def _read_stats(outdir: str) -> dict | None:
    path = os.path.join(outdir, "stats.txt")
    if not os.path.exists(path):
        return None
    stats = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            key, sep, value = line.strip().partition("=")
            if sep:
                stats[key] = value
    return stats


def format_report(outdir: str) -> str:
    stats = _read_stats(outdir)
    out = [f"artifacts: {outdir}"]
    if stats is None:
        out.append("no stats.txt found: run a scenario first")
        for vid, title, vector in VULNS:
            score, sev = cvss.score_vector_string(vector)
            out.append("")
            out.append(f"{vid} {title}")
            out.append("  status: not run")
            out.append(f"  cvss: {vector} score={score} severity={sev}")
        return "".join(line + "\n" for line in out)

    def stat(key, default="0"):
        return stats.get(key, default)

    out.append(f"scenario: {stat('scenario', '?')} seed={stat('seed', '?')}")
    missing = [name for name in ("capture_atk.log", "timeline.csv", "summary.txt")
               if not os.path.exists(os.path.join(outdir, name))]
    if missing:
        out.append("missing artifacts: " + ", ".join(missing))

    sections = []
    crashes = int(stat("crashes"))
    flood = int(stat("flood_packets"))
    v1 = "exploited (device crashed)" if crashes else (
        "attempted, no crash" if flood else "not attempted")
    sections.append(("V1", v1, ["camera_state.log", "events.log"]))

    notifications = int(stat("notifications_emitted"))
    dropper = stat("dropper_active") == "1"
    if notifications:
        v2 = "exploited (timeline recovered from sealed traffic)"
        if dropper:
            v2 += f"; notifications denied (alerts={stat('alerts_delivered')})"
    else:
        v2 = "not attempted"
    sections.append(("V2", v2, ["timeline.csv", "timeline.png", "motion_truth.csv"]))

    extracted = int(stat("frames_extracted"))
    relay = stat("relay_active") == "1"
    if extracted:
        v3 = f"exploited ({extracted} frames recovered in cleartext)"
    elif relay:
        v3 = "mitigated (relay active, 0 frames recovered)"
    elif int(stat("frames_player", "-1")) > 0:
        v3 = "attempted, 0 frames recovered"
    else:
        v3 = "not attempted"
    sections.append(("V3", v3, ["frames/", "capture_atk.log", "traffic.png"]))

    for (vid, title, vector), (_, status, evidence) in zip(VULNS, sections):
        score, sev = cvss.score_vector_string(vector)
        out.append("")
        out.append(f"{vid} {title}")
        out.append(f"  status: {status}")
        out.append(f"  evidence: {', '.join(evidence)}")
        out.append(f"  cvss: {vector} score={score} severity={sev}")

    summary = os.path.join(outdir, "summary.txt")
    if os.path.exists(summary):
        with open(summary, "r", encoding="utf-8") as fh:
            tail = [line.rstrip() for line in fh if line.startswith(("ok", "FAIL", "result"))]
        out.append("")
        out.extend(tail)
    return "".join(line + "\n" for line in out)
