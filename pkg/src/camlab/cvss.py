"""CVSS v3.1 base-score calculator.

Implements the public base-score formula: impact subscore, exploitability,
scope-dependent combination, and the standard's round-up-to-one-decimal.
Pure functions throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import ParseError

METRIC_VALUES = {
    "AV": ("N", "A", "L", "P"),
    "AC": ("L", "H"),
    "PR": ("N", "L", "H"),
    "UI": ("N", "R"),
    "S": ("U", "C"),
    "C": ("N", "L", "H"),
    "I": ("N", "L", "H"),
    "A": ("N", "L", "H"),
}
METRIC_ORDER = tuple(METRIC_VALUES)

_AV = {"N": 0.85, "A": 0.62, "L": 0.55, "P": 0.2}
_AC = {"L": 0.77, "H": 0.44}
_PR_UNCHANGED = {"N": 0.85, "L": 0.62, "H": 0.27}
_PR_CHANGED = {"N": 0.85, "L": 0.68, "H": 0.5}
_UI = {"N": 0.85, "R": 0.62}
_IMPACT = {"N": 0.0, "L": 0.22, "H": 0.56}


@dataclass(frozen=True)
class CvssVector:
    AV: str
    AC: str
    PR: str
    UI: str
    S: str
    C: str
    I: str
    A: str

    def __post_init__(self):
        for metric in METRIC_ORDER:
            value = getattr(self, metric)
            if value not in METRIC_VALUES[metric]:
                raise ParseError(f"bad value {value!r} for metric {metric}")

    def __str__(self) -> str:
        return "CVSS:3.1/" + "/".join(
            f"{m}:{getattr(self, m)}" for m in METRIC_ORDER)


def parse_vector(text: str) -> CvssVector:
    parts = text.strip().split("/")
    if not parts or parts[0] not in ("CVSS:3.1", "CVSS:3.0"):
        raise ParseError(f"vector must start with CVSS:3.1, got {text!r}")
    values: dict[str, str] = {}
    for part in parts[1:]:
        metric, sep, value = part.partition(":")
        if not sep:
            raise ParseError(f"bad metric component {part!r}")
        if metric not in METRIC_VALUES:
            raise ParseError(f"unknown metric {metric!r}")
        if metric in values:
            raise ParseError(f"duplicate metric {metric!r}")
        values[metric] = value
    missing = [m for m in METRIC_ORDER if m not in values]
    if missing:
        raise ParseError(f"missing metrics: {', '.join(missing)}")
    return CvssVector(**values)


def _round_up(value: float) -> float:
    """Round up to one decimal, on integer arithmetic to dodge float error."""
    scaled = round(value * 100000)
    if scaled % 10000 == 0:
        return scaled / 100000.0
    return (scaled // 10000 + 1) / 10.0


def base_score(vector: CvssVector) -> float:
    iss = 1.0 - ((1.0 - _IMPACT[vector.C])
                 * (1.0 - _IMPACT[vector.I])
                 * (1.0 - _IMPACT[vector.A]))
    if vector.S == "U":
        impact = 6.42 * iss
    else:
        impact = 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02) ** 15
    if impact <= 0:
        return 0.0
    pr = _PR_UNCHANGED if vector.S == "U" else _PR_CHANGED
    exploitability = (8.22 * _AV[vector.AV] * _AC[vector.AC]
                      * pr[vector.PR] * _UI[vector.UI])
    if vector.S == "U":
        return _round_up(min(impact + exploitability, 10.0))
    return _round_up(min(1.08 * (impact + exploitability), 10.0))


def severity(score: float) -> str:
    if score == 0.0:
        return "None"
    if score <= 3.9:
        return "Low"
    if score <= 6.9:
        return "Medium"
    if score <= 8.9:
        return "High"
    return "Critical"


def score_vector_string(text: str) -> tuple[float, str]:
    score = base_score(parse_vector(text))
    return score, severity(score)
