"""Deterministic desk-scale security lab for a consumer IP camera.

Simulates both streaming flows of an entry-level cloud-connected camera,
the three exploits against it (flood-driven denial of service,
motion-notification size side channel, cleartext third-party stream
capture), the encrypting relay that fixes the stream breach, and CVSS
scoring for all three.
"""

__version__ = "0.1.0"
