"""Attribute-based groupcast for satellite downlinks.

Submodules: ``groups`` (pairing groups), ``policy`` (policies and MSPs),
``abe`` (the CP-ABE scheme), ``envelope`` (wire format and hybrid sealing),
``authority`` (keystore), ``linksim`` (link-rate simulator), ``lathare``
(UDP latency harness) and ``cli``.
"""

__version__ = "0.1.0"
