"""Discrete-event simulator and key-management stack for a metropolitan
trusted-node quantum-key-distribution network.

Layers:

* :mod:`qkdnet.channel` / :mod:`qkdnet.protocols` — quantum links and
  protocol sifting;
* :mod:`qkdnet.distillation` — error correction, secure-fraction bounds
  and privacy amplification;
* :mod:`qkdnet.keymgmt` — per-node key stores and hop-by-hop one-time-pad
  relay;
* :mod:`qkdnet.kms` — network-wide monitoring, attack alarms and route
  selection;
* :mod:`qkdnet.applayer` — key-consuming applications (one-time-pad
  sessions, exportable key files);
* :mod:`qkdnet.harness` — topology loading, scenario runner, control
  endpoint and CLI.
"""

__version__ = "0.1.0"
