"""Netlist diversification against remote power side-channel attacks.

Isofunctional variants of an AES S-box are produced by stuck-at fault
injection followed by equivalence-checked repair, rotated through
reconfigurable regions, and evaluated with simulated correlation power
analysis.
"""

__version__ = "0.1.0"
