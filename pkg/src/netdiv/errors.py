"""Exception hierarchy shared by every stage of the toolchain."""

from __future__ import annotations


class NetdivError(Exception):
    """Base class for all toolchain errors."""


class ConfigError(NetdivError):
    """Invalid user configuration (maps to CLI exit code 2)."""


# --- netlist -----------------------------------------------------------------


class NetlistError(NetdivError):
    pass


class GnlSyntaxError(NetlistError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class MultipleDriver(NetlistError):
    def __init__(self, net: str):
        super().__init__(f"net {net!r} has more than one driver")
        self.net = net


class UndrivenNet(NetlistError):
    def __init__(self, net: str):
        super().__init__(f"net {net!r} is used but never driven")
        self.net = net


class CombinationalCycle(NetlistError):
    def __init__(self, nets):
        self.nets = list(nets)
        super().__init__("combinational cycle through " + ", ".join(self.nets))


class ArityMismatch(NetlistError):
    def __init__(self, gate: str, kind: str, arity: int):
        super().__init__(f"gate {gate!r}: {kind} cannot take {arity} input(s)")
        self.gate = gate


class DimensionMismatch(NetlistError):
    pass


class UnknownNet(NetlistError):
    def __init__(self, net: str):
        super().__init__(f"unknown net {net!r}")
        self.net = net


class InterfaceMismatch(NetlistError):
    pass


# --- diversification / repair ------------------------------------------------


class RateExceedsCap(NetdivError):
    def __init__(self, rate: float, cap: float):
        super().__init__(f"fault rate {rate} exceeds cap {cap}")
        self.rate = rate
        self.cap = cap


class NotEnoughFaultableNets(NetdivError):
    pass


class ConeTooLarge(NetdivError):
    pass


class IterationLimit(NetdivError):
    pass


class TooFewVariants(NetdivError):
    pass


# --- side-channel evaluation -------------------------------------------------


class CalibrationFailed(NetdivError):
    pass


class PlanInvalid(NetdivError):
    pass


class MissingPreviousByte(NetdivError):
    pass


class TraceFormatError(NetdivError):
    pass
