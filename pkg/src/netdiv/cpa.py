"""Correlation power analysis against the serial SubBytes device.

The hypothesis for key byte ``i`` is the Hamming distance between
consecutive S-box outputs: ``HD(S(p[i-1] ^ k[i-1]), S(p[i] ^ g))``, with
the register reset value 0 standing in for byte -1.  Bytes are recovered
in order, each using the previously recovered byte (extend and prune).

Correlations are computed from running sums, so prefixes of a trace set
on a detection grid cost one pass over the data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .aes import sbox_table
from .errors import MissingPreviousByte
from .power import TraceSet, hamming_weight

HD_CONSECUTIVE = "hd_consecutive"
HW_OUTPUT = "hw_output"
DEFAULT_MARGIN = 1.5

_SBOX = np.array(sbox_table(), dtype=np.int64)
_GUESSES = np.arange(256, dtype=np.int64)


@dataclass(frozen=True)
class HypothesisModel:
    byte: int = 0
    kind: str = HD_CONSECUTIVE
    prev_key: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.byte < 16:
            raise ValueError("byte index must be in 0..15")
        if self.kind not in (HD_CONSECUTIVE, HW_OUTPUT):
            raise ValueError(f"unknown hypothesis kind {self.kind!r}")


def hypothesis(plaintexts, model: HypothesisModel, guess: int) -> np.ndarray:
    return hypotheses(plaintexts, model)[guess]


def hypotheses(plaintexts, model: HypothesisModel) -> np.ndarray:
    """Hypothesis matrix of shape (256, n): row ``g`` is the leakage under guess ``g``."""
    p = np.asarray(plaintexts, dtype=np.int64)
    if p.ndim == 1:
        p = p[None, :]
    y = _SBOX[p[:, model.byte][None, :] ^ _GUESSES[:, None]]
    if model.kind == HW_OUTPUT:
        return hamming_weight(y).astype(float)
    if model.byte == 0:
        prev = np.zeros(p.shape[0], dtype=np.int64)
    else:
        if model.prev_key is None:
            raise MissingPreviousByte(f"byte {model.byte} needs key byte {model.byte - 1}")
        prev = _SBOX[p[:, model.byte - 1] ^ model.prev_key]
    return hamming_weight(y ^ prev[None, :]).astype(float)


# --- correlation -------------------------------------------------------------


@dataclass
class Accumulator:
    """Running sums for Pearson correlation of 256 hypotheses against S samples."""

    n: int
    sx: np.ndarray    # (G,)
    sxx: np.ndarray   # (G,)
    sy: np.ndarray    # (S,)
    syy: np.ndarray   # (S,)
    sxy: np.ndarray   # (G, S)

    @classmethod
    def empty(cls, n_guess: int, n_samples: int) -> "Accumulator":
        return cls(0, np.zeros(n_guess), np.zeros(n_guess), np.zeros(n_samples),
                   np.zeros(n_samples), np.zeros((n_guess, n_samples)))

    def update(self, x: np.ndarray, y: np.ndarray) -> None:
        """Add traces: ``x`` is (G, n) hypotheses, ``y`` is (n, S) samples."""
        y = np.asarray(y, dtype=float)
        self.n += y.shape[0]
        self.sx += x.sum(axis=1)
        self.sxx += (x * x).sum(axis=1)
        self.sy += y.sum(axis=0)
        self.syy += (y * y).sum(axis=0)
        self.sxy += x @ y

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.n + other.n, self.sx + other.sx, self.sxx + other.sxx,
                           self.sy + other.sy, self.syy + other.syy, self.sxy + other.sxy)

    def rho(self) -> Tuple[np.ndarray, bool]:
        """Correlation matrix (G, S); zero-variance columns give 0 and set the flag."""
        n = self.n
        cov = n * self.sxy - np.outer(self.sx, self.sy)
        vx = n * self.sxx - self.sx ** 2
        vy = n * self.syy - self.sy ** 2
        vx = np.where(vx < 1e-9 * np.maximum(1.0, n * self.sxx), 0.0, vx)
        vy = np.where(vy < 1e-9 * np.maximum(1.0, n * self.syy), 0.0, vy)
        den = np.sqrt(np.outer(vx, vy))
        degenerate = bool((den == 0).any())
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(den > 0, cov / np.where(den > 0, den, 1.0), 0.0)
        return np.clip(r, -1.0, 1.0), degenerate


def pearson_two_pass(x: np.ndarray, y: np.ndarray) -> float:
    """Textbook Pearson correlation; reference for the streaming sums."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx, dy = x - x.mean(), y - y.mean()
    den = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    return 0.0 if den == 0 else float((dx * dy).sum() / den)


@dataclass(frozen=True)
class CorrelationReport:
    peaks: np.ndarray          # (256,) max |rho| over the sample window
    n_traces: int
    degenerate: bool = False
    true_key: Optional[int] = None

    @property
    def ranking(self) -> np.ndarray:
        return np.argsort(-self.peaks, kind="stable")

    @property
    def margin(self) -> float:
        top = np.sort(self.peaks)[::-1]
        if top[1] == 0:
            return float("inf") if top[0] > 0 else 1.0
        return float(top[0] / top[1])

    @property
    def detected(self) -> Optional[int]:
        return detect(self)

    @property
    def true_peak(self) -> Optional[float]:
        return None if self.true_key is None else float(self.peaks[self.true_key])


def _report_from(acc: Accumulator, window, true_key) -> CorrelationReport:
    r, deg = acc.rho()
    cols = r if window is None else r[:, list(window)]
    return CorrelationReport(np.abs(cols).max(axis=1), acc.n, deg, true_key)


def correlate(ts: TraceSet, model: HypothesisModel, n: Optional[int] = None, window=None,
              true_key: Optional[int] = None) -> CorrelationReport:
    """Per-guess max |rho| over the first ``n`` traces and the sample ``window``."""
    n = len(ts) if n is None else n
    if n < 2:
        raise ValueError("correlation needs at least two traces")
    x = hypotheses(ts.plaintexts[:n], model)
    acc = Accumulator.empty(x.shape[0], ts.traces.shape[1])
    acc.update(x, ts.traces[:n])
    return _report_from(acc, window, true_key)


def correlate_matrix(x: np.ndarray, y: np.ndarray, window=None) -> CorrelationReport:
    """Correlation report for explicit hypothesis rows ``x`` (G, n) and samples ``y`` (n, S)."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    acc = Accumulator.empty(x.shape[0], y.shape[1])
    acc.update(np.asarray(x, dtype=float), y)
    return _report_from(acc, window, None)


def detect(report: CorrelationReport, threshold: float = DEFAULT_MARGIN) -> Optional[int]:
    """The top guess if its peak is at least ``threshold`` times the runner-up's."""
    order = report.ranking
    top, second = report.peaks[order[0]], report.peaks[order[1]]
    if top <= 0 or top == second:
        return None
    # relative slack so an exact ratio survives float rounding (0.3 vs 1.5 * 0.2)
    return int(order[0]) if top >= threshold * second * (1 - 1e-12) else None


def cpa_peak(report: CorrelationReport) -> float:
    if report.true_key is None:
        raise ValueError("cpa_peak needs the true key byte")
    return float(report.peaks[report.true_key])


# --- MTD ---------------------------------------------------------------------

NOT_DETECTED = None


@dataclass(frozen=True)
class MtdResult:
    mtd: Tuple[Optional[int], ...]   # per byte; None = not detected within budget
    step: int
    budget: int

    def detected(self, byte: int) -> bool:
        return self.mtd[byte] is not None

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "budget": self.budget,
            "mtd": [m if m is not None else f"NotDetected({self.budget})" for m in self.mtd],
        }


def grid_reports(ts: TraceSet, model: HypothesisModel, step: int = 100, budget: Optional[int] = None,
                 window=None, true_key: Optional[int] = None) -> List[CorrelationReport]:
    """Correlation reports at n = step, 2*step, ..., budget (one streaming pass)."""
    budget = min(len(ts), budget or len(ts))
    if step < 2 or budget < step:
        raise ValueError("need budget >= step >= 2")
    acc = None
    out = []
    for start in range(0, budget - budget % step, step):
        stop = start + step
        x = hypotheses(ts.plaintexts[start:stop], model)
        if acc is None:
            acc = Accumulator.empty(x.shape[0], ts.traces.shape[1])
        acc.update(x, ts.traces[start:stop])
        out.append(_report_from(acc, window, true_key))
    return out


def persistent_point(detections: Sequence[Optional[int]], target: int, step: int) -> Optional[int]:
    """Smallest grid point from which every detection equals ``target``."""
    point = None
    for i in range(len(detections) - 1, -1, -1):
        if detections[i] != target:
            break
        point = (i + 1) * step
    return point


def mtd_byte(ts: TraceSet, byte: int, key: Sequence[int], step: int = 100, budget: Optional[int] = None,
             margin: float = DEFAULT_MARGIN, window=None) -> Optional[int]:
    """MTD of one key byte; the preceding true key byte seeds the chained hypothesis."""
    prev = None if byte == 0 else int(key[byte - 1])
    model = HypothesisModel(byte, HD_CONSECUTIVE, prev)
    reps = grid_reports(ts, model, step, budget, window, int(key[byte]))
    return persistent_point([detect(r, margin) for r in reps], int(key[byte]), step)


def mtd(ts: TraceSet, key: Sequence[int], step: int = 100, budget: Optional[int] = None,
        bytes_: Sequence[int] = range(16), margin: float = DEFAULT_MARGIN, window=None) -> MtdResult:
    budget = min(len(ts), budget or len(ts))
    res = [None] * 16
    for b in bytes_:
        res[b] = mtd_byte(ts, b, key, step, budget, margin, window)
    return MtdResult(tuple(res), step, budget)


@dataclass(frozen=True)
class KeyRecovery:
    key: Tuple[Optional[int], ...]
    reports: Tuple[CorrelationReport, ...]

    @property
    def complete(self) -> bool:
        return all(k is not None for k in self.key)


def recover_key(ts: TraceSet, n: Optional[int] = None, margin: float = DEFAULT_MARGIN,
                window=None, true_key: Optional[Sequence[int]] = None) -> KeyRecovery:
    """Extend and prune: byte 0 against the zero register, then chain byte by byte.

    Recovery stops at the first byte without a detection, since every
    later hypothesis depends on it.
    """
    key: List[Optional[int]] = [None] * 16
    reports = []
    prev = None
    for b in range(16):
        model = HypothesisModel(b, HD_CONSECUTIVE, prev)
        rep = correlate(ts, model, n, window, None if true_key is None else int(true_key[b]))
        reports.append(rep)
        g = detect(rep, margin)
        if g is None:
            break
        key[b] = prev = g
    return KeyRecovery(tuple(key), tuple(reports))
