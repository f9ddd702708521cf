"""AES-128 reference pieces and the gate-level S-box target.

The structural S-box uses the composite field GF((2^4)^2): an input basis
change, inversion built from GF(2^4) arithmetic, and a merged
inverse-basis-change/affine output map.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

from .netlist import Gate, Latch, Netlist, SimState, bits_of, evaluate, initial_state, value_of

AES_POLY = 0x11B
GF16_POLY = 0x13  # x^4 + x + 1
DEFAULT_KEY_BYTE0 = 0xB9


def gf256_mul(a: int, b: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        if a & 0x100:
            a ^= AES_POLY
        b >>= 1
    return r


def gf16_mul(a: int, b: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        if a & 0x10:
            a ^= GF16_POLY
        b >>= 1
    return r


def _affine(b: int) -> int:
    r = 0
    for i in range(8):
        bit = 0
        for sh in (0, 4, 5, 6, 7):
            bit ^= (b >> ((i + sh) % 8)) & 1
        r |= bit << i
    return r ^ 0x63


@lru_cache(maxsize=None)
def sbox_table() -> Tuple[int, ...]:
    inv = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if gf256_mul(a, b) == 1:
                inv[a] = b
                break
    return tuple(_affine(inv[x]) for x in range(256))


@lru_cache(maxsize=None)
def inv_sbox_table() -> Tuple[int, ...]:
    t = [0] * 256
    for x, y in enumerate(sbox_table()):
        t[y] = x
    return tuple(t)


def sbox_ref(b: int) -> int:
    """Forward AES S-box."""
    return sbox_table()[b & 0xFF]


def inv_sbox(b: int) -> int:
    return inv_sbox_table()[b & 0xFF]


def popcount(x: int) -> int:
    return bin(x).count("1")


@dataclass(frozen=True)
class AesKey:
    key: bytes

    def __post_init__(self):
        if len(self.key) != 16:
            raise ValueError("AES-128 key must be exactly 16 bytes")

    def __getitem__(self, i):
        return self.key[i]


def first_round_operands(plaintext: Sequence[int], key) -> List[Tuple[int, int]]:
    """(S-box input, S-box output) per byte after the first AddRoundKey."""
    k = key.key if isinstance(key, AesKey) else bytes(key)
    if len(plaintext) != 16 or len(k) != 16:
        raise ValueError("plaintext and key must be 16 bytes")
    out = []
    for p, kb in zip(plaintext, k):
        x = p ^ kb
        out.append((x, sbox_ref(x)))
    return out


# --- composite-field construction --------------------------------------------


@dataclass(frozen=True)
class _Composite:
    lam: int
    to_comp: Tuple[Tuple[int, ...], ...]   # 8x8 rows over GF(2): composite bit r = XOR of x bits
    out_map: Tuple[Tuple[int, ...], ...]   # 8x8 rows: sbox bit r = XOR of composite-inverse bits


def _comp_mul(a: int, b: int, lam: int) -> int:
    ah, al, bh, bl = a >> 4, a & 15, b >> 4, b & 15
    hh = gf16_mul(ah, bh)
    hi = hh ^ gf16_mul(ah, bl) ^ gf16_mul(al, bh)
    lo = gf16_mul(lam, hh) ^ gf16_mul(al, bl)
    return (hi << 4) | lo


def _comp_pow(a: int, e: int, lam: int) -> int:
    r = 0x01
    for _ in range(e):
        r = _comp_mul(r, a, lam)
    return r


def _mat_from_columns(cols: Sequence[int]) -> Tuple[Tuple[int, ...], ...]:
    return tuple(tuple((cols[c] >> r) & 1 for c in range(8)) for r in range(8))


def _mat_inverse(m):
    n = len(m)
    a = [list(row) + [int(r == i) for i in range(n)] for r, row in enumerate(m)]
    for col in range(n):
        piv = next(r for r in range(col, n) if a[r][col])
        a[col], a[piv] = a[piv], a[col]
        for r in range(n):
            if r != col and a[r][col]:
                a[r] = [x ^ y for x, y in zip(a[r], a[col])]
    return tuple(tuple(row[n:]) for row in a)


def _mat_mul(a, b):
    n = len(a)
    return tuple(
        tuple(sum(a[r][k] & b[k][c] for k in range(n)) & 1 for c in range(n)) for r in range(n)
    )


@lru_cache(maxsize=None)
def _composite() -> _Composite:
    squares = {gf16_mul(y, y) ^ y for y in range(16)}
    lam = min(l for l in range(1, 16) if l not in squares)
    # the smallest composite-field root of the AES polynomial fixes the isomorphism
    for beta in range(2, 256):
        p = [_comp_pow(beta, e, lam) for e in (8, 4, 3, 1)]
        if p[0] ^ p[1] ^ p[2] ^ p[3] ^ 0x01 == 0:
            break
    cols = [_comp_pow(beta, i, lam) for i in range(8)]
    to_comp = _mat_from_columns(cols)
    affine_cols = [_affine(1 << i) ^ 0x63 for i in range(8)]
    out_map = _mat_mul(_mat_from_columns(affine_cols), _mat_inverse(to_comp))
    return _Composite(lam, to_comp, out_map)


class _Builder:
    """Accumulates gates with generated names."""

    def __init__(self):
        self.gates: Dict[str, Gate] = {}

    def gate(self, name: str, kind: str, *ins: str) -> str:
        self.gates[name] = Gate(kind, tuple(ins), name)
        return name

    def xor_tree(self, name: str, terms: List[str], invert: bool = False) -> str:
        """Balanced 2-input XOR tree; single terms alias unless ``invert``."""
        terms = list(terms)
        if not terms:
            return self.gate(name, "CONST1" if invert else "CONST0")
        level = 0
        while len(terms) > 2:
            nxt = []
            for i in range(0, len(terms) - 1, 2):
                nxt.append(self.gate(f"{name}.x{level}_{i // 2}", "XOR", terms[i], terms[i + 1]))
            if len(terms) % 2:
                nxt.append(terms[-1])
            terms = nxt
            level += 1
        if len(terms) == 2:
            return self.gate(name, "XNOR" if invert else "XOR", *terms)
        return self.gate(name, "NOT", terms[0]) if invert else terms[0]

    def gf16_mult(self, name: str, a: List[str], b: List[str]) -> List[str]:
        prods = {}
        for i in range(4):
            for j in range(4):
                prods[(i, j)] = self.gate(f"{name}.p{i}{j}", "AND", a[i], b[j])
        coeff = [[prods[(i, j)] for i in range(4) for j in range(4) if i + j == k] for k in range(7)]
        # x^4 = x + 1, x^5 = x^2 + x, x^6 = x^3 + x^2
        terms = [
            coeff[0] + coeff[4],
            coeff[1] + coeff[4] + coeff[5],
            coeff[2] + coeff[5] + coeff[6],
            coeff[3] + coeff[6],
        ]
        return [self.xor_tree(f"{name}.r{k}", terms[k]) for k in range(4)]


def _linear_rows(fn, width_in: int = 4):
    """Row r lists which input bits feed output bit r of a GF(2)-linear map."""
    cols = [fn(1 << i) for i in range(width_in)]
    return [[i for i in range(width_in) if (cols[i] >> r) & 1] for r in range(4)]


def _anf(table: Sequence[int], nvars: int) -> List[int]:
    """Moebius transform: monomial masks whose coefficient is 1."""
    coef = list(table)
    for i in range(nvars):
        for m in range(1 << nvars):
            if m & (1 << i):
                coef[m] ^= coef[m ^ (1 << i)]
    return [m for m in range(1 << nvars) if coef[m]]


def gen_sbox_netlist(name: str = "sbox") -> Netlist:
    """Deterministic composite-field S-box: inputs ``x0..x7``, outputs ``s0..s7`` (LSB first)."""
    c = _composite()
    b = _Builder()
    xs = [f"x{i}" for i in range(8)]

    comp = [b.xor_tree(f"map.c{r}", [xs[i] for i in range(8) if c.to_comp[r][i]]) for r in range(8)]
    al, ah = comp[:4], comp[4:]

    # d = lam*ah^2 + ah*al + al^2
    hl = b.gf16_mult("mul_hl", ah, al)
    lam_sq = _linear_rows(lambda v: gf16_mul(c.lam, gf16_mul(v, v)))
    sq = _linear_rows(lambda v: gf16_mul(v, v))
    d = [
        b.xor_tree(f"norm.d{r}", [ah[i] for i in lam_sq[r]] + [al[i] for i in sq[r]] + [hl[r]])
        for r in range(4)
    ]

    # GF(2^4) inverse from its algebraic normal form, monomials shared
    inv16 = [0] + [next(y for y in range(1, 16) if gf16_mul(x, y) == 1) for x in range(1, 16)]
    monos: Dict[int, str] = {1 << i: d[i] for i in range(4)}

    def mono(mask: int) -> str:
        if mask in monos:
            return monos[mask]
        low = mask & -mask
        rest = mono(mask ^ low)
        monos[mask] = b.gate(f"inv.m{mask:x}", "AND", rest, monos[low])
        return monos[mask]

    dinv = []
    for r in range(4):
        masks = _anf([(inv16[v] >> r) & 1 for v in range(16)], 4)
        dinv.append(b.xor_tree(f"inv.d{r}", [mono(m) for m in masks if m], invert=0 in masks))

    hsum = [b.gate(f"sum.h{i}", "XOR", ah[i], al[i]) for i in range(4)]
    out_h = b.gf16_mult("mul_oh", ah, dinv)
    out_l = b.gf16_mult("mul_ol", hsum, dinv)
    inv_bits = out_l + out_h

    outs = []
    for r in range(8):
        terms = [inv_bits[i] for i in range(8) if c.out_map[r][i]]
        invert = bool((0x63 >> r) & 1)
        net = b.xor_tree(f"s{r}", terms, invert=invert)
        if net != f"s{r}":
            b.gate(f"s{r}", "BUF", net)
        outs.append(f"s{r}")
    return Netlist(name, tuple(xs), tuple(outs), b.gates, {})


# --- serial SubBytes wrapper -------------------------------------------------


@dataclass(frozen=True)
class SerialSubBytesDevice:
    """One S-box between an 8-bit input register and an 8-bit output register.

    Cycle 0 loads ``x_0 = p_0 ^ k_0`` into the input register while the
    output register holds its reset value 0x00 (enable low).  The input
    register is not cleared between encryptions: before cycle 0 it still
    holds the previous encryption's last S-box input (``prev_input``).  In cycle
    ``i + 1`` the S-box sees ``x_i``, the output register steps from
    ``Sbox(x_{i-1})`` (0x00 for ``i = 0``) to ``Sbox(x_i)``, and the input
    register loads ``x_{i+1}``.  Sixteen bytes take sixteen active cycles.
    """

    sbox: Netlist
    netlist: Netlist

    @classmethod
    def wrap(cls, sbox: Netlist) -> "SerialSubBytesDevice":
        return cls(sbox, build_device_netlist(sbox))

    def run(self, xs: Sequence[int], prev_input: int = 0):
        """Clock the device over ``xs``.

        Returns ``(cycles, reg_bytes)``: ``cycles`` holds one
        ``(state_before, valuation, state_after)`` triple per clock, starting
        with the load cycle, and ``reg_bytes`` the output-register contents
        after each active cycle.
        """
        n = self.netlist
        state: SimState = initial_state(n)
        latches = dict(state.latches)
        for i, bit in enumerate(bits_of(prev_input, 8)):
            latches[f"ireg{i}"] = bit
        state = SimState(latches)
        cycles = []
        reg_bytes = []
        feed = list(xs) + [0]
        for c, x in enumerate(feed):
            before = state
            _, state, val = evaluate(n, bits_of(x, 8) + [int(c > 0)], state)
            cycles.append((before, val, state))
            if c > 0:
                reg_bytes.append(value_of(state.latches[f"oreg{i}"] for i in range(8)))
        return cycles, reg_bytes


def build_device_netlist(sbox: Netlist, prefix: str = "sb.") -> Netlist:
    if len(sbox.inputs) != 8 or len(sbox.outputs) != 8 or sbox.latches:
        raise ValueError("device needs a combinational 8-in/8-out S-box")
    rename = {net: f"ireg{i}" for i, net in enumerate(sbox.inputs)}
    for net in sbox.gates:
        rename[net] = prefix + net
    gates = {
        rename[net]: Gate(g.kind, tuple(rename[s] for s in g.inputs), rename[net])
        for net, g in sbox.gates.items()
    }
    latches = {}
    for i in range(8):
        latches[f"ireg{i}"] = Latch(f"ireg{i}", f"d{i}", 0)
        gates[f"omux{i}"] = Gate("MUX", ("en", f"oreg{i}", rename[sbox.outputs[i]]), f"omux{i}")
        latches[f"oreg{i}"] = Latch(f"oreg{i}", f"omux{i}", 0)
    return Netlist(
        f"{sbox.name}_serial",
        tuple(f"d{i}" for i in range(8)) + ("en",),
        tuple(f"oreg{i}" for i in range(8)),
        gates,
        latches,
    )
