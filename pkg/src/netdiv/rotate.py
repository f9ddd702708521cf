"""Rotation of variants across partial-reconfiguration regions (PRRs).

One PRR is active per encryption window; the others are idle and may be
reconfigured to their next variant in the meantime.  PRRs activate in a
fixed cyclic order, and each PRR walks its own category of variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import PlanInvalid, TooFewVariants

DEFAULT_BANDWIDTH = 8192  # bytes per encryption period


@dataclass(frozen=True)
class RotationPlan:
    categories: Tuple[Tuple[int, ...], ...]
    window: int = 1
    bandwidth: float = DEFAULT_BANDWIDTH
    delta_sizes: Mapping[int, int] = field(default_factory=dict)  # bytes to load variant id
    order: Optional[Tuple[int, ...]] = None                       # PRR activation order; None = 0..n-1

    def __post_init__(self):
        if not self.categories or any(len(c) == 0 for c in self.categories):
            raise PlanInvalid("every PRR needs a nonempty category")
        ids = [v for c in self.categories for v in c]
        if len(ids) != len(set(ids)):
            raise PlanInvalid("categories must not share variants")
        if self.window < 1:
            raise PlanInvalid("window must be at least 1")
        if self.bandwidth <= 0:
            raise PlanInvalid("bandwidth must be positive")
        if self.order is None:
            object.__setattr__(self, "order", tuple(range(len(self.categories))))
        if sorted(self.order) != list(range(len(self.categories))):
            raise PlanInvalid("order must be a permutation of the PRR indices")

    @property
    def n_prr(self) -> int:
        return len(self.categories)

    @property
    def prr_order(self) -> Tuple[int, ...]:
        return self.order

    @property
    def variant_ids(self) -> List[int]:
        return [v for c in self.categories for v in c]

    @property
    def period(self) -> int:
        """Encryptions after which the schedule repeats."""
        lcm = 1
        for c in self.categories:
            lcm = lcm * len(c) // math.gcd(lcm, len(c))
        return self.window * self.n_prr * lcm

    def to_json(self) -> dict:
        return {
            "n_prr": self.n_prr,
            "categories": [list(c) for c in self.categories],
            "window": self.window,
            "bandwidth": self.bandwidth,
            "order": list(self.prr_order),
            "delta_sizes": {str(k): int(v) for k, v in sorted(self.delta_sizes.items())},
        }

    @classmethod
    def from_json(cls, d: dict) -> "RotationPlan":
        return cls(
            tuple(tuple(int(v) for v in c) for c in d["categories"]),
            int(d.get("window", 1)),
            float(d.get("bandwidth", DEFAULT_BANDWIDTH)),
            {int(k): int(v) for k, v in d.get("delta_sizes", {}).items()},
            tuple(d["order"]) if d.get("order") is not None else None,
        )


def partition(ids: Sequence[int], n_prr: int = 8, seed: int = 0) -> Tuple[Tuple[int, ...], ...]:
    """Shuffle ``ids`` with ``seed`` and deal them round-robin into ``n_prr`` categories."""
    if n_prr < 1:
        raise ValueError("n_prr must be positive")
    if len(ids) < n_prr:
        raise TooFewVariants(f"{len(ids)} variants cannot fill {n_prr} PRRs")
    ids = list(ids)
    perm = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    return tuple(tuple(shuffled[j::n_prr]) for j in range(n_prr))


def make_plan(ids: Sequence[int], n_prr: int = 8, seed: int = 0, window: int = 1,
              bandwidth: float = DEFAULT_BANDWIDTH, delta_sizes: Optional[Mapping[int, int]] = None) -> RotationPlan:
    return RotationPlan(partition(ids, n_prr, seed), window, bandwidth, dict(delta_sizes or {}))


def next_active(plan: RotationPlan, e: int) -> Tuple[int, int]:
    """(PRR index, variant id) serving encryption ``e``."""
    if e < 0:
        raise ValueError("encryption index must be non-negative")
    slot = e // plan.window
    prr = plan.prr_order[slot % plan.n_prr]
    cat = plan.categories[prr]
    return prr, cat[(slot // plan.n_prr) % len(cat)]


def usage_counts(plan: RotationPlan, n: int, start: int = 0) -> Dict[int, int]:
    counts = {v: 0 for v in plan.variant_ids}
    for e in range(start, start + n):
        counts[next_active(plan, e)[1]] += 1
    return counts


@dataclass(frozen=True)
class Violation:
    constraint: str        # "active_time" | "no_stall"
    prr: Optional[int]
    variant: Optional[int]
    detail: str

    def to_json(self) -> dict:
        return {"constraint": self.constraint, "prr": self.prr, "variant": self.variant, "detail": self.detail}


def reconfig_periods(plan: RotationPlan, variant: int) -> int:
    return math.ceil(plan.delta_sizes.get(variant, 0) / plan.bandwidth)


def validate_plan(plan: RotationPlan, mtd_unprotected: int, budget: Optional[int] = None) -> List[Violation]:
    """Constraint violations of ``plan``; an empty list means the plan is sound.

    (a) each variant stays active for fewer encryptions than the
    unprotected MTD; (b) each PRR can load its next variant within the
    ``(n_prr - 1) * window`` periods it sits idle.
    """
    if mtd_unprotected < 1:
        raise ValueError("mtd_unprotected must be at least 1")
    out = []
    if plan.window >= mtd_unprotected:
        out.append(Violation("active_time", None, None,
                             f"window {plan.window} is not below unprotected MTD {mtd_unprotected}"))
    idle = (plan.n_prr - 1) * plan.window
    for prr, cat in enumerate(plan.categories):
        if len(cat) == 1:
            continue  # never reconfigured
        for v in cat:
            need = reconfig_periods(plan, v)
            if need > idle:
                out.append(Violation("no_stall", prr, v, f"needs {need} periods, {idle} available"))
    return out


def simulate_schedule(plan: RotationPlan, n_encryptions: int) -> List[int]:
    """Encryption indices at which the active PRR was still reconfiguring.

    Every idle PRR starts loading its next variant as soon as its window
    ends and all idle PRRs reconfigure in parallel.
    """
    ready_at = [0] * plan.n_prr            # first period the PRR's next variant is usable
    loaded = [0] * plan.n_prr              # position in its category currently loaded
    stalls = []
    for e in range(n_encryptions):
        prr, v = next_active(plan, e)
        cat = plan.categories[prr]
        pos = cat.index(v)
        if loaded[prr] != pos:
            stalls.append(e)
            loaded[prr] = pos
        elif e < ready_at[prr]:
            stalls.append(e)
        if (e + 1) % plan.window == 0 and len(cat) > 1:
            nxt = (pos + 1) % len(cat)
            ready_at[prr] = e + 1 + reconfig_periods(plan, cat[nxt])
            loaded[prr] = nxt
    return stalls
