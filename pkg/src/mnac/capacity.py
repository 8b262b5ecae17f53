"""Closed-form symmetric capacity of the Gaussian many-access channel.

All quantities are in nats; conversion to bits happens only at display time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LN2 = math.log(2.0)


class RegimeCase(enum.IntEnum):
    UNBOUNDED_K = 1
    BOUNDED_K = 2
    BOUNDED_ELL = 3

    @property
    def label(self) -> str:
        return {
            1: "unbounded-k",
            2: "bounded-k-unbounded-ell",
            3: "bounded-ell",
        }[int(self)]


@dataclass(frozen=True)
class SystemParams:
    """One operating point: blocklength, user count, activity and power."""

    n: int
    ell: int
    alpha: float
    power: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"ell must be a positive integer, got {self.ell}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.power > 0.0:
            raise ValueError(f"power must be positive, got {self.power}")

    @property
    def k(self) -> float:
        return self.alpha * self.ell

    @classmethod
    def from_k(cls, n: int, ell: int, k: float, power: float) -> "SystemParams":
        return cls(n=n, ell=ell, alpha=k / ell, power=power)


@dataclass(frozen=True)
class ScalingLaw:
    """Map n -> (ell_n, k_n).

    Either parametric, ``ell_n = ell_coef * n**ell_exp`` and
    ``k_n = k_coef * n**k_exp``, or tabulated through ``ell_table`` /
    ``k_table`` (dicts keyed by n). A table overrides the parametric form
    for the quantity it covers.
    """

    power: float
    ell_coef: float = 1.0
    ell_exp: float = 1.0
    k_coef: float = 1.0
    k_exp: float = 1.0
    ell_table: dict[int, float] | None = field(default=None, compare=False)
    k_table: dict[int, float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.ell_table is None and (self.ell_coef <= 0 or self.ell_exp < 0):
            raise ValueError("ell_n = a n^b needs a > 0 and b >= 0")
        if self.k_table is None and (self.k_coef <= 0 or not 0 <= self.k_exp):
            raise ValueError("k_n = c n^d needs c > 0 and d >= 0")
        if self.power <= 0:
            raise ValueError("power must be positive")

    def ell(self, n: int) -> float:
        if self.ell_table is not None:
            return float(self.ell_table[n])
        return self.ell_coef * float(n) ** self.ell_exp

    def k(self, n: int) -> float:
        if self.k_table is not None:
            return float(self.k_table[n])
        return self.k_coef * float(n) ** self.k_exp

    def params(self, n: int) -> SystemParams:
        """Operating point at blocklength n; ell_n is rounded to an integer."""
        ell = max(1, int(round(self.ell(n))))
        k = self.k(n)
        if k > ell * (1 + 1e-12):
            raise ValueError(f"k_n = {k} exceeds ell_n = {ell} at n = {n}")
        return SystemParams(n=int(n), ell=ell, alpha=min(1.0, k / ell), power=self.power)


@dataclass(frozen=True)
class CapacityReport:
    c1: float | None
    theta: float | None
    capacity: float | None
    regime: RegimeCase
    units: str = "nats"

    @property
    def symbolic(self) -> str | None:
        return "o(n)" if self.regime is RegimeCase.BOUNDED_K else None

    def display(self, units: str | None = None) -> dict[str, float | str | None]:
        units = units or self.units
        scale = 1.0 if units == "nats" else 1.0 / LN2

        def conv(x):
            return None if x is None else x * scale

        return {
            "c1": conv(self.c1),
            "theta": self.theta,
            "capacity": conv(self.capacity) if self.capacity is not None else self.symbolic,
            "regime": self.regime.label,
            "units": units,
        }


@dataclass(frozen=True)
class RegimeDiagnosis:
    regime: RegimeCase
    k_unbounded: bool
    ell_unbounded: bool
    assumption1_ok: bool
    assumption2_ok: bool
    notes: tuple[str, ...] = ()


def binary_entropy(p: float) -> float:
    """Binary entropy in nats, with H2(0) = H2(1) = 0."""
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"probability outside [0, 1]: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log1p(-p)


def c1(params: SystemParams) -> float:
    """Genie-aided per-user capacity n/(2k) ln(1 + kP)."""
    k = params.k
    if k <= 0:
        raise ValueError("C1(n) is undefined when no user is expected to be active")
    return params.n / (2.0 * k) * math.log1p(k * params.power)


def theta(params: SystemParams) -> float:
    """Penalty ratio 2 ell H2(alpha) / (n ln(1 + alpha ell P))."""
    if params.k <= 0:
        raise ValueError("theta is undefined for k = 0")
    return (
        2.0 * params.ell * binary_entropy(params.alpha)
        / (params.n * math.log1p(params.k * params.power))
    )


def theta_via_c1(params: SystemParams) -> float:
    # the other algebraic route, H2(alpha) / (alpha C1)
    return binary_entropy(params.alpha) / (params.alpha * c1(params))


def symmetric_capacity(params: SystemParams, regime: RegimeCase = RegimeCase.UNBOUNDED_K) -> CapacityReport:
    regime = RegimeCase(regime)
    if regime is RegimeCase.BOUNDED_ELL:
        ell0 = params.ell
        cap = params.n / (2.0 * ell0) * math.log1p(ell0 * params.power)
        if params.k > 0:
            return CapacityReport(c1(params), theta(params), cap, regime)
        return CapacityReport(None, None, cap, regime)
    if params.k <= 0:
        return CapacityReport(None, None, None if regime is RegimeCase.BOUNDED_K else 0.0, regime)
    g = c1(params)
    t = theta(params)
    if regime is RegimeCase.BOUNDED_K:
        return CapacityReport(g, t, None, regime)
    return CapacityReport(g, t, max(0.0, (1.0 - t) * g), regime)


def bounded_k_message_length(n: int, s_n: float) -> float:
    """Achievable message length n/(2 s_n) ln s_n for bounded k_n."""
    if not s_n > 1.0:
        raise ValueError(f"s_n must exceed 1, got {s_n}")
    return n / (2.0 * s_n) * math.log(s_n)


def _is_unbounded(values: np.ndarray) -> bool:
    # a finite-grid proxy: the second half of the probe grid sets new highs
    half = len(values) // 2
    if half == 0:
        return False
    return bool(values[half:].max() > values[:half].max() * (1 + 1e-9))


def classify_regime(law: ScalingLaw, n_probe: Sequence[int], delta: float = 0.01) -> RegimeDiagnosis:
    """Capacity regime (unbounded k, bounded k, bounded ell) of a scaling law, plus assumption diagnostics."""
    n_probe = sorted(int(n) for n in n_probe)
    if not n_probe:
        raise ValueError("probe grid is empty")
    ells = np.array([law.ell(n) for n in n_probe], dtype=float)
    ks = np.array([law.k(n) for n in n_probe], dtype=float)
    bad = np.nonzero(ks > ells * (1 + 1e-12))[0]
    if bad.size:
        raise ValueError(f"inconsistent law: k_n > ell_n at n = {n_probe[bad[0]]}")

    notes = []
    if law.k_table is None:
        k_unbounded = law.k_exp > 0
        assumption1_ok = law.k_exp <= 1
    else:
        k_unbounded = _is_unbounded(ks)
        ratio = ks / np.asarray(n_probe, dtype=float)
        assumption1_ok = not _is_unbounded(ratio)
    if law.ell_table is None:
        ell_unbounded = law.ell_exp > 0
    else:
        ell_unbounded = _is_unbounded(ells)

    assumption2_ok = True
    if k_unbounded and len(n_probe) > 1:
        log_excess = np.log(ells) - delta * ks
        if np.all(np.diff(log_excess) >= 0):
            assumption2_ok = False
            notes.append(f"ell_n exp(-{delta} k_n) is non-decreasing over the probe grid")
    if not assumption1_ok:
        notes.append("k_n grows faster than linearly in n")

    if not ell_unbounded:
        regime = RegimeCase.BOUNDED_ELL
    elif k_unbounded:
        regime = RegimeCase.UNBOUNDED_K
    else:
        regime = RegimeCase.BOUNDED_K
    return RegimeDiagnosis(regime, k_unbounded, ell_unbounded, assumption1_ok, assumption2_ok, tuple(notes))


def theta_vanishes(law: ScalingLaw, n_probe: Sequence[int] | None = None) -> bool:
    """Whether theta_n -> 0 under the law.

    For parametric laws theta_n ~ k ln(ell/k) / (n ln k), which vanishes unless
    k_n is linear in n and ell_n grows faster than linearly. Tabulated laws
    fall back to a numeric check that theta decreases across the probe grid
    and ends below half its initial value.
    """
    if law.ell_table is None and law.k_table is None:
        return law.k_exp < 1 or law.ell_exp <= 1
    if not n_probe:
        raise ValueError("tabulated laws need a probe grid")
    th = np.array([theta(law.params(n)) for n in sorted(n_probe)])
    return bool(np.all(np.diff(th) <= 0) and th[-1] < 0.5 * th[0])


@dataclass(frozen=True)
class SweepRow:
    n: int
    ell: int
    alpha: float
    k: float
    c1_nats: float
    theta: float
    capacity_nats: float

    @property
    def capacity_bits(self) -> float:
        return self.capacity_nats / LN2


SWEEP_HEADER = ("n", "ell", "alpha", "k", "c1_nats", "theta", "capacity_nats", "capacity_bits")


def sweep_capacity(law: ScalingLaw, n_range: Sequence[int]) -> list[SweepRow]:
    rows = []
    for n in n_range:
        p = law.params(int(n))
        rep = symmetric_capacity(p, RegimeCase.UNBOUNDED_K)
        rows.append(SweepRow(p.n, p.ell, p.alpha, p.k, rep.c1, rep.theta, rep.capacity))
    return rows


def log_grid(lo: int, hi: int, points: int) -> list[int]:
    """Integer, strictly increasing, log-spaced grid from lo to hi inclusive."""
    raw = np.unique(np.round(np.geomspace(lo, hi, points)).astype(int))
    return [int(x) for x in raw]
