"""Random-coding error exponent for ML decoding with known user activity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .capacity import binary_entropy

RHO_TOL = 1e-9
COARSE_POINTS = 1001


@dataclass(frozen=True)
class ExponentParams:
    n: int
    k: int
    p_prime: float
    v: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if not self.p_prime > 0:
            raise ValueError("p_prime must be positive")
        if self.v < 0:
            raise ValueError("message length must be nonnegative")

    @property
    def load(self) -> float:
        return self.k / self.n


@dataclass(frozen=True)
class ExponentResult:
    er: float
    argmin_gamma: float
    gammas: np.ndarray
    argmax_rho: np.ndarray
    f_values: np.ndarray


def _e0(gamma, rho, kp):
    # no domain checks; finite differences evaluate slightly outside [0, 1]
    return 0.5 * rho * np.log1p(gamma * kp / (rho + 1.0))


def e0(gamma, rho, kp):
    """Gallager-type function (rho/2) ln(1 + gamma kP' / (rho + 1)).

    Accepts scalars or broadcastable arrays.
    """
    g = np.asarray(gamma, dtype=float)
    r = np.asarray(rho, dtype=float)
    if np.any(g <= 0) or np.any(g > 1):
        raise ValueError("gamma must lie in (0, 1]")
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("rho must lie in [0, 1]")
    if np.any(np.asarray(kp) < 0):
        raise ValueError("kp must be nonnegative")
    out = _e0(g, r, np.asarray(kp, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def f_exponent(gamma, rho, params: ExponentParams):
    """E0 less the combinatorial term (k/n) H2(gamma) and the rate term."""
    kp = params.k * params.p_prime
    h = binary_entropy(float(gamma))
    out = _e0(gamma, np.asarray(rho, dtype=float), kp) - params.load * h - gamma * np.asarray(rho) * params.load * params.v
    return float(out) if np.ndim(out) == 0 else out


def _ternary_max(fun, lo: float, hi: float, tol: float) -> float:
    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if fun(m1) < fun(m2):
            lo = m1
        else:
            hi = m2
    return 0.5 * (lo + hi)


def max_over_rho(gamma: float, params: ExponentParams, tol: float = RHO_TOL) -> tuple[float, float]:
    """Maximize f(gamma, .) over [0, 1].

    f is concave in rho, so ternary search suffices; a coarse grid guards
    against a non-unimodal surprise and re-brackets the search if it wins.
    """
    fun = lambda r: f_exponent(gamma, r, params)
    rho = _ternary_max(fun, 0.0, 1.0, tol)
    best_rho, best = rho, fun(rho)
    for edge in (0.0, 1.0):
        val = fun(edge)
        if val > best:
            best_rho, best = edge, val

    grid = np.linspace(0.0, 1.0, COARSE_POINTS)
    vals = f_exponent(gamma, grid, params)
    i = int(np.argmax(vals))
    if vals[i] > best + 1e-12:
        step = grid[1] - grid[0]
        lo, hi = max(0.0, grid[i] - step), min(1.0, grid[i] + step)
        rho = _ternary_max(fun, lo, hi, tol)
        best_rho, best = max(((rho, fun(rho)), (grid[i], vals[i])), key=lambda t: t[1])
    return float(best_rho), float(best)


def error_exponent_er(params: ExponentParams) -> ExponentResult:
    """Min over gamma = j/k (j = 1..k) of the max over rho of f."""
    k = params.k
    gammas = np.arange(1, k + 1) / k
    rhos = np.empty(k)
    fs = np.empty(k)
    for j, g in enumerate(gammas):
        rhos[j], fs[j] = max_over_rho(float(g), params)
    i = int(np.argmin(fs))
    return ExponentResult(float(fs[i]), float(gammas[i]), gammas, rhos, fs)


def achievable_message_length(n: int, k: float, p_prime: float, epsilon: float) -> float:
    """v(n) = n/(2k) (ln(k P' + 1) - epsilon), in nats."""
    cap = math.log1p(k * p_prime)
    if epsilon >= cap:
        raise ValueError(f"epsilon = {epsilon} leaves no rate (ln(1 + kP') = {cap})")
    return n / (2.0 * k) * (cap - epsilon)


def default_p_prime(power: float, margin: float = 0.05) -> float:
    """Codebook power P' = P - margin*P."""
    if not 0 < margin < 1:
        raise ValueError("power margin must be a fraction in (0, 1)")
    return power * (1.0 - margin)


@dataclass(frozen=True)
class PropertyReport:
    kp: np.ndarray
    gamma: np.ndarray
    p1_ok: np.ndarray
    p2_ok: np.ndarray
    p3_ok: np.ndarray
    p1_slack: np.ndarray
    p2_slack: np.ndarray
    p3_error: np.ndarray
    derivative: np.ndarray

    @property
    def violations(self) -> int:
        return int((~self.p1_ok).sum() + (~self.p2_ok).sum() + (~self.p3_ok).sum())

    @property
    def worst(self) -> dict[str, float]:
        return {
            "p1_slack": float(self.p1_slack.min()),
            "p2_slack": float(self.p2_slack.min()),
            "p3_error": float(self.p3_error.max()),
        }


def certify_e0_properties(kp_grid, gamma_grid, rho_points: int = 201, h: float = 1e-5,
                          slack_tol: float = 1e-12, deriv_tol: float = 1e-6) -> PropertyReport:
    """Check monotonicity, concavity and the slope at rho = 0 of E0.

    ``kp_grid`` and ``gamma_grid`` are paired point lists (same length). P1
    compares every adjacent rho pair on a uniform grid, P2 checks midpoint
    concavity on all equally spaced triples of that grid, and P3 compares a
    central difference at rho = 0 with (1/2) ln(1 + gamma kP').
    """
    kp = np.asarray(kp_grid, dtype=float).ravel()
    gamma = np.asarray(gamma_grid, dtype=float).ravel()
    if kp.shape != gamma.shape:
        raise ValueError("kp_grid and gamma_grid must pair up")
    rho = np.linspace(0.0, 1.0, rho_points)

    vals = _e0(gamma[:, None], rho[None, :], kp[:, None])
    p1_slack = np.diff(vals, axis=1).min(axis=1)

    # midpoint concavity on (r - s, r, r + s) for every spacing s
    worst = np.full(kp.shape, np.inf)
    for s in range(1, (rho_points - 1) // 2 + 1):
        mid = vals[:, s:rho_points - s]
        chord = 0.5 * (vals[:, : rho_points - 2 * s] + vals[:, 2 * s:])
        worst = np.minimum(worst, (mid - chord).min(axis=1))
    p2_slack = worst

    deriv = (_e0(gamma, h, kp) - _e0(gamma, -h, kp)) / (2.0 * h)
    target = 0.5 * np.log1p(gamma * kp)
    p3_error = np.abs(deriv - target)

    return PropertyReport(
        kp=kp, gamma=gamma,
        p1_ok=p1_slack >= -slack_tol,
        p2_ok=p2_slack >= -slack_tol,
        p3_ok=p3_error <= deriv_tol,
        p1_slack=p1_slack, p2_slack=p2_slack, p3_error=p3_error, derivative=deriv,
    )


@dataclass(frozen=True)
class UnionBound:
    decoding: float
    power: float

    @property
    def total(self) -> float:
        return min(1.0, self.decoding + self.power)


def union_error_bound(params: ExponentParams, result: ExponentResult | None = None,
                      power_violation: float = 0.0, n_eff: int | None = None) -> UnionBound:
    """Union bound sum_j exp(-n f(j/k, rho*)) plus a power-violation term.

    ``n_eff`` is the blocklength multiplying the exponents (defaults to
    ``params.n``); the decoding part is clamped to 1.
    """
    if result is None:
        result = error_exponent_er(params)
    n = params.n if n_eff is None else n_eff
    with np.errstate(over="ignore"):
        terms = np.exp(-n * result.f_values)
    return UnionBound(decoding=float(min(1.0, terms.sum())), power=float(min(1.0, power_violation)))
