"""Two-stage receiver: activity detection from signatures, then ML decoding.

Stage 1 solves

    minimize ||y_a - S_a x||^2  over binary x with ||x||_0 <= (1 + 2 delta) k

either exhaustively or by forward selection with backward pruning. Stage 2
picks one codeword per detected user to minimize ||y_b - sum_u A_u[:, w_u]||^2,
exhaustively or by cyclic coordinate descent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, islice

import numpy as np

from .channel import ChannelOutput
from .codec import CodebookSet

ENUMERATION_LIMIT = 10_000_000
MAX_SWEEPS = 50
DETECTORS = ("exhaustive", "greedy")
DECODERS = ("exhaustive", "iterative")


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class DetectionResult:
    support_hat: tuple[int, ...]
    objective: float
    method: str
    exact: bool
    budget: int


@dataclass(frozen=True)
class DecodeResult:
    messages_hat: dict[int, int]
    objective: float
    method: str
    exact: bool
    history: tuple[float, ...] = field(default=(), repr=False)


def delta_n(k: float) -> float:
    """min(1/2, k^(-1/3)): delta^2 k grows without bound, delta ln k -> 0."""
    if k < 1:
        raise ValueError("delta_n needs k >= 1")
    return min(0.5, k ** (-1.0 / 3.0))


def support_budget(k: float, delta: float) -> int:
    return int(math.floor((1.0 + 2.0 * delta) * k + 1e-9))


def _check_budget(budget: int, ell: int) -> int:
    if budget < 0:
        raise ValueError("support budget must be nonnegative")
    return min(budget, ell)


def detection_candidates(ell: int, budget: int) -> int:
    return sum(math.comb(ell, j) for j in range(min(budget, ell) + 1))


CHUNK_ROWS = 1 << 16


@lru_cache(maxsize=64)
def _subset_block(ell: int, size: int, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    combos = islice(combinations(range(ell), size), start, stop)
    idx = np.array(list(combos), dtype=np.int64)
    if size == 0:
        idx = np.zeros((1, 0), dtype=np.int64)
    x = np.zeros((idx.shape[0], ell))
    np.put_along_axis(x, idx, 1.0, axis=1)
    return idx, x


def _subset_chunks(ell: int, size: int):
    """(index rows, binary rows) for all size-subsets, lexicographic order."""
    total = math.comb(ell, size)
    for start in range(0, total, CHUNK_ROWS):
        yield _subset_block(ell, size, start, min(total, start + CHUNK_ROWS))


def _residual(y: np.ndarray, columns: np.ndarray) -> float:
    r = y - columns.sum(axis=1) if columns.shape[1] else y
    return float(r @ r)


def _near_min(values: np.ndarray, scale: float) -> np.ndarray:
    lo = values.min()
    return np.flatnonzero(values <= lo + 1e-9 * scale)


def _lex_first(rows: list[tuple[int, ...]]) -> int:
    # shorter prefixes sort first, so pad with -1
    width = max((len(r) for r in rows), default=0)
    if width == 0:
        return 0
    padded = np.full((len(rows), width), -1, dtype=np.int64)
    for i, r in enumerate(rows):
        padded[i, : len(r)] = r
    return int(np.lexsort(padded.T[::-1])[0])


def detect_activity_exhaustive(y_a, signatures, k: float, delta: float | None = None,
                               budget: int | None = None) -> DetectionResult:
    """Global minimizer of the binary support program by enumeration.

    ``signatures`` has one row per user. Ties go to the lexicographically
    smallest support tuple.
    """
    y = np.asarray(y_a, dtype=float)
    S = np.asarray(signatures, dtype=float).T  # (n0, ell)
    ell = S.shape[1]
    if budget is None:
        budget = support_budget(k, delta_n(k) if delta is None else delta)
    budget = _check_budget(budget, ell)
    total = detection_candidates(ell, budget)
    if total > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(
            f"{total} candidate supports exceed {ENUMERATION_LIMIT}; use the greedy detector"
        )

    corr = S.T @ y
    gram = S.T @ S
    yy = float(y @ y)
    scale = 1.0 + yy + float(np.abs(gram).sum())

    # screen with the Gram expansion, then rescore the near-best directly
    cand_idx, cand_x = [], []
    best = math.inf
    for size in range(budget + 1):
        for idx, x in _subset_chunks(ell, size):
            obj = yy - 2.0 * (x @ corr) + ((x @ gram) * x).sum(axis=1)
            lo = float(obj.min())
            if lo > best + 1e-9 * scale:
                continue
            best = min(best, lo)
            keep = _near_min(obj, scale)
            cand_idx.extend(tuple(int(i) for i in row) for row in idx[keep])
            cand_x.append(x[keep])
    xs = np.concatenate(cand_x)
    resid = y[:, None] - S @ xs.T
    direct = (resid ** 2).sum(axis=0)
    ties = np.flatnonzero(direct == direct.min())
    pick = ties[_lex_first([cand_idx[i] for i in ties])]
    return DetectionResult(cand_idx[pick], float(direct[pick]), "exhaustive", True, budget)


def detect_activity_greedy(y_a, signatures, k: float, delta: float | None = None,
                           budget: int | None = None) -> DetectionResult:
    """Forward selection with unit coefficients, then backward pruning."""
    y = np.asarray(y_a, dtype=float)
    S = np.asarray(signatures, dtype=float)  # (ell, n0)
    ell = S.shape[0]
    if budget is None:
        budget = support_budget(k, delta_n(k) if delta is None else delta)
    budget = _check_budget(budget, ell)
    energy = (S ** 2).sum(axis=1)

    r = y.copy()
    obj = float(r @ r)
    chosen = np.zeros(ell, dtype=bool)
    while chosen.sum() < budget:
        trial = obj - 2.0 * (S @ r) + energy
        trial[chosen] = np.inf
        i = int(np.argmin(trial))
        if not trial[i] < obj:
            break
        chosen[i] = True
        r -= S[i]
        obj = float(r @ r)

    while chosen.any():
        idx = np.flatnonzero(chosen)
        trial = obj + 2.0 * (S[idx] @ r) + energy[idx]
        j = int(np.argmin(trial))
        if trial[j] > obj:
            break
        chosen[idx[j]] = False
        r += S[idx[j]]
        obj = float(r @ r)

    support = tuple(int(i) for i in np.flatnonzero(chosen))
    return DetectionResult(support, _residual(y, S[list(support)].T), "greedy", False, budget)


def _decode_residual(y: np.ndarray, parts: np.ndarray, support, messages) -> float:
    r = y.copy()
    for u, w in zip(support, messages):
        r -= parts[u, :, w - 1]
    return float(r @ r)


def decode_messages_exhaustive(y_b, codebooks: CodebookSet | np.ndarray, support) -> DecodeResult:
    """Joint ML choice of one codeword per user in ``support``.

    ``codebooks`` is a CodebookSet or a raw (ell, n_b, M) message-part array.
    Ties go to the lexicographically smallest message vector, users taken in
    ascending order.
    """
    parts = codebooks.message_parts if isinstance(codebooks, CodebookSet) else np.asarray(codebooks)
    y = np.asarray(y_b, dtype=float)
    support = tuple(sorted(int(u) for u in support))
    s = len(support)
    m = parts.shape[2]
    if s == 0:
        return DecodeResult({}, float(y @ y), "exhaustive", True)
    if m ** s > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(f"M^|S| = {m}^{s} exceeds {ENUMERATION_LIMIT}; use the iterative decoder")

    A = [parts[u] for u in support]  # each (n_b, M)
    total = np.full((m,) * s, float(y @ y))
    for a, Au in enumerate(A):
        unary = -2.0 * (y @ Au) + (Au ** 2).sum(axis=0)
        shape = [1] * s
        shape[a] = m
        total = total + unary.reshape(shape)
        for b in range(a + 1, s):
            pair = 2.0 * (Au.T @ A[b])
            shape = [1] * s
            shape[a] = shape[b] = m
            total = total + pair.reshape(shape)

    flat = total.ravel()
    scale = 1.0 + float(y @ y) + sum(float((Au ** 2).sum()) for Au in A)
    scored = []
    for j in _near_min(flat, scale):
        msgs = tuple(int(i) + 1 for i in np.unravel_index(j, total.shape))
        scored.append((_decode_residual(y, parts, support, msgs), msgs))
    objective, msgs = min(scored)
    return DecodeResult(dict(zip(support, msgs)), objective, "exhaustive", True)


def decode_messages_iterative(y_b, codebooks: CodebookSet | np.ndarray, support,
                              max_sweeps: int = MAX_SWEEPS) -> DecodeResult:
    """Cyclic coordinate descent on the ML objective.

    Users are initialized one at a time against the running residual, then
    swept in order, each re-chosen with the others held fixed, until a full
    sweep changes nothing.
    """
    parts = codebooks.message_parts if isinstance(codebooks, CodebookSet) else np.asarray(codebooks)
    y = np.asarray(y_b, dtype=float)
    support = tuple(sorted(int(u) for u in support))
    if not support:
        return DecodeResult({}, float(y @ y), "iterative", False, (float(y @ y),))
    energy = {u: (parts[u] ** 2).sum(axis=0) for u in support}

    def best_for(u, r):
        # argmin_w ||r - A_u[:, w]||^2, first index on ties
        return int(np.argmin(energy[u] - 2.0 * (r @ parts[u])))

    r = y.copy()
    w = {}
    for u in support:
        w[u] = best_for(u, r) + 1
        r -= parts[u, :, w[u] - 1]
    obj = float(r @ r)
    history = [obj]
    for _ in range(max_sweeps):
        changed = False
        for u in support:
            r_u = r + parts[u, :, w[u] - 1]
            cand = best_for(u, r_u) + 1
            if cand != w[u]:
                new_r = r_u - parts[u, :, cand - 1]
                new_obj = float(new_r @ new_r)
                if new_obj < obj:
                    w[u], r, obj, changed = cand, new_r, new_obj, True
            history.append(obj)
        if not changed:
            break
    if any(b > a + 1e-9 * (1.0 + abs(a)) for a, b in zip(history, history[1:])):
        raise AssertionError("coordinate descent objective increased")
    obj = _decode_residual(y, parts, support, [w[u] for u in support])
    return DecodeResult(w, obj, "iterative", len(support) == 1, tuple(history))


def detect(y_a, signatures, k: float, method: str = "exhaustive", delta: float | None = None,
           budget: int | None = None) -> DetectionResult:
    if method == "exhaustive":
        return detect_activity_exhaustive(y_a, signatures, k, delta, budget)
    if method == "greedy":
        return detect_activity_greedy(y_a, signatures, k, delta, budget)
    raise ValueError(f"unknown detector {method!r}")


def decode(y_b, codebooks, support, method: str = "exhaustive") -> DecodeResult:
    if method == "exhaustive":
        return decode_messages_exhaustive(y_b, codebooks, support)
    if method == "iterative":
        return decode_messages_iterative(y_b, codebooks, support)
    raise ValueError(f"unknown decoder {method!r}")


def two_stage_decode(output: ChannelOutput | np.ndarray, codebooks: CodebookSet, k: float,
                     detector: str = "exhaustive", decoder: str = "exhaustive",
                     delta: float | None = None) -> tuple[DetectionResult, DecodeResult, np.ndarray]:
    """Run both stages; also returns the full estimated message vector."""
    y = output.y if isinstance(output, ChannelOutput) else np.asarray(output, dtype=float)
    n0 = codebooks.n0
    if k >= 1:
        det = detect(y[:n0], codebooks.signatures, k, detector, delta)
    else:
        # with fewer than one user expected the budget is floor((1+2 delta) k) <= 1
        det = detect(y[:n0], codebooks.signatures, k, detector, 0.5 if delta is None else delta)
    dec = decode(y[n0:], codebooks, det.support_hat, decoder)
    est = np.zeros(codebooks.ell, dtype=np.int64)
    for u, w in dec.messages_hat.items():
        est[u] = w
    return det, dec, est
