"""Signature-plus-message Gaussian codebooks and the encoder.

Each user owns one signature of length n0 followed by M message-bearing
columns of length n - n0. Entries are i.i.d. N(0, P') drawn from keyed
streams, so user u's codebook does not depend on how many users exist.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import chi2

from . import capacity as cap
from . import rng as rngmod

CHARGE = "charge-as-error"
RESAMPLE = "resample"
POWER_POLICIES = (CHARGE, RESAMPLE)

MAGIC = b"MNAC"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHHIIIIQ")
assert HEADER.size == 32

# codebooks are materialized; refuse anything larger than this
MAX_CODEBOOK_BYTES = 1 << 31


class InfeasibleError(ValueError):
    """The scheme has no valid parameters at this operating point."""


@dataclass(frozen=True, eq=False)
class CodebookSet:
    n: int
    n0: int
    m: int
    signatures: np.ndarray  # (ell, n0)
    message_parts: np.ndarray  # (ell, n - n0, m)
    seed: int
    power: float
    p_prime: float
    violations: np.ndarray  # (ell, m): codeword breaks the power constraint

    def __post_init__(self):
        for a in (self.signatures, self.message_parts, self.violations):
            a.setflags(write=False)

    @property
    def ell(self) -> int:
        return self.signatures.shape[0]

    @property
    def n_b(self) -> int:
        return self.n - self.n0

    @property
    def power_ok(self) -> np.ndarray:
        return ~self.violations.any(axis=1)

    def codeword(self, user: int, message: int) -> np.ndarray:
        """Full length-n codeword for message in 1..M (0 is the all-zero word)."""
        if message == 0:
            return np.zeros(self.n)
        if not 1 <= message <= self.m:
            raise ValueError(f"message index {message} outside 0..{self.m}")
        return np.concatenate([self.signatures[user], self.message_parts[user, :, message - 1]])

    def codeword_power(self) -> np.ndarray:
        """Mean-square power (1/n) sum s^2 of every codeword, shape (ell, m)."""
        sig = (self.signatures ** 2).sum(axis=1)
        msg = (self.message_parts ** 2).sum(axis=1)
        return (sig[:, None] + msg) / self.n

    def same_as(self, other: "CodebookSet") -> bool:
        return (
            (self.n, self.n0, self.m, self.seed) == (other.n, other.n0, other.m, other.seed)
            and np.array_equal(self.signatures, other.signatures)
            and np.array_equal(self.message_parts, other.message_parts)
        )


def signature_length(params: cap.SystemParams, epsilon: float, theta_n: float, vanishing: bool) -> int:
    """Signature length n0, rounded up; raises when it would fill the block."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    n = params.n
    if vanishing:
        raw = epsilon * n
    else:
        raw = (1.0 + epsilon / math.log1p(params.k * params.power)) * theta_n * n
    n0 = math.ceil(raw - 1e-9)
    if n0 >= n:
        raise InfeasibleError(f"signature needs n0 = {n0} >= n = {n}")
    return max(1, n0)


def log_codeword_count(capacity_nats: float, epsilon: float, n: int, k: float, vanishing: bool) -> float:
    if vanishing:
        return (1.0 - epsilon) * capacity_nats
    return capacity_nats - epsilon * n / k


def codeword_count(params: cap.SystemParams, epsilon: float, vanishing: bool,
                   regime: cap.RegimeCase = cap.RegimeCase.UNBOUNDED_K,
                   capacity_nats: float | None = None) -> int:
    """M = ceil(exp(log M)) with log M backed off from C(n) by epsilon."""
    if capacity_nats is None:
        capacity_nats = cap.symmetric_capacity(params, regime).capacity
        if capacity_nats is None:
            raise InfeasibleError("no finite capacity in the bounded-k regime")
    log_m = log_codeword_count(capacity_nats, epsilon, params.n, params.k, vanishing)
    if log_m <= 0:
        raise InfeasibleError(f"log M = {log_m:.6g} <= 0: no positive rate")
    return math.ceil(math.exp(log_m) - 1e-12)


def _violations(sig: np.ndarray, msg: np.ndarray, n: int, power: float) -> np.ndarray:
    energy = (sig ** 2).sum(axis=-1)[..., None] + (msg ** 2).sum(axis=-2)
    return energy > n * power


def _truncated_radius2(q: np.ndarray, limit: float, dof: int, p_prime: float) -> np.ndarray:
    """Squared norms of N(0, P' I_dof) vectors conditioned on norm^2 <= limit."""
    top = chi2.cdf(limit / p_prime, dof)
    r2 = p_prime * chi2.ppf(q * top, dof)
    return np.minimum(r2, limit * (1.0 - 1e-12))


def _rescale(cols: np.ndarray, r2: np.ndarray) -> np.ndarray:
    norms = np.sqrt((cols ** 2).sum(axis=0))
    norms[norms == 0] = 1.0
    return cols / norms * np.sqrt(r2)


def _redraw_violations(sig: np.ndarray, msg: np.ndarray, n: int, power: float, p_prime: float,
                       gen: np.random.Generator) -> None:
    """In-place redraw of one user's offending codewords.

    A Gaussian vector is an isotropic direction times an independent radius,
    so keeping each offending column's direction and drawing its radius from
    the chi-square law truncated to the remaining energy budget gives exactly
    the distribution of rejection sampling that column until it complies.
    A signature that alone exceeds the budget is first redrawn the same way,
    conditioned on its per-symbol share n0 * P.
    """
    n0, n_b = sig.size, msg.shape[0]
    q = gen.random(msg.shape[1] + 1)
    sig_energy = float(sig @ sig)
    if n0 and sig_energy > n * power:
        sig[:] = _rescale(sig[:, None], _truncated_radius2(q[-1:], n0 * power, n0, p_prime))[:, 0]
        sig_energy = float(sig @ sig)
    room = n * power - sig_energy
    cols = np.flatnonzero(_violations(sig, msg, n, power))
    if cols.size:
        msg[:, cols] = _rescale(msg[:, cols], _truncated_radius2(q[cols], room, n_b, p_prime))


def generate(n: int, n0: int, m: int, ell: int, power: float, p_prime: float, seed: int,
             path: tuple[int, ...] = (), policy: str = CHARGE) -> CodebookSet:
    """Draw every user's codebook from its own keyed stream.

    ``path`` extends the stream key, e.g. with a trial index when codebooks
    are fresh per trial. Under the ``resample`` policy every offending
    codeword is redrawn from its law conditioned on meeting the constraint,
    so the returned codebook always complies.
    """
    if not 0 <= n0 < n:
        raise ValueError(f"need 0 <= n0 < n, got n0={n0}, n={n}")
    if m < 1 or ell < 1:
        raise ValueError("need m >= 1 and ell >= 1")
    if not 0 < p_prime < power:
        raise ValueError("codebook power must satisfy 0 < P' < P")
    if policy not in POWER_POLICIES:
        raise ValueError(f"unknown power policy {policy!r}")
    sd = math.sqrt(p_prime)
    n_b = n - n0
    size = 8 * ell * (n0 + n_b * m)
    if size > MAX_CODEBOOK_BYTES:
        raise InfeasibleError(f"codebook needs {size / 2**30:.1f} GiB (ell={ell}, n={n}, M={m}); "
                              f"limit is {MAX_CODEBOOK_BYTES / 2**30:.0f} GiB")
    sigs = np.empty((ell, n0))
    msgs = np.empty((ell, n_b, m))
    for u in range(ell):
        sigs[u] = rngmod.stream(seed, *path, rngmod.CODEBOOK, rngmod.SIGNATURE, u).standard_normal(n0) * sd
        msgs[u] = rngmod.stream(seed, *path, rngmod.CODEBOOK, rngmod.MESSAGE, u).standard_normal((n_b, m)) * sd
    bad = _violations(sigs, msgs, n, power)

    if policy == RESAMPLE:
        for u in np.flatnonzero(bad.any(axis=1)):
            _redraw_violations(sigs[u], msgs[u], n, power, p_prime,
                               rngmod.stream(seed, *path, rngmod.RESAMPLE, u))
            bad[u] = _violations(sigs[u], msgs[u], n, power)
    return CodebookSet(n, n0, m, sigs, msgs, int(seed), float(power), float(p_prime), bad)


def power_violation_probability(n: int, p_prime: float, power: float, codewords: int = 1) -> float:
    """P{at least one of `codewords` independent N(0, P') words exceeds n P}."""
    p = chi2.sf(n * power / p_prime, n)
    return float(-np.expm1(codewords * np.log1p(-p)))


def encode(codebooks: CodebookSet, messages) -> np.ndarray:
    """Per-user transmitted codewords, shape (ell, n); message 0 sends zeros."""
    w = np.asarray(messages, dtype=np.int64)
    if w.shape != (codebooks.ell,):
        raise ValueError(f"expected {codebooks.ell} messages, got shape {w.shape}")
    if w.min(initial=0) < 0 or w.max(initial=0) > codebooks.m:
        raise ValueError(f"message indices must lie in 0..{codebooks.m}")
    out = np.zeros((codebooks.ell, codebooks.n))
    act = np.nonzero(w)[0]
    out[act, : codebooks.n0] = codebooks.signatures[act]
    out[act, codebooks.n0:] = codebooks.message_parts[act, :, w[act] - 1]
    return out


def superpose(codebooks: CodebookSet, messages) -> np.ndarray:
    """Noiseless channel output: the sum of the active users' codewords."""
    w = np.asarray(messages, dtype=np.int64)
    if w.shape != (codebooks.ell,) or w.min(initial=0) < 0 or w.max(initial=0) > codebooks.m:
        raise ValueError("invalid message vector")
    act = np.nonzero(w)[0]
    y = np.zeros(codebooks.n)
    if act.size:
        y[: codebooks.n0] = codebooks.signatures[act].sum(axis=0)
        y[codebooks.n0:] = codebooks.message_parts[act, :, w[act] - 1].sum(axis=0)
    return y


def dump(codebooks: CodebookSet, path) -> None:
    """Write the little-endian binary layout: 32-byte header, then float64 blocks."""
    header = HEADER.pack(MAGIC, FORMAT_VERSION, 0, codebooks.n, codebooks.n0,
                         codebooks.ell, codebooks.m, codebooks.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<dd", codebooks.power, codebooks.p_prime))
        fh.write(codebooks.signatures.astype("<f8").tobytes(order="C"))
        fh.write(codebooks.message_parts.astype("<f8").tobytes(order="C"))


def load(path) -> CodebookSet:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size + 16:
        raise ValueError("file too short for a codebook header")
    magic, version, _, n, n0, ell, m, seed = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported codebook format version {version}")
    power, p_prime = struct.unpack_from("<dd", raw, HEADER.size)
    off = HEADER.size + 16
    n_sig = ell * n0
    n_msg = ell * (n - n0) * m
    if len(raw) != off + 8 * (n_sig + n_msg):
        raise ValueError("codebook payload size does not match header")
    sigs = np.frombuffer(raw, dtype="<f8", count=n_sig, offset=off).reshape(ell, n0).astype(float)
    msgs = np.frombuffer(raw, dtype="<f8", count=n_msg, offset=off + 8 * n_sig).reshape(ell, n - n0, m).astype(float)
    bad = _violations(sigs, msgs, n, power)
    return CodebookSet(n, n0, m, sigs, msgs, seed, power, p_prime, bad)
