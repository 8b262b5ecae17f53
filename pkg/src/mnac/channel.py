"""Random activity, random messages and the noisy superposition channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import CodebookSet, superpose


@dataclass(frozen=True, eq=False)
class TransmittedState:
    """Per-user message indices; 0 means the user is silent."""

    messages: np.ndarray
    m: int

    def __post_init__(self):
        w = np.asarray(self.messages, dtype=np.int64)
        if w.ndim != 1:
            raise ValueError("messages must be a 1-D array")
        if w.size and (w.min() < 0 or w.max() > self.m):
            raise ValueError(f"message indices must lie in 0..{self.m}")
        w.setflags(write=False)
        object.__setattr__(self, "messages", w)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.messages)

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.messages))


@dataclass(frozen=True, eq=False)
class ChannelOutput:
    y: np.ndarray
    n0: int
    truth: TransmittedState

    @property
    def y_a(self) -> np.ndarray:
        return self.y[: self.n0]

    @property
    def y_b(self) -> np.ndarray:
        return self.y[self.n0:]


def sample_state(ell: int, alpha: float, m: int, rng: np.random.Generator) -> TransmittedState:
    """Each user is active w.p. alpha, then picks a uniform message in 1..M."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    active = rng.random(ell) < alpha
    msgs = rng.integers(1, m + 1, size=ell)
    return TransmittedState(np.where(active, msgs, 0), m)


def transmit(codebooks: CodebookSet, state: TransmittedState, rng: np.random.Generator,
             noise_variance: float = 1.0) -> ChannelOutput:
    """Y = sum_k S_k(w_k) + Z with Z ~ N(0, noise_variance I)."""
    if state.messages.shape != (codebooks.ell,):
        raise ValueError("state does not match the codebook user count")
    y = superpose(codebooks, state.messages)
    if noise_variance > 0:
        y = y + rng.standard_normal(codebooks.n) * np.sqrt(noise_variance)
    elif noise_variance < 0:
        raise ValueError("noise variance must be nonnegative")
    return ChannelOutput(y, codebooks.n0, state)
