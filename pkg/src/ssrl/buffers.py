"""Replay buffers for real and hallucinated transitions.

Each transition stores the learner state, action, reward, next state,
termination flag, the history snapshot at s (newest first), the gait phase
step at s, and episode bookkeeping so multi-step training segments never
cross episode boundaries. Buffers are bounded FIFO rings tagged ``env`` or
``model``; inserts with the wrong source tag are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    d: bool
    hist: np.ndarray          # (h, state_dim), newest first
    phase_step: int
    episode_id: int
    step_in_episode: int
    source: str = "env"


class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int, action_dim: int,
                 history_len: int, tag: str):
        if tag not in ("env", "model"):
            raise ValueError("tag must be 'env' or 'model'")
        self.capacity = int(capacity)
        self.tag = tag
        self.size = 0
        self._head = 0
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.d = np.zeros(capacity)
        self.hist = np.zeros((capacity, history_len, state_dim))
        self.phase_step = np.zeros(capacity, dtype=np.int64)
        self.episode_id = np.zeros(capacity, dtype=np.int64)
        self.step_in_episode = np.zeros(capacity, dtype=np.int64)

    def __len__(self) -> int:
        return self.size

    def clear(self) -> None:
        self.size = 0
        self._head = 0

    def add(self, tr: Transition) -> None:
        if tr.source != self.tag:
            raise ValueError(f"buffer tagged '{self.tag}' rejects "
                             f"'{tr.source}' transition")
        i = self._head
        self.s[i] = tr.s
        self.a[i] = tr.a
        self.r[i] = tr.r
        self.s_next[i] = tr.s_next
        self.d[i] = float(tr.d)
        self.hist[i] = tr.hist
        self.phase_step[i] = tr.phase_step
        self.episode_id[i] = tr.episode_id
        self.step_in_episode[i] = tr.step_in_episode
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def chronological(self) -> np.ndarray:
        """Slot indices oldest to newest."""
        start = (self._head - self.size) % self.capacity
        return (start + np.arange(self.size)) % self.capacity

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def gather(self, idx: np.ndarray) -> dict:
        """Batch view by chronological index (uniform over current contents)."""
        slots = self.chronological()[idx]
        return {"s": self.s[slots], "a": self.a[slots], "r": self.r[slots],
                "s_next": self.s_next[slots], "d": self.d[slots],
                "hist": self.hist[slots], "phase_step": self.phase_step[slots]}

    def segment_starts(self, horizon: int) -> np.ndarray:
        """Chronological indices that begin ``horizon`` consecutive
        same-episode transitions (training segments for the multi-step loss)."""
        order = self.chronological()
        if self.size < horizon:
            return np.zeros(0, dtype=np.int64)
        ep = self.episode_id[order]
        st = self.step_in_episode[order]
        n = self.size - horizon + 1
        ok = np.ones(n, dtype=bool)
        for j in range(1, horizon):
            ok &= (ep[j:j + n] == ep[:n]) & (st[j:j + n] == st[:n] + j)
        return np.nonzero(ok)[0]

    def gather_segments(self, starts: np.ndarray, horizon: int) -> dict:
        """Segments as (N, horizon, ...) arrays keyed like ``gather``."""
        order = self.chronological()
        idx = order[starts[:, None] + np.arange(horizon)[None, :]]
        first = order[starts]
        return {"s0": self.s[first], "hist0": self.hist[first],
                "phase0": self.phase_step[first],
                "a": self.a[idx], "targets": self.s_next[idx],
                "r": self.r[idx], "d": self.d[idx]}
