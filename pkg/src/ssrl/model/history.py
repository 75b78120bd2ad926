"""Fixed-length window of the most recent learner states."""
from __future__ import annotations

import numpy as np


class History:
    """Ring of the last ``h`` states, newest first; pads by repetition."""

    def __init__(self, h: int, state_dim: int):
        if h < 1:
            raise ValueError("history length must be >= 1")
        self.h = h
        self.buf = np.zeros((h, state_dim))

    def fill(self, s: np.ndarray) -> None:
        self.buf[:] = np.asarray(s)

    def push(self, s: np.ndarray) -> None:
        self.buf[1:] = self.buf[:-1]
        self.buf[0] = np.asarray(s)

    def snapshot(self) -> np.ndarray:
        return self.buf.copy()


def push_batch(hist: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Functional push on (..., h, d) history arrays."""
    out = np.concatenate([s[..., None, :], hist[..., :-1, :]], axis=-2)
    return out
