"""Ring-storage replay buffer with uniform sampling over the filled region."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Rng


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int, rng: Rng):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._rng = rng
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, act_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, s, a, r, s_next, done):
        i = self.cursor
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = done
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_batch(self, s, a, r, s_next, done):
        for i in range(len(r)):
            self.push(s[i], a[i], r[i], s_next[i], done[i])

    def sample(self, batch_size: int):
        if self.size == 0:
            raise RuntimeError("sampling from an empty buffer")
        idx = self._rng.integers(0, self.size, size=batch_size)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx],
                "s_next": self.s_next[idx], "done": self.done[idx]}
