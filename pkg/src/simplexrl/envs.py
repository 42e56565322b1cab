"""Deterministic, seedable desk-scale environments.

Continuous control: a 2-D point-mass reach task and pendulum swing-up.
Discrete control: an 8x8 gridworld. Plus a synthetic Gaussian-blob
classification dataset for the non-stationary supervised demo.

Contract: reset(seed) -> obs; step(action) -> (obs, reward, done). Identical
seed and action sequence reproduce identical trajectories bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .autodiff import Rng


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_kind: str            # "continuous" or "discrete"
    action_dim: int             # continuous dims, or number of discrete actions
    reward_bounds: Tuple[float, float]
    episode_limit: int
    solve_threshold: float


class PointMassEnv:
    """Velocity-controlled point mass reaching a random goal in [-0.8, 0.8]^2.

    Semi-implicit Euler, dt=0.05; reward -||p-goal||^2 - 0.01||a||^2.
    """

    spec = EnvSpec("pointmass", obs_dim=6, action_kind="continuous", action_dim=2,
                   reward_bounds=(-8.01, 0.0), episode_limit=200,
                   solve_threshold=-5.0)
    dt = 0.05

    def __init__(self, seed: int = 0):
        self._rng = Rng(seed)
        self.p = np.zeros(2)
        self.v = np.zeros(2)
        self.goal = np.zeros(2)
        self.t = 0

    def reset(self, seed=None):
        if seed is not None:
            self._rng = Rng(seed)
        self.p = self._rng.uniform(-1.0, 1.0, 2)
        self.v = np.zeros(2)
        self.goal = self._rng.uniform(-0.8, 0.8, 2)
        self.t = 0
        return self._obs()

    def _obs(self):
        return np.concatenate([self.p, self.v, self.goal])

    def step(self, action):
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        self.v = np.clip(self.v + a * self.dt, -1.0, 1.0)
        self.p = np.clip(self.p + self.v * self.dt, -1.0, 1.0)
        reward = -float(np.square(self.p - self.goal).sum()) \
            - 0.01 * float(np.square(a).sum())
        self.t += 1
        done = self.t >= self.spec.episode_limit
        return self._obs(), reward, done


def _wrap_angle(theta: float) -> float:
    return ((theta + math.pi) % (2.0 * math.pi)) - math.pi


class PendulumEnv:
    """Torque-limited swing-up; upright (theta=0) is the reward maximum.

    Action in [-1, 1], scaled by 2.0 internally; the control penalty uses the
    raw (unscaled) action so rewards stay inside the declared bounds.
    """

    spec = EnvSpec("pendulum", obs_dim=3, action_kind="continuous", action_dim=1,
                   reward_bounds=(-(math.pi ** 2) - 0.1 * 64 - 0.002, 0.0),
                   episode_limit=200, solve_threshold=-200.0)
    dt = 0.05
    g, m, length = 10.0, 1.0, 1.0
    max_speed = 8.0
    torque_scale = 2.0

    def __init__(self, seed: int = 0):
        self._rng = Rng(seed)
        self.theta = 0.0
        self.theta_dot = 0.0
        self.t = 0

    def reset(self, seed=None):
        if seed is not None:
            self._rng = Rng(seed)
        self.theta = float(self._rng.uniform(-math.pi, math.pi))
        self.theta_dot = float(self._rng.uniform(-1.0, 1.0))
        self.t = 0
        return self._obs()

    def _obs(self):
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])

    def step(self, action):
        a = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], -1.0, 1.0))
        u = a * self.torque_scale
        th = _wrap_angle(self.theta)
        reward = -(th * th + 0.1 * self.theta_dot ** 2 + 0.001 * a * a)
        acc = (3.0 * self.g / (2.0 * self.length)) * math.sin(self.theta) \
            + (3.0 / (self.m * self.length ** 2)) * u
        self.theta_dot = float(np.clip(self.theta_dot + acc * self.dt,
                                       -self.max_speed, self.max_speed))
        self.theta = self.theta + self.theta_dot * self.dt
        self.t += 1
        done = self.t >= self.spec.episode_limit
        return self._obs(), reward, done


class GridWorldEnv:
    """8x8 grid; walls clamp movement; -0.01 per step, +1 on reaching the goal.

    Observation is one-hot(position) concatenated with one-hot(goal).
    Actions: 0=up, 1=down, 2=left, 3=right.
    """

    SIZE = 8
    MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}
    spec = EnvSpec("gridworld", obs_dim=128, action_kind="discrete", action_dim=4,
                   reward_bounds=(-0.01, 1.0), episode_limit=100,
                   solve_threshold=0.8)

    def __init__(self, seed: int = 0):
        self._rng = Rng(seed)
        self.pos = (0, 0)
        self.goal = (0, 0)
        self.t = 0

    def reset(self, seed=None):
        if seed is not None:
            self._rng = Rng(seed)
        n = self.SIZE * self.SIZE
        start = int(self._rng.integers(0, n))
        goal = int(self._rng.integers(0, n - 1))
        if goal >= start:
            goal += 1  # goal != start, uniform over remaining cells
        self.pos = divmod(start, self.SIZE)
        self.goal = divmod(goal, self.SIZE)
        self.t = 0
        return self._obs()

    def _obs(self):
        obs = np.zeros(2 * self.SIZE * self.SIZE)
        obs[self.pos[0] * self.SIZE + self.pos[1]] = 1.0
        obs[self.SIZE * self.SIZE + self.goal[0] * self.SIZE + self.goal[1]] = 1.0
        return obs

    def step(self, action):
        action = int(action)
        if action not in self.MOVES:
            raise ValueError(f"invalid action index {action}")
        dr, dc = self.MOVES[action]
        r = min(max(self.pos[0] + dr, 0), self.SIZE - 1)
        c = min(max(self.pos[1] + dc, 0), self.SIZE - 1)
        self.pos = (r, c)
        self.t += 1
        reward = -0.01
        done = False
        if self.pos == self.goal:
            reward += 1.0
            done = True
        done = done or self.t >= self.spec.episode_limit
        return self._obs(), reward, done


_ENVS = {"pointmass": PointMassEnv, "pendulum": PendulumEnv, "gridworld": GridWorldEnv}


def make_env(name: str, seed: int = 0):
    if name not in _ENVS:
        raise ValueError(f"unknown env {name!r}; choose from {sorted(_ENVS)}")
    return _ENVS[name](seed)


def env_spec(name: str) -> EnvSpec:
    if name not in _ENVS:
        raise ValueError(f"unknown env {name!r}; choose from {sorted(_ENVS)}")
    return _ENVS[name].spec


# ---------------------------------------------------------------------------
# synthetic classification dataset
# ---------------------------------------------------------------------------

@dataclass
class SynthDataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_eval: np.ndarray
    y_eval: np.ndarray
    class_means: np.ndarray


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 2000
    input_dim: int = 32
    n_classes: int = 10


def synth_generate(cfg: SynthConfig, seed: int) -> SynthDataset:
    """Class-balanced Gaussian blobs: x = 3*mean_y + N(0, I), 80/20 split."""
    if cfg.n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    rng = Rng(seed)
    means = rng.normal(size=(cfg.n_classes, cfg.input_dim)) * 3.0
    # round-robin labels keep classes balanced within +-1
    labels = np.arange(cfg.n_samples) % cfg.n_classes
    labels = labels[rng.permutation(cfg.n_samples)]
    x = means[labels] + rng.normal(size=(cfg.n_samples, cfg.input_dim))
    n_train = int(cfg.n_samples * 0.8)
    return SynthDataset(x[:n_train], labels[:n_train],
                        x[n_train:], labels[n_train:], means)
