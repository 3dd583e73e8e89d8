"""Episode-delimited replay memory serving fixed-length trajectory batches.

Frames are stored once per step (float32) and observation stacks are
rebuilt on sampling, so a stored transition costs one frame, one action
and one reward. Sampled trajectories never cross an episode boundary:
eviction removes whole episodes oldest-first, and start indices run over
``{0, ..., length - k - 1}`` within the chosen episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs import stack_frames


class ReplayError(Exception):
    pass


@dataclass
class Transition:
    action: np.ndarray
    reward: float
    frame: np.ndarray  # frame observed after taking the action
    done: bool


@dataclass
class _Episode:
    frames: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    closed: bool = False

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class TrajectoryBatch:
    """B trajectories: k+1 observation stacks, k actions, k rewards each."""

    obs: np.ndarray      # (B, k+1, 3, G, G, 3)
    actions: np.ndarray  # (B, k, A)
    rewards: np.ndarray  # (B, k)
    starts: np.ndarray   # (B,) start transition index within each source episode
    episode_ids: np.ndarray  # (B,)

    @property
    def size(self) -> int:
        return self.obs.shape[0]

    @property
    def k(self) -> int:
        return self.actions.shape[1]


class ReplayMemory:
    """Single-writer ring buffer over whole episodes."""

    def __init__(self, capacity: int):
        if capacity < 2:
            raise ReplayError("capacity must hold at least one short episode")
        self.capacity = capacity
        self._episodes: list[_Episode] = []
        self._transitions = 0
        self._next_episode_id = 0
        self._episode_ids: list[int] = []

    def __len__(self) -> int:
        return self._transitions

    @property
    def num_episodes(self) -> int:
        return len(self._episodes)

    def begin_episode(self, first_frame: np.ndarray) -> None:
        if self._episodes and not self._episodes[-1].closed:
            raise ReplayError("previous episode still open; append a done transition first")
        ep = _Episode()
        ep.frames.append(np.asarray(first_frame, dtype=np.float32))
        self._episodes.append(ep)
        self._episode_ids.append(self._next_episode_id)
        self._next_episode_id += 1

    def append(self, transition: Transition) -> None:
        if not self._episodes or self._episodes[-1].closed:
            raise ReplayError("no open episode; call begin_episode() first")
        ep = self._episodes[-1]
        ep.frames.append(np.asarray(transition.frame, dtype=np.float32))
        ep.actions.append(np.asarray(transition.action, dtype=np.float64))
        ep.rewards.append(float(transition.reward))
        ep.closed = bool(transition.done)
        self._transitions += 1
        self._evict()

    def _evict(self) -> None:
        while self._transitions > self.capacity and len(self._episodes) > 1:
            gone = self._episodes.pop(0)
            self._episode_ids.pop(0)
            self._transitions -= gone.length

    def sample_trajectories(self, batch_size: int, k: int, rng: np.random.Generator) -> TrajectoryBatch:
        """Uniform episode choice, then uniform start within the valid range."""
        eligible = [
            (eid, ep)
            for eid, ep in zip(self._episode_ids, self._episodes)
            if ep.length >= k + 1
        ]
        if not eligible:
            raise ReplayError(
                f"no stored episode has length >= {k + 1}; collect more data before sampling"
            )
        obs, actions, rewards, starts, ids = [], [], [], [], []
        for _ in range(batch_size):
            eid, ep = eligible[rng.integers(len(eligible))]
            start = int(rng.integers(ep.length - k))
            frames = np.asarray(ep.frames)
            obs.append([stack_frames(frames, start + j) for j in range(k + 1)])
            actions.append(ep.actions[start : start + k])
            rewards.append(ep.rewards[start : start + k])
            starts.append(start)
            ids.append(eid)
        return TrajectoryBatch(
            obs=np.asarray(obs),
            actions=np.asarray(actions),
            rewards=np.asarray(rewards),
            starts=np.asarray(starts),
            episode_ids=np.asarray(ids),
        )


def n_step_return(rewards, start: int, n: int, gamma: float, bootstrap_value: float) -> float:
    """Discounted n-step return: sum_{i<n} gamma^i r[start+i] + gamma^n bootstrap."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if start + n > len(rewards):
        raise ReplayError(f"horizon {start}+{n} exceeds trajectory of length {len(rewards)}")
    if not 0.0 <= gamma < 1.0:
        raise ReplayError("gamma must lie in [0, 1)")
    discounts = gamma ** np.arange(n)
    return float(discounts @ rewards[start : start + n] + gamma**n * bootstrap_value)


def n_step_returns(rewards: np.ndarray, n: int, gamma: float, bootstrap: np.ndarray) -> np.ndarray:
    """Vectorized form over a batch: rewards (B, k), bootstrap (B,)."""
    if n > rewards.shape[1]:
        raise ReplayError(f"horizon {n} exceeds trajectory length {rewards.shape[1]}")
    discounts = gamma ** np.arange(n)
    return rewards[:, :n] @ discounts + gamma**n * bootstrap
