"""Deterministic toy pixel POMDPs with separated fast and slow state factors.

Two tasks share one interface:

* ``two-timescale-catch``: a force-driven cup and a tethered ball. The cup
  responds to the action within one sub-step; the ball drifts toward the
  cup under a weak attraction and is yanked along only when the tether goes
  taut, so its response to actions builds up over many steps. Reward is 1
  per sub-step while the ball sits within the catch radius of the cup.
* ``point-reacher``: a force-driven point effector and a target creeping
  along a circular track. Reward is 1 per sub-step within reach.

Observations are stacks of the 3 most recent rendered frames, each
``G x G x 3`` floats in [0, 1]. Given (config, seed, action sequence),
every observation, reward and ground-truth trace is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constants as C
from .seeding import rng_for

TASKS = ("two-timescale-catch", "point-reacher")
DISTRACTORS = ("none", "color", "camera")
DIFFICULTIES = ("easy", "medium")


class EnvError(Exception):
    pass


@dataclass
class EnvConfig:
    task: str = "two-timescale-catch"
    distractor: str = "none"
    difficulty: str = "easy"
    action_repeat: int = 4
    episode_len: int = 125  # agent steps
    frame_size: int = 24

    def validate(self) -> None:
        if self.task not in TASKS:
            raise EnvError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.distractor not in DISTRACTORS:
            raise EnvError(f"unknown distractor {self.distractor!r}; choose from {DISTRACTORS}")
        if self.difficulty not in DIFFICULTIES:
            raise EnvError(f"unknown difficulty {self.difficulty!r}")
        if self.action_repeat < 1:
            raise EnvError("action_repeat must be >= 1")
        if self.episode_len < 1:
            raise EnvError("episode_len must be >= 1")
        if self.frame_size < 8:
            raise EnvError("frame_size must be >= 8")


@dataclass
class EnvState:
    """Ground-truth simulator state. ``cup`` is the fast body, ``ball`` the slow one."""

    cup_pos: np.ndarray
    cup_vel: np.ndarray
    ball_pos: np.ndarray
    ball_vel: np.ndarray
    t: int = 0  # agent steps taken


def apply_distractor(frame: np.ndarray, kind: str, difficulty: str, rng: np.random.Generator) -> np.ndarray:
    """Pixel-only perturbation, re-drawn from ``rng`` on every call."""
    if kind == "none":
        return frame
    if kind == "color":
        mag = C.COLOR_SHIFT[difficulty]
        offsets = rng.uniform(-mag, mag, size=3)
        return np.clip(frame + offsets, 0.0, 1.0)
    if kind == "camera":
        mag = C.CAMERA_SHIFT[difficulty]
        dy, dx = rng.integers(-mag, mag + 1, size=2)
        size = frame.shape[0]
        rows = np.clip(np.arange(size) - dy, 0, size - 1)
        cols = np.clip(np.arange(size) - dx, 0, size - 1)
        return frame[rows][:, cols]
    raise EnvError(f"unknown distractor kind {kind!r}")


def _clamp_arena(pos: np.ndarray, vel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    clamped = np.clip(pos, -1.0, 1.0)
    vel = np.where(clamped != pos, 0.0, vel)  # kill velocity into the wall
    return clamped, vel


def _world_to_pixel(pos: np.ndarray, size: int) -> tuple[int, int]:
    col = int(round((pos[0] + 1.0) / 2.0 * (size - 1)))
    row = int(round((1.0 - pos[1]) / 2.0 * (size - 1)))
    return row, col


def stack_frames(frames: np.ndarray, index: int) -> np.ndarray:
    """Observation stack at ``index``: the 3 most recent frames, oldest first.

    Indices before the episode start repeat the first frame, matching what
    the environment emits right after reset.
    """
    picks = [max(0, index - 2), max(0, index - 1), index]
    return np.asarray(frames[picks], dtype=np.float64)


class PixelEnv:
    """Shared machinery: sub-stepped physics, rendering, frame stacking."""

    action_dim = 2

    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self.state: EnvState | None = None
        self._stack: list[np.ndarray] = []
        self._rng: np.random.Generator | None = None
        self._distractor_rng: np.random.Generator | None = None
        self._done = True

    # -- interface -------------------------------------------------------

    def reset(self, seed: int, distractor_seed: int | None = None) -> np.ndarray:
        self._rng = rng_for(seed, "env")
        self._distractor_rng = rng_for(seed if distractor_seed is None else distractor_seed, "distractor")
        self.state = self._initial_state(self._rng)
        self._done = False
        frame = self._observe_frame()
        self._stack = [frame, frame, frame]
        return self._observation()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        if self._done or self.state is None:
            raise EnvError("step() called on a finished episode; call reset() first")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.action_dim,):
            raise EnvError(f"action shape {action.shape} != ({self.action_dim},)")
        if np.any(np.abs(action) > 1.0 + 1e-12):
            raise EnvError(f"action out of bounds [-1, 1]: {action}")
        reward = 0.0
        for _ in range(self.config.action_repeat):
            self._substep(action)
            reward += self._sparse_reward()
        self.state.t += 1
        self._stack.pop(0)
        self._stack.append(self._observe_frame())
        self._done = self.state.t >= self.config.episode_len
        return self._observation(), reward, self._done

    def ground_truth(self) -> tuple[np.ndarray, np.ndarray]:
        """(ball position, cup position) read straight from the simulator."""
        return self.state.ball_pos.copy(), self.state.cup_pos.copy()

    @property
    def last_frame(self) -> np.ndarray:
        return self._stack[-1].copy()

    # -- internals -------------------------------------------------------

    def _observation(self) -> np.ndarray:
        return np.stack(self._stack)

    def _observe_frame(self) -> np.ndarray:
        frame = self._render()
        return apply_distractor(frame, self.config.distractor, self.config.difficulty, self._distractor_rng)

    def _render(self) -> np.ndarray:
        size = self.config.frame_size
        frame = np.zeros((size, size, C.FRAME_CHANNELS))
        r, c = _world_to_pixel(self.state.cup_pos, size)
        for rr, cc in ((r, c - 1), (r + 1, c), (r, c + 1)):  # 3-pixel bracket
            if 0 <= rr < size and 0 <= cc < size:
                frame[rr, cc, C.CUP_COLOR] = 1.0
        r, c = _world_to_pixel(self.state.ball_pos, size)
        for rr in (r, r + 1):  # 2-pixel disc
            for cc in (c, c + 1):
                if 0 <= rr < size and 0 <= cc < size:
                    frame[rr, cc, C.BALL_COLOR] = 1.0
        return frame

    def _initial_state(self, rng: np.random.Generator) -> EnvState:
        raise NotImplementedError

    def _substep(self, action: np.ndarray) -> None:
        raise NotImplementedError

    def _sparse_reward(self) -> float:
        raise NotImplementedError


class CatchEnv(PixelEnv):
    """Cup-and-ball task; sparse reward while the ball is caught."""

    def _initial_state(self, rng: np.random.Generator) -> EnvState:
        angle = rng.uniform(0.0, 2.0 * np.pi)
        ball = C.TETHER_LENGTH * np.array([np.cos(angle), np.sin(angle)])
        return EnvState(
            cup_pos=np.zeros(2),
            cup_vel=np.zeros(2),
            ball_pos=ball,
            ball_vel=np.zeros(2),
        )

    def _substep(self, action: np.ndarray) -> None:
        s = self.state
        s.cup_vel = C.DAMPING * s.cup_vel + C.DT * C.FORCE_SCALE * action / C.CUP_MASS
        s.cup_pos, s.cup_vel = _clamp_arena(s.cup_pos + C.DT * s.cup_vel, s.cup_vel)
        delta = s.cup_pos - s.ball_pos
        dist = float(np.linalg.norm(delta))
        force = np.zeros(2)
        if dist > 1e-12:
            unit = delta / dist
            force = C.BALL_ATTRACT * unit
            stretch = dist - C.TETHER_LENGTH
            if stretch > 0.0:
                force = force + C.SPRING_K * stretch * unit
        s.ball_vel = C.DAMPING * s.ball_vel + C.DT * force / C.BALL_MASS
        s.ball_pos, s.ball_vel = _clamp_arena(s.ball_pos + C.DT * s.ball_vel, s.ball_vel)

    def _sparse_reward(self) -> float:
        dist = np.linalg.norm(self.state.cup_pos - self.state.ball_pos)
        return 1.0 if dist <= C.CATCH_RADIUS else 0.0


class ReacherEnv(PixelEnv):
    """Point effector vs. slowly orbiting target; sparse reward within reach.

    The effector plays the fast "cup" role and the target the slow "ball"
    role in ``EnvState`` and ``ground_truth``.
    """

    def _initial_state(self, rng: np.random.Generator) -> EnvState:
        self._angle = rng.uniform(0.0, 2.0 * np.pi)
        return EnvState(
            cup_pos=np.zeros(2),
            cup_vel=np.zeros(2),
            ball_pos=self._target_at(self._angle),
            ball_vel=C.TARGET_ORBIT * C.TARGET_DRIFT * self._tangent(self._angle),
        )

    @staticmethod
    def _target_at(angle: float) -> np.ndarray:
        return C.TARGET_ORBIT * np.array([np.cos(angle), np.sin(angle)])

    @staticmethod
    def _tangent(angle: float) -> np.ndarray:
        return np.array([-np.sin(angle), np.cos(angle)])

    def _substep(self, action: np.ndarray) -> None:
        s = self.state
        s.cup_vel = C.DAMPING * s.cup_vel + C.DT * C.FORCE_SCALE * action / C.CUP_MASS
        s.cup_pos, s.cup_vel = _clamp_arena(s.cup_pos + C.DT * s.cup_vel, s.cup_vel)
        self._angle += C.TARGET_DRIFT * C.DT
        s.ball_pos = self._target_at(self._angle)
        s.ball_vel = C.TARGET_ORBIT * C.TARGET_DRIFT * self._tangent(self._angle)

    def _sparse_reward(self) -> float:
        dist = np.linalg.norm(self.state.cup_pos - self.state.ball_pos)
        return 1.0 if dist <= C.REACH_RADIUS else 0.0


def make_env(config: EnvConfig) -> PixelEnv:
    cls = CatchEnv if config.task == "two-timescale-catch" else ReacherEnv
    return cls(config)


def max_return(config: EnvConfig) -> float:
    """Best achievable raw episode return: every sub-step rewarded."""
    return float(config.episode_len * config.action_repeat)


# ---------------------------------------------------------------------------
# Episode recording (consumed by the analysis pipeline)


@dataclass
class EpisodeLog:
    """One episode: frames (T+1), actions/rewards (T), ground truth (T+1)."""

    frames: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    ball: np.ndarray
    cup: np.ndarray

    @property
    def length(self) -> int:
        return len(self.actions)

    def observation_at(self, index: int) -> np.ndarray:
        return stack_frames(self.frames, index)


def record_episode(env: PixelEnv, policy, seed: int, distractor_seed: int | None = None) -> EpisodeLog:
    """Roll one full episode; ``policy(obs, t) -> action``."""
    obs = env.reset(seed, distractor_seed)
    frames = [env.last_frame]
    ball, cup = env.ground_truth()
    balls, cups = [ball], [cup]
    actions, rewards = [], []
    done = False
    t = 0
    while not done:
        action = np.asarray(policy(obs, t), dtype=np.float64)
        obs, reward, done = env.step(action)
        frames.append(env.last_frame)
        ball, cup = env.ground_truth()
        balls.append(ball)
        cups.append(cup)
        actions.append(action)
        rewards.append(reward)
        t += 1
    return EpisodeLog(
        frames=np.asarray(frames, dtype=np.float32),
        actions=np.asarray(actions),
        rewards=np.asarray(rewards),
        ball=np.asarray(balls),
        cup=np.asarray(cups),
    )


def save_episode(path, log: EpisodeLog) -> None:
    np.savez_compressed(
        path, frames=log.frames, actions=log.actions, rewards=log.rewards, ball=log.ball, cup=log.cup
    )


def load_episode(path) -> EpisodeLog:
    data = np.load(path)
    return EpisodeLog(
        frames=data["frames"],
        actions=data["actions"],
        rewards=data["rewards"],
        ball=data["ball"],
        cup=data["cup"],
    )
