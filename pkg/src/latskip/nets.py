"""Learnable components: pixel encoder, forward cell, communication manager,
projection head, actor and twin-head critic, plus momentum (EMA) updates.

All weights are initialized uniform in +-1/sqrt(fan_in) from the provided
generator, in construction order, so a seed pins every parameter bit.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
PRE_SQUASH_LIMIT = 9.0  # keeps |tanh| strictly below 1 in float64


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, name: str, trainable: bool = True):
        self.w = Tensor(_uniform_init(rng, (in_dim, out_dim), in_dim), requires_grad=trainable, name=f"{name}/w")
        self.b = Tensor(_uniform_init(rng, (out_dim,), in_dim), requires_grad=trainable, name=f"{name}/b")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)

    def params(self) -> list[Tensor]:
        return [self.w, self.b]


class Conv:
    def __init__(self, in_ch: int, out_ch: int, stride: int, rng: np.random.Generator, name: str, trainable: bool = True):
        fan_in = in_ch * 9
        self.w = Tensor(_uniform_init(rng, (out_ch, in_ch, 3, 3), fan_in), requires_grad=trainable, name=f"{name}/w")
        self.b = Tensor(_uniform_init(rng, (out_ch,), fan_in), requires_grad=trainable, name=f"{name}/b")
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w, self.b, stride=self.stride)

    def params(self) -> list[Tensor]:
        return [self.w, self.b]


def frames_to_input(obs) -> np.ndarray:
    """Stacked observation (B, S, G, G, C) -> encoder input (B, S*C, G, G)."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim == 4:
        obs = obs[None]
    b, s, g, _, c = obs.shape
    return np.transpose(obs, (0, 1, 4, 2, 3)).reshape(b, s * c, g, g)


class Encoder:
    """Two strided convolutions, a linear head and a final layer norm."""

    def __init__(
        self,
        frame_size: int,
        in_channels: int,
        dim_z: int,
        conv_channels: int,
        rng: np.random.Generator,
        name: str,
        trainable: bool = True,
    ):
        self.name = name
        self.conv1 = Conv(in_channels, conv_channels, 2, rng, f"{name}/conv1", trainable)
        self.conv2 = Conv(conv_channels, conv_channels, 1, rng, f"{name}/conv2", trainable)
        side = (frame_size + 2 - 3) // 2 + 1  # stride-2 output, pad 1
        self.flat_dim = conv_channels * side * side
        self.fc = Linear(self.flat_dim, dim_z, rng, f"{name}/fc", trainable)
        self.ln_gain = Tensor(np.ones(dim_z), requires_grad=trainable, name=f"{name}/ln/gain")
        self.ln_shift = Tensor(np.zeros(dim_z), requires_grad=trainable, name=f"{name}/ln/shift")

    def __call__(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        h = ad.relu(self.conv1(x))
        h = ad.relu(self.conv2(h))
        h = ad.reshape(h, (h.shape[0], self.flat_dim))
        return ad.layer_norm(self.fc(h), self.ln_gain, self.ln_shift)

    def params(self) -> list[Tensor]:
        return [*self.conv1.params(), *self.conv2.params(), *self.fc.params(), self.ln_gain, self.ln_shift]


class ForwardCell:
    """Gated recurrent step over (latent, action block, optional message).

    The action pathway is a standard GRU on input ``[a | z]``. When a
    message is given, an identical set of affine maps runs on ``[m | z]``
    and the cell output is the average of the two pathway outputs.
    """

    def __init__(
        self,
        dim_z: int,
        action_block: int,
        with_message: bool,
        rng: np.random.Generator,
        name: str,
        trainable: bool = True,
    ):
        self.with_message = with_message
        az = action_block + dim_z
        self.f_u = Linear(az, dim_z, rng, f"{name}/gru/u", trainable)
        self.f_r = Linear(az, dim_z, rng, f"{name}/gru/r", trainable)
        self.f_h = Linear(az, dim_z, rng, f"{name}/gru/h", trainable)
        if with_message:
            self.f_u_m = Linear(2 * dim_z, dim_z, rng, f"{name}/msg/u", trainable)
            self.f_r_m = Linear(2 * dim_z, dim_z, rng, f"{name}/msg/r", trainable)
            self.f_h_m = Linear(2 * dim_z, dim_z, rng, f"{name}/msg/h", trainable)

    def __call__(self, z: Tensor, actions: Tensor, message: Tensor | None = None) -> Tensor:
        if message is not None and not self.with_message:
            raise ValueError("cell has no message pathway but a message was provided")
        if message is None and self.with_message:
            raise ValueError("cell expects a message on every step")
        az = ad.concat([actions, z])
        u = ad.sigmoid(self.f_u(az))
        r = ad.sigmoid(self.f_r(az))
        h = ad.tanh(self.f_h(ad.concat([ad.mul(r, z), actions])))
        gru = ad.add(ad.mul(1.0 - u, z), ad.mul(u, h))
        if message is None:
            return gru
        mz = ad.concat([message, z])
        u_m = ad.sigmoid(self.f_u_m(mz))
        r_m = ad.sigmoid(self.f_r_m(mz))
        h_m = ad.tanh(self.f_h_m(ad.concat([ad.mul(r_m, message), z])))
        via_msg = ad.add(ad.mul(1.0 - u_m, z), ad.mul(u_m, h_m))
        return (gru + via_msg) * 0.5

    def params(self) -> list[Tensor]:
        out = [*self.f_u.params(), *self.f_r.params(), *self.f_h.params()]
        if self.with_message:
            out += [*self.f_u_m.params(), *self.f_r_m.params(), *self.f_h_m.params()]
        return out


def step_one_hot(step: int, n_steps: int) -> np.ndarray:
    """One-hot encode a 1-based step index; step 2 of 5 -> [0,1,0,0,0]."""
    if not 1 <= step <= n_steps:
        raise ValueError(f"step {step} outside 1..{n_steps}")
    out = np.zeros(n_steps)
    out[step - 1] = 1.0
    return out


class CommManager:
    """Two-layer ReLU map from an upper level's full rollout (plus the lower
    level's one-hot step index) to a message for the lower level's cell."""

    def __init__(
        self,
        upper_steps: int,
        lower_steps: int,
        dim_z: int,
        hidden: int,
        rng: np.random.Generator,
        name: str,
        trainable: bool = True,
    ):
        self.lower_steps = lower_steps
        in_dim = (upper_steps + 1) * dim_z + lower_steps
        self.fc1 = Linear(in_dim, hidden, rng, f"{name}/fc1", trainable)
        self.fc2 = Linear(hidden, dim_z, rng, f"{name}/fc2", trainable)

    def __call__(self, upper_reps: Tensor, step_onehot: np.ndarray) -> Tensor:
        if step_onehot.shape != (self.lower_steps,):
            raise ValueError(f"one-hot length {step_onehot.shape} != ({self.lower_steps},)")
        batch = upper_reps.shape[0]
        onehot = Tensor(np.broadcast_to(step_onehot, (batch, self.lower_steps)).copy())
        return self.fc2(ad.relu(self.fc1(ad.concat([upper_reps, onehot]))))

    def params(self) -> list[Tensor]:
        return [*self.fc1.params(), *self.fc2.params()]


class Projection:
    """Two-layer ReLU projection head applied before the latent-matching loss."""

    def __init__(self, dim_z: int, hidden: int, rng: np.random.Generator, name: str, trainable: bool = True):
        self.fc1 = Linear(dim_z, hidden, rng, f"{name}/fc1", trainable)
        self.fc2 = Linear(hidden, dim_z, rng, f"{name}/fc2", trainable)

    def __call__(self, z: Tensor) -> Tensor:
        return self.fc2(ad.relu(self.fc1(z)))

    def params(self) -> list[Tensor]:
        return [*self.fc1.params(), *self.fc2.params()]


class Actor:
    """Tanh-squashed diagonal Gaussian policy over [-1, 1]^action_dim."""

    def __init__(self, in_dim: int, action_dim: int, hidden: int, rng: np.random.Generator, name: str = "actor"):
        self.action_dim = action_dim
        self.fc1 = Linear(in_dim, hidden, rng, f"{name}/fc1")
        self.fc2 = Linear(hidden, hidden, rng, f"{name}/fc2")
        self.mean_head = Linear(hidden, action_dim, rng, f"{name}/mean")
        self.log_std_head = Linear(hidden, action_dim, rng, f"{name}/log_std")

    def _trunk(self, z: Tensor) -> tuple[Tensor, Tensor]:
        h = ad.relu(self.fc1(z))
        h = ad.relu(self.fc2(h))
        mean = self.mean_head(h)
        log_std = ad.clamp(self.log_std_head(h), LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def sample(self, z: Tensor, rng: np.random.Generator | None = None, eps: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
        """Reparameterized sample and its log-probability, shape (B,).

        Pass ``eps`` (standard-normal noise) to pin the draw; otherwise it
        comes from ``rng``.
        """
        mean, log_std = self._trunk(z)
        if eps is None:
            eps = rng.standard_normal(mean.shape)
        noise = Tensor(eps)
        pre = ad.clamp(mean + ad.mul(ad.exp(log_std), noise), -PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT)
        action = ad.tanh(pre)
        if not np.all(np.isfinite(action.data)):
            raise FloatingPointError("actor produced a non-finite action")
        gauss = -0.5 * ad.mul(noise, noise) - log_std - 0.5 * np.log(2.0 * np.pi)
        squash = ad.log(1.0 - ad.mul(action, action) + SQUASH_EPS)
        return action, ad.sum_(ad.sub(gauss, squash), axis=-1)

    def mean_action(self, z: Tensor) -> Tensor:
        mean, _ = self._trunk(z)
        return ad.tanh(ad.clamp(mean, -PRE_SQUASH_LIMIT, PRE_SQUASH_LIMIT))

    def params(self) -> list[Tensor]:
        return [
            *self.fc1.params(),
            *self.fc2.params(),
            *self.mean_head.params(),
            *self.log_std_head.params(),
        ]


class Critic:
    """State-action value network with one or two independent Q heads."""

    def __init__(
        self,
        dim_z: int,
        action_dim: int,
        hidden: int,
        rng: np.random.Generator,
        name: str,
        heads: int = 2,
        trainable: bool = True,
    ):
        if heads not in (1, 2):
            raise ValueError("critic supports 1 or 2 heads")
        self.heads = []
        for i in range(heads):
            self.heads.append(
                (
                    Linear(dim_z + action_dim, hidden, rng, f"{name}/q{i}/fc1", trainable),
                    Linear(hidden, hidden, rng, f"{name}/q{i}/fc2", trainable),
                    Linear(hidden, 1, rng, f"{name}/q{i}/out", trainable),
                )
            )

    def __call__(self, z: Tensor, action: Tensor) -> list[Tensor]:
        za = ad.concat([z, action])
        out = []
        for fc1, fc2, head in self.heads:
            h = ad.relu(fc1(za))
            h = ad.relu(fc2(h))
            out.append(ad.reshape(head(h), (z.shape[0],)))
        return out

    def q_min(self, z: Tensor, action: Tensor) -> Tensor:
        qs = self(z, action)
        if len(qs) == 1:
            return qs[0]
        return ad.minimum(qs[0], qs[1])

    def params(self) -> list[Tensor]:
        out = []
        for layers in self.heads:
            for layer in layers:
                out.extend(layer.params())
        return out


def ema_update(online: list[Tensor], momentum: list[Tensor], tau: float) -> None:
    """theta_m <- (1 - tau) * theta_m + tau * theta_o, element-wise in place."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    if len(online) != len(momentum):
        raise ValueError("parameter lists differ in length")
    for o, m in zip(online, momentum):
        if o.shape != m.shape:
            raise ValueError(f"shape mismatch {o.shape} vs {m.shape}")
        m.data *= 1.0 - tau
        m.data += tau * o.data


def copy_params(src: list[Tensor], dst: list[Tensor]) -> None:
    ema_update(src, dst, tau=1.0)
