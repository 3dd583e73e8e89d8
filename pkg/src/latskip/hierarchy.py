"""Multi-timescale latent rollouts and the latent-matching auxiliary loss.

A hierarchy holds ``h`` levels, each with its own pixel encoder, momentum
encoder, forward cell, projection head and step skip ``n``. Over a
length-``k`` trajectory, level ``l`` takes ``N_l = k // n_l`` latent steps,
consuming blocks of ``n_l`` concatenated actions. Levels roll coarsest
first; every level below the top receives, at each of its steps, a learned
message computed from all of the level above's representations plus the
one-hot step index, which also routes gradients from finer to coarser
levels.

The per-step loss is the squared distance between unit-normalized
projected predictions and unit-normalized momentum-encoder targets
(equivalently ``2 - 2 cos``), summed over steps and levels and averaged
over the batch. Momentum encoders sit outside the gradient graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nets import CommManager, Encoder, ForwardCell, Projection, copy_params, ema_update, frames_to_input, step_one_hot


@dataclass
class HierarchyConfig:
    levels: int = 2
    skips: tuple[int, ...] = (1, 3)
    k: int = 6
    dim_z: int = 50
    action_dim: int = 2
    frame_size: int = 24
    frame_channels: int = 9  # 3 stacked frames x 3 color channels
    conv_channels: int = 16
    comm_hidden: int = 128
    proj_hidden: int = 128
    no_comm: bool = False
    shared_encoder: bool = False

    def __post_init__(self):
        self.skips = tuple(int(n) for n in self.skips)
        self.validate()

    def validate(self) -> None:
        if self.levels < 1:
            raise ValueError("need at least one level")
        if len(self.skips) != self.levels:
            raise ValueError(f"{self.levels} levels but {len(self.skips)} skips")
        if any(n < 1 for n in self.skips):
            raise ValueError("skips must be positive")
        if list(self.skips) != sorted(self.skips):
            raise ValueError(f"skips must be sorted ascending, got {self.skips}")
        if self.k < max(self.skips):
            raise ValueError(f"k={self.k} shorter than the largest skip {max(self.skips)}")

    def steps_for(self, level: int) -> int:
        """Latent steps level ``level`` takes in a length-k trajectory."""
        return self.k // self.skips[level]


@dataclass
class Level:
    skip: int
    encoder: Encoder
    momentum_encoder: Encoder
    cell: ForwardCell
    projection: Projection


@dataclass
class LevelRollout:
    """Per-level rollout products, finest-to-coarsest list index."""

    reps: list            # N+1 tensors (B, Z): encoding plus each prediction
    projections: list     # N tensors (B, Z)
    targets: list         # N arrays (B, Z): momentum encodings, constants
    messages: list        # N tensors if this level received messages, else []


class Hierarchy:
    def __init__(self, cfg: HierarchyConfig, rng: np.random.Generator):
        self.cfg = cfg
        h = cfg.levels
        self.levels: list[Level] = []
        shared_enc = shared_mom = None
        if cfg.shared_encoder:
            shared_enc = Encoder(cfg.frame_size, cfg.frame_channels, cfg.dim_z, cfg.conv_channels, rng, "shared/enc")
            shared_mom = Encoder(
                cfg.frame_size, cfg.frame_channels, cfg.dim_z, cfg.conv_channels, rng, "shared/enc_m", trainable=False
            )
            copy_params(shared_enc.params(), shared_mom.params())
        for li in range(h):
            if cfg.shared_encoder:
                enc, mom = shared_enc, shared_mom
            else:
                enc = Encoder(
                    cfg.frame_size, cfg.frame_channels, cfg.dim_z, cfg.conv_channels, rng, f"level{li}/enc"
                )
                mom = Encoder(
                    cfg.frame_size, cfg.frame_channels, cfg.dim_z, cfg.conv_channels, rng,
                    f"level{li}/enc_m", trainable=False,
                )
                copy_params(enc.params(), mom.params())
            cell = ForwardCell(
                cfg.dim_z,
                cfg.skips[li] * cfg.action_dim,
                with_message=(li < h - 1 and not cfg.no_comm),
                rng=rng,
                name=f"level{li}/cell",
            )
            proj = Projection(cfg.dim_z, cfg.proj_hidden, rng, f"level{li}/proj")
            self.levels.append(Level(cfg.skips[li], enc, mom, cell, proj))
        # comms[l] carries information from level l+1 down to level l.
        self.comms: list[CommManager | None] = []
        for li in range(h - 1):
            if cfg.no_comm:
                self.comms.append(None)
            else:
                self.comms.append(
                    CommManager(
                        upper_steps=cfg.steps_for(li + 1),
                        lower_steps=cfg.steps_for(li),
                        dim_z=cfg.dim_z,
                        hidden=cfg.comm_hidden,
                        rng=rng,
                        name=f"comm{li + 1}to{li}",
                    )
                )

    # -- forward ---------------------------------------------------------

    def encode(self, level: int, obs: np.ndarray) -> Tensor:
        """Online encoding of a batch of observation stacks (B, 3, G, G, 3)."""
        return self.levels[level].encoder(frames_to_input(obs))

    def rollout(self, obs: np.ndarray, actions: np.ndarray) -> list[LevelRollout]:
        """Roll every level through one trajectory batch, coarsest first.

        ``obs``: (B, k+1, 3, G, G, 3); ``actions``: (B, k, A).
        """
        cfg = self.cfg
        if obs.shape[1] < cfg.k + 1 or actions.shape[1] < cfg.k:
            raise ValueError(f"trajectory shorter than k={cfg.k}")
        batch = obs.shape[0]
        out: list[LevelRollout | None] = [None] * cfg.levels
        for li in reversed(range(cfg.levels)):
            lvl = self.levels[li]
            n, steps = lvl.skip, cfg.steps_for(li)
            comm = self.comms[li] if li < cfg.levels - 1 else None
            upper_concat = None
            if comm is not None:
                upper_concat = ad.concat(out[li + 1].reps)
            z = lvl.encoder(frames_to_input(obs[:, 0]))
            reps, messages = [z], []
            for j in range(1, steps + 1):
                block = Tensor(actions[:, (j - 1) * n : j * n].reshape(batch, n * cfg.action_dim))
                message = None
                if comm is not None:
                    message = comm(upper_concat, step_one_hot(j, cfg.steps_for(li)))
                    messages.append(message)
                z = lvl.cell(z, block, message)
                reps.append(z)
            with ad.no_grad():
                stacked = obs[:, [j * n for j in range(1, steps + 1)]]
                flat = stacked.reshape(batch * steps, *obs.shape[2:])
                target_data = lvl.momentum_encoder(frames_to_input(flat)).data
            targets = [target_data.reshape(batch, steps, cfg.dim_z)[:, j] for j in range(steps)]
            projections = [lvl.projection(rep) for rep in reps[1:]]
            out[li] = LevelRollout(reps=reps, projections=projections, targets=targets, messages=messages)
        return out

    def aux_loss(self, obs: np.ndarray, actions: np.ndarray, level_mask=None):
        """Latent-matching loss over the batch; returns (scalar, rollouts)."""
        rollouts = self.rollout(obs, actions)
        picked = range(self.cfg.levels) if level_mask is None else level_mask
        total = None
        for li in picked:
            ro = rollouts[li]
            for proj, target in zip(ro.projections, ro.targets):
                u = ad.l2_normalize(proj)
                v = ad.l2_normalize(Tensor(target))
                term = ad.mean(ad.squared_distance(u, v))
                total = term if total is None else total + term
        return total, rollouts

    # -- parameter plumbing ------------------------------------------------

    def aux_params(self) -> list[Tensor]:
        """Everything the auxiliary loss trains: encoders, cells, comms, projections."""
        out: list[Tensor] = []
        seen: set[int] = set()
        for lvl in self.levels:
            for p in [*lvl.encoder.params(), *lvl.cell.params(), *lvl.projection.params()]:
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append(p)
        for comm in self.comms:
            if comm is not None:
                out.extend(comm.params())
        return out

    def encoder_params(self, level: int) -> list[Tensor]:
        return self.levels[level].encoder.params()

    def momentum_pairs(self) -> list[tuple[list[Tensor], list[Tensor]]]:
        pairs, seen = [], set()
        for lvl in self.levels:
            if id(lvl.encoder) in seen:
                continue
            seen.add(id(lvl.encoder))
            pairs.append((lvl.encoder.params(), lvl.momentum_encoder.params()))
        return pairs

    def ema_step(self, tau: float) -> None:
        for online, momentum in self.momentum_pairs():
            ema_update(online, momentum, tau)

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for lvl in self.levels:
            group = [
                *lvl.encoder.params(),
                *lvl.momentum_encoder.params(),
                *lvl.cell.params(),
                *lvl.projection.params(),
            ]
            for p in group:
                out[p.name] = p
        for comm in self.comms:
            if comm is not None:
                for p in comm.params():
                    out[p.name] = p
        return out
