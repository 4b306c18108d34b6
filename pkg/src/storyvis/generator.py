"""Image-sequence generator: FC seed + residual nearest-neighbor upsampling.

Per frame, [context vector ; noise] is projected to a seed_C x seed_H x
seed_W tensor and doubled spatially by each residual block (channels halve,
floor 8) until the target resolution, then a 3x3 conv + tanh emits the
3-channel frame in (-1, 1).  All learned layers carry spectral norm; the
whole story is generated in one batched pass over B*T frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .encoder import EncoderOutput
from .errors import NumericsError
from .spectral import SNConv2d, SNLinear

CHANNEL_FLOOR = 8


@dataclass
class GenConfig:
    seed_channels: int = 128
    seed_h: int = 4
    seed_w: int = 4
    n_up_blocks: int = 4
    z_dim: int = 64

    @property
    def out_h(self) -> int:
        return self.seed_h * 2 ** self.n_up_blocks

    @property
    def out_w(self) -> int:
        return self.seed_w * 2 ** self.n_up_blocks

    def channels_after(self, k: int) -> int:
        """Channel count after k up-blocks (halving with a floor of 8)."""
        return max(self.seed_channels >> k, CHANNEL_FLOOR)


class ResUpBlock(nn.Module):
    """2x nearest-neighbor upsampling residual block, C -> C_out channels.

    main: BN - ReLU - up - 3x3 conv - BN - ReLU - 3x3 conv
    skip: up - 1x1 conv
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(in_channels)
        self.conv1 = SNConv2d(in_channels, out_channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.conv2 = SNConv2d(out_channels, out_channels, 3, padding=1)
        self.skip = SNConv2d(in_channels, out_channels, 1)
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.act = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.up(self.act(self.bn1(x)))
        h = self.conv2(self.act(self.bn2(self.conv1(h))))
        return h + self.skip(self.up(x))


class Generator(nn.Module):
    """(c_bar, z) -> T-frame image batch in (-1, 1)."""

    def __init__(self, config: GenConfig, d_model: int):
        super().__init__()
        self.config = config
        self.d_model = d_model
        seed_elems = config.seed_channels * config.seed_h * config.seed_w
        self.fc = SNLinear(d_model + config.z_dim, seed_elems)
        blocks = []
        for k in range(config.n_up_blocks):
            blocks.append(ResUpBlock(config.channels_after(k), config.channels_after(k + 1)))
        self.blocks = nn.ModuleList(blocks)
        self.head = SNConv2d(config.channels_after(config.n_up_blocks), 3, 3, padding=1)

    def seed_projection(self, c_bar: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """Concat [c_bar ; z] per frame, project, reshape to the seed tensor.

        Accepts (B, T, d) or (N, d) inputs; returns (N, seed_C, seed_H, seed_W)
        with N = B*T.
        """
        if c_bar.shape[:-1] != z.shape[:-1]:
            raise ValueError(
                f"c_bar frames {tuple(c_bar.shape[:-1])} != z frames {tuple(z.shape[:-1])}"
            )
        if c_bar.shape[-1] != self.d_model or z.shape[-1] != self.config.z_dim:
            raise ValueError("feature dimension mismatch in seed projection")
        flat = torch.cat([c_bar, z], dim=-1).reshape(-1, self.d_model + self.config.z_dim)
        seed = self.fc(flat)
        return seed.reshape(-1, self.config.seed_channels, self.config.seed_h,
                            self.config.seed_w)

    def _check_finite(self, x: torch.Tensor, layer: str):
        if not torch.isfinite(x).all():
            raise NumericsError(f"non-finite activations after {layer}", layer=layer)

    def forward(self, c_bar: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """Generate all frames in one batched pass.

        (B, T, d_model) x (B, T, z_dim) -> (B, T, 3, out_h, out_w).
        """
        batch_shape = c_bar.shape[:-1]
        x = self.seed_projection(c_bar, z)
        self._check_finite(x, "seed_projection")
        for k, block in enumerate(self.blocks):
            x = block(x)
            self._check_finite(x, f"up_block_{k}")
        x = torch.tanh(self.head(x))
        self._check_finite(x, "head")
        return x.reshape(*batch_shape, 3, self.config.out_h, self.config.out_w)

    def generate(self, enc: EncoderOutput, z: torch.Tensor) -> torch.Tensor:
        return self.forward(enc.c_bar, z)
