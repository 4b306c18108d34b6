"""Image and story discriminators.

The image discriminator scores one frame at a time: residual strided-conv
downsampling (no pooling), dropout in every block, then the frame's text
embedding and the story context vector are fused in by spatial replication
and one residual block before the sigmoid head.

The story discriminator maps every frame and every frame embedding into a
joint feature space, concatenates each side into a storyboard-wide vector,
multiplies the two elementwise and scores the product with an FC + sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn as nn

from .spectral import SNConv2d, SNLinear


@dataclass
class DimConfig:
    n_down_blocks: int = 4
    base_channels: int = 32
    dropout_rate: float = 0.3
    d_model: int = 128       # context width fused into the image features
    text_dim: int = 64       # width of the per-frame embeddings phi

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class DstConfig:
    d_shared: int = 64       # joint text-image feature width
    n_down_blocks: int = 4
    base_channels: int = 32
    text_dim: int = 64
    frames: int = 4

    def __post_init__(self):
        if self.d_shared <= 0:
            raise ValueError("d_shared must be positive")


class ScoreKind(str, Enum):
    IMAGE_REAL = "image_real"
    IMAGE_FAKE = "image_fake"
    IMAGE_MISMATCH = "image_mismatch"
    STORY_REAL = "story_real"
    STORY_FAKE = "story_fake"


@dataclass
class ScoreBatch:
    scores: torch.Tensor
    kind: ScoreKind

    def __post_init__(self):
        if self.scores.numel() and (self.scores.min() < 0 or self.scores.max() > 1):
            raise ValueError("discriminator scores must lie in [0, 1]")


class ResDownBlock(nn.Module):
    """Strided-conv residual block, C -> 2C channels, H,W -> H/2,W/2.

    main: LReLU - 3x3 conv (C->2C) - LReLU - 3x3 stride-2 conv
    skip: 1x1 stride-2 conv
    Dropout at the block output.
    """

    def __init__(self, in_channels: int, dropout_rate: float = 0.0):
        super().__init__()
        out_channels = 2 * in_channels
        self.conv1 = SNConv2d(in_channels, out_channels, 3, padding=1)
        self.conv2 = SNConv2d(out_channels, out_channels, 3, stride=2, padding=1)
        self.skip = SNConv2d(in_channels, out_channels, 1, stride=2)
        self.act = nn.LeakyReLU(0.2)
        self.dropout = nn.Dropout(dropout_rate)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise ValueError(f"spatial dims must be even, got {tuple(x.shape[-2:])}")
        h = self.conv2(self.act(self.conv1(self.act(x))))
        return self.dropout(h + self.skip(x))


class FusionResBlock(nn.Module):
    """Residual block at constant resolution, used to mix text into images."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = SNConv2d(in_channels, out_channels, 3, padding=1)
        self.conv2 = SNConv2d(out_channels, out_channels, 3, padding=1)
        self.skip = SNConv2d(in_channels, out_channels, 1)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv2(self.act(self.conv1(self.act(x))))
        return h + self.skip(x)


def replicate_spatial(vec: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """(N, d) -> (N, d, h, w): the same vector at every spatial position."""
    return vec.unsqueeze(-1).unsqueeze(-1).expand(*vec.shape, h, w)


class ImageDiscriminator(nn.Module):
    """Per-frame real/fake probability, conditioned on (phi_t, h0)."""

    def __init__(self, config: DimConfig, image_size: int):
        super().__init__()
        self.config = config
        if image_size % (2 ** config.n_down_blocks) != 0:
            raise ValueError("image_size must be divisible by 2^n_down_blocks")
        self.final_size = image_size // 2 ** config.n_down_blocks
        if self.final_size < 4:
            raise ValueError("too many down blocks for this image size")
        self.stem = SNConv2d(3, config.base_channels, 3, padding=1)
        self.blocks = nn.ModuleList(
            ResDownBlock(config.base_channels * 2 ** k, config.dropout_rate)
            for k in range(config.n_down_blocks)
        )
        feat_channels = config.base_channels * 2 ** config.n_down_blocks
        self.text_proj = SNLinear(config.text_dim + config.d_model, config.d_model)
        self.fuse = FusionResBlock(feat_channels + config.d_model, feat_channels)
        self.fc = SNLinear(feat_channels * self.final_size ** 2, 1)

    def image_features(self, images: torch.Tensor) -> torch.Tensor:
        x = self.stem(images)
        for block in self.blocks:
            x = block(x)
        return x

    def forward(self, images: torch.Tensor, phi: torch.Tensor,
                h0: torch.Tensor) -> torch.Tensor:
        """(N,3,H,W), (N,text_dim), (N,d_model) -> (N,) probabilities."""
        feats = self.image_features(images)
        text = self.text_proj(torch.cat([phi, h0], dim=-1))
        text_map = replicate_spatial(text, feats.shape[-2], feats.shape[-1])
        fused = self.fuse(torch.cat([feats, text_map], dim=1))
        logit = self.fc(fused.flatten(1)).squeeze(-1)
        if not torch.isfinite(logit).all():
            raise ValueError("non-finite image-discriminator logits")
        return torch.sigmoid(logit)


class StoryDiscriminator(nn.Module):
    """Sequence-level consistency score over a joint text-image space."""

    def __init__(self, config: DstConfig, image_size: int):
        super().__init__()
        self.config = config
        if image_size % (2 ** config.n_down_blocks) != 0:
            raise ValueError("image_size must be divisible by 2^n_down_blocks")
        self.final_size = image_size // 2 ** config.n_down_blocks
        self.stem = SNConv2d(3, config.base_channels, 3, padding=1)
        self.blocks = nn.ModuleList(
            ResDownBlock(config.base_channels * 2 ** k)
            for k in range(config.n_down_blocks)
        )
        feat_channels = config.base_channels * 2 ** config.n_down_blocks
        self.image_fc = SNLinear(feat_channels * self.final_size ** 2, config.d_shared)
        # bias-free so zero text features zero the joint product exactly
        self.text_fc = SNLinear(config.text_dim, config.d_shared, bias=False)
        self.out_fc = SNLinear(config.frames * config.d_shared, 1)

    def forward(self, images: torch.Tensor, phi: torch.Tensor) -> torch.Tensor:
        """(B,T,3,H,W), (B,T,text_dim) -> (B,) probabilities."""
        B, T = images.shape[:2]
        if T != self.config.frames:
            raise ValueError(f"expected {self.config.frames} frames, got {T}")
        if phi.shape[:2] != (B, T):
            raise ValueError(
                f"text/image story shape mismatch: {tuple(phi.shape[:2])} vs {(B, T)}"
            )
        x = images.reshape(B * T, *images.shape[2:])
        x = self.stem(x)
        for block in self.blocks:
            x = block(x)
        img_vec = self.image_fc(x.flatten(1)).reshape(B, T * self.config.d_shared)
        txt_vec = self.text_fc(phi).reshape(B, T * self.config.d_shared)
        logit = self.out_fc(img_vec * txt_vec).squeeze(-1)
        if not torch.isfinite(logit).all():
            raise ValueError("non-finite story-discriminator logits")
        return torch.sigmoid(logit)
