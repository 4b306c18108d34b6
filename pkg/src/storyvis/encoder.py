"""Transformer context encoder with conditioning augmentation.

Token sequences are embedded per frame (mean over token embeddings, phi),
mapped to a Gaussian (mu, sigma) whose reparameterized sample feeds a
sinusoidal-position transformer stack, yielding context-aware vectors
c_bar and a story embedding h0 (mean of c_bar over frames).

Gradient routing contract: a single shared encoder is trained only by the
generator and image-discriminator objectives.  Everything the story
discriminator consumes from the encoder is detached in ``impartial`` mode;
``separate`` keeps three independent encoders and ``all_grads`` lets the
story objective reach the shared encoder (both are ablations).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn as nn

from . import story_codec
from .errors import NumericsError


@dataclass
class EncoderConfig:
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 2
    d_ca: int = 64
    d_embed: int = 64
    vocab_size: int = story_codec.VOCAB_SIZE

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_model % 2 != 0:
            raise ValueError("d_model must be even (sinusoidal positions)")


@dataclass
class CAStats:
    """Gaussian conditioning statistics; sigma > 0 elementwise by construction."""

    mu: torch.Tensor
    sigma: torch.Tensor


@dataclass
class EncoderOutput:
    phi: torch.Tensor      # (B, T, d_embed)
    ca: CAStats            # mu/sigma (B, T, d_ca)
    c_hat: torch.Tensor    # (B, T, d_ca)
    c_bar: torch.Tensor    # (B, T, d_model)
    h0: torch.Tensor       # (B, d_model)


def positional_encoding(T: int, d_model: int, *, dtype: torch.dtype = torch.float32,
                        device=None) -> torch.Tensor:
    """Sinusoidal positions: PE[pos, 2i] = sin(pos / 10000^(2i/d))."""
    if d_model % 2 != 0:
        raise ValueError("d_model must be even")
    pos = torch.arange(T, dtype=torch.float64).unsqueeze(1)
    i2 = torch.arange(0, d_model, 2, dtype=torch.float64)
    angles = pos / torch.pow(10000.0, i2 / d_model)
    pe = torch.empty(T, d_model, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angles)
    pe[:, 1::2] = torch.cos(angles)
    return pe.to(dtype=dtype, device=device)


def kl_loss(ca: CAStats) -> torch.Tensor:
    """KL(N(mu, diag sigma^2) || N(0, I)), summed over frames and dims.

    0.5 * sum(mu^2 + sigma^2 - 1 - 2 ln sigma); averaged over the batch
    dimension when inputs are (B, T, d).
    """
    mu, sigma = ca.mu, ca.sigma
    if not (torch.isfinite(mu).all() and torch.isfinite(sigma).all()):
        raise NumericsError("non-finite conditioning statistics in kl_loss")
    term = 0.5 * (mu * mu + sigma * sigma - 1.0 - 2.0 * torch.log(sigma))
    if term.ndim >= 3:
        return term.sum(dim=tuple(range(1, term.ndim))).mean()
    return term.sum()


class MultiHeadSelfAttention(nn.Module):
    """Full bidirectional self-attention over the frame axis."""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.out = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, T, D = x.shape
        qkv = self.qkv(x).reshape(B, T, 3, self.n_heads, self.d_head)
        q, k, v = qkv.unbind(dim=2)                      # (B, T, H, dh)
        q = q.transpose(1, 2)                            # (B, H, T, dh)
        k = k.transpose(1, 2)
        v = v.transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(self.d_head), dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(B, T, D)
        return self.out(ctx)


class TransformerLayer(nn.Module):
    """Post-norm encoder layer: self-attention + position-wise FFN."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int | None = None):
        super().__init__()
        d_ff = d_ff or 4 * d_model
        self.attn = MultiHeadSelfAttention(d_model, n_heads)
        self.norm1 = nn.LayerNorm(d_model)
        self.ffn = nn.Sequential(
            nn.Linear(d_model, d_ff),
            nn.ReLU(),
            nn.Linear(d_ff, d_model),
        )
        self.norm2 = nn.LayerNorm(d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.attn(x))
        x = self.norm2(x + self.ffn(x))
        return x


class ContextEncoder(nn.Module):
    """Token sequences -> (phi, CA sample, context vectors, story embedding)."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(config.vocab_size, config.d_embed)
        # one affine head emits [mu | log-variance]; sigma = exp(0.5 logvar) > 0
        self.ca_fc = nn.Linear(config.d_embed, 2 * config.d_ca)
        self.in_proj = nn.Linear(config.d_ca, config.d_model)
        self.layers = nn.ModuleList(
            TransformerLayer(config.d_model, config.n_heads)
            for _ in range(config.n_layers)
        )

    def embed(self, tokens: torch.Tensor) -> torch.Tensor:
        """(B, T, L) int tokens -> (B, T, d_embed) frame embeddings (token mean)."""
        if tokens.min() < 0 or tokens.max() >= self.config.vocab_size:
            raise ValueError(
                f"token id out of vocabulary (vocab_size={self.config.vocab_size})"
            )
        return self.embedding(tokens).mean(dim=-2)

    def condition_augment(self, phi: torch.Tensor,
                          z: torch.Tensor) -> tuple[CAStats, torch.Tensor]:
        """Reparameterized conditioning sample: c_hat = mu + z * sigma."""
        stats = self.ca_fc(phi)
        mu, logvar = stats.chunk(2, dim=-1)
        sigma = torch.exp(0.5 * logvar)
        if z.shape != mu.shape:
            raise ValueError(f"z shape {tuple(z.shape)} != mu shape {tuple(mu.shape)}")
        c_hat = mu + z * sigma
        return CAStats(mu=mu, sigma=sigma), c_hat

    def encode_context(self, c_hat: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Project, add positions, run the transformer stack.

        Returns c_bar (B, T, d_model) and h0 = mean over frames (B, d_model).
        """
        x = self.in_proj(c_hat)
        T = x.shape[-2]
        pe = positional_encoding(T, self.config.d_model, dtype=x.dtype, device=x.device)
        x = x + pe
        for layer in self.layers:
            x = layer(x)
        return x, x.mean(dim=-2)

    def forward(self, tokens: torch.Tensor, z: torch.Tensor) -> EncoderOutput:
        phi = self.embed(tokens)
        ca, c_hat = self.condition_augment(phi, z)
        c_bar, h0 = self.encode_context(c_hat)
        return EncoderOutput(phi=phi, ca=ca, c_hat=c_hat, c_bar=c_bar, h0=h0)


# ---------------------------------------------------------------------------
# Gradient routing
# ---------------------------------------------------------------------------

class RoutingMode(str, Enum):
    IMPARTIAL = "impartial"    # one encoder, trained by G and D_im only
    SEPARATE = "separate"      # one private encoder per network
    ALL_GRADS = "all_grads"    # one encoder, story gradients allowed through


@dataclass(frozen=True)
class RoutingPolicy:
    """How encoder parameters relate to the three training objectives."""

    mode: RoutingMode
    shared: bool                     # one parameter set vs three
    detach_story_text: bool          # cut the story discriminator's text path
    story_loss_updates_encoder: bool # story objective may step encoder params


def route_gradients(mode: RoutingMode | str) -> RoutingPolicy:
    mode = RoutingMode(mode)
    if mode is RoutingMode.IMPARTIAL:
        return RoutingPolicy(mode, shared=True, detach_story_text=True,
                             story_loss_updates_encoder=False)
    if mode is RoutingMode.SEPARATE:
        return RoutingPolicy(mode, shared=False, detach_story_text=False,
                             story_loss_updates_encoder=True)
    return RoutingPolicy(mode, shared=True, detach_story_text=False,
                         story_loss_updates_encoder=True)


class EncoderBundle(nn.Module):
    """The encoder(s) behind the three networks, per routing policy.

    ``for_generator`` / ``for_image_d`` / ``for_story_d`` are the same
    module when the policy is shared.  ``story_text`` applies the policy's
    detachment to whatever the story discriminator consumes.
    """

    def __init__(self, config: EncoderConfig, policy: RoutingPolicy):
        super().__init__()
        self.policy = policy
        if policy.shared:
            shared = ContextEncoder(config)
            self.for_generator = shared
            self.for_image_d = shared
            self.for_story_d = shared
        else:
            self.for_generator = ContextEncoder(config)
            self.for_image_d = ContextEncoder(config)
            self.for_story_d = ContextEncoder(config)

    def story_text(self, tokens: torch.Tensor) -> torch.Tensor:
        """Frame embeddings for the story discriminator (detached if impartial)."""
        phi = self.for_story_d.embed(tokens)
        if self.policy.detach_story_text:
            phi = phi.detach()
        return phi

    def encoder_modules(self) -> list[ContextEncoder]:
        """Distinct encoder instances (1 when shared, 3 when separate)."""
        mods = []
        for m in (self.for_generator, self.for_image_d, self.for_story_d):
            if all(m is not seen for seen in mods):
                mods.append(m)
        return mods


def build_encoder_bundle(config: EncoderConfig, mode: RoutingMode | str) -> EncoderBundle:
    return EncoderBundle(config, route_gradients(mode))
