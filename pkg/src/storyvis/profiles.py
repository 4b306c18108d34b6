"""Named architecture profiles.

``desk`` is the default CPU-trainable configuration (64x64, 4 frames).
``full`` carries the full-size transformer widths (d_model 512, 8 heads,
6 layers); it exists as a named reference point and is not expected to be
trained on one CPU.  ``small`` (32x32) is used by the long comparison
suites, ``tiny`` (16x16) by fast tests and smoke runs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .discriminators import DimConfig, DstConfig
from .encoder import EncoderConfig
from .generator import GenConfig


@dataclass
class Profile:
    name: str
    image_size: int
    frames: int
    encoder: EncoderConfig
    gen: GenConfig
    d_im: DimConfig
    d_st: DstConfig

    def __post_init__(self):
        if self.gen.out_h != self.image_size or self.gen.out_w != self.image_size:
            raise ValueError(
                f"generator output {self.gen.out_h}x{self.gen.out_w} != "
                f"profile image_size {self.image_size}"
            )
        if self.d_im.d_model != self.encoder.d_model:
            raise ValueError("d_im.d_model must match encoder.d_model")
        if self.d_im.text_dim != self.encoder.d_embed:
            raise ValueError("d_im.text_dim must match encoder.d_embed")
        if self.d_st.text_dim != self.encoder.d_embed:
            raise ValueError("d_st.text_dim must match encoder.d_embed")
        if self.d_st.frames != self.frames:
            raise ValueError("d_st.frames must match profile frames")

    def with_frames(self, frames: int) -> "Profile":
        return replace(self, frames=frames, d_st=replace(self.d_st, frames=frames))


def _desk() -> Profile:
    enc = EncoderConfig(d_model=128, n_heads=4, n_layers=2, d_ca=64, d_embed=64)
    return Profile(
        name="desk",
        image_size=64,
        frames=4,
        encoder=enc,
        gen=GenConfig(seed_channels=128, seed_h=4, seed_w=4, n_up_blocks=4, z_dim=64),
        d_im=DimConfig(n_down_blocks=4, base_channels=32, dropout_rate=0.3,
                       d_model=enc.d_model, text_dim=enc.d_embed),
        d_st=DstConfig(d_shared=64, n_down_blocks=4, base_channels=32,
                       text_dim=enc.d_embed, frames=4),
    )


def _paper() -> Profile:
    enc = EncoderConfig(d_model=512, n_heads=8, n_layers=6, d_ca=128, d_embed=256)
    return Profile(
        name="paper",
        image_size=64,
        frames=4,
        encoder=enc,
        gen=GenConfig(seed_channels=512, seed_h=4, seed_w=4, n_up_blocks=4, z_dim=100),
        d_im=DimConfig(n_down_blocks=4, base_channels=64, dropout_rate=0.3,
                       d_model=enc.d_model, text_dim=enc.d_embed),
        d_st=DstConfig(d_shared=128, n_down_blocks=4, base_channels=64,
                       text_dim=enc.d_embed, frames=4),
    )


def _small() -> Profile:
    enc = EncoderConfig(d_model=64, n_heads=4, n_layers=2, d_ca=32, d_embed=32)
    return Profile(
        name="small",
        image_size=32,
        frames=4,
        encoder=enc,
        gen=GenConfig(seed_channels=64, seed_h=4, seed_w=4, n_up_blocks=3, z_dim=32),
        d_im=DimConfig(n_down_blocks=3, base_channels=16, dropout_rate=0.3,
                       d_model=enc.d_model, text_dim=enc.d_embed),
        d_st=DstConfig(d_shared=32, n_down_blocks=3, base_channels=16,
                       text_dim=enc.d_embed, frames=4),
    )


def _tiny() -> Profile:
    enc = EncoderConfig(d_model=32, n_heads=2, n_layers=1, d_ca=16, d_embed=16)
    return Profile(
        name="tiny",
        image_size=16,
        frames=4,
        encoder=enc,
        gen=GenConfig(seed_channels=32, seed_h=4, seed_w=4, n_up_blocks=2, z_dim=8),
        d_im=DimConfig(n_down_blocks=2, base_channels=8, dropout_rate=0.3,
                       d_model=enc.d_model, text_dim=enc.d_embed),
        d_st=DstConfig(d_shared=16, n_down_blocks=2, base_channels=8,
                       text_dim=enc.d_embed, frames=4),
    )


def get_profile(name: str, frames: int | None = None) -> Profile:
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; choose from {sorted(_FACTORIES)}")
    profile = factory()
    if frames is not None and frames != profile.frames:
        profile = profile.with_frames(frames)
    return profile


_FACTORIES = {"desk": _desk, "paper": _paper, "small": _small, "tiny": _tiny}
PROFILE_NAMES = tuple(_FACTORIES)
