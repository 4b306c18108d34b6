"""
Generator and the two critics
=============================

The generator turns per-frame context vectors into images through a
stack of upsampling residual blocks.  Two critics push back: a
per-frame image discriminator that checks each picture against its
sentence, and a story discriminator that scores the whole sequence at
once.  Every learnable weight in all three is spectrally normalized.
"""

import torch

from storyvis.discriminators import (DimConfig, DstConfig, ImageDiscriminator,
                                     StoryDiscriminator)
from storyvis.encoder import EncoderConfig, ContextEncoder
from storyvis.generator import GenConfig, Generator
from storyvis.spectral import spectral_modules

torch.manual_seed(5)

B, T = 2, 4
enc_cfg = EncoderConfig(d_embed=32, d_ca=16, d_model=48, n_heads=4, n_layers=1)
gen_cfg = GenConfig(seed_channels=64, seed_h=4, seed_w=4, n_up_blocks=4, z_dim=16)

# The output side is fixed by the seed grid and the block count:
# each block doubles the side, so 4 -> 8 -> 16 -> 32 -> 64.
print("output size: %dx%d" % (gen_cfg.out_h, gen_cfg.out_w))
print("channel plan:", [gen_cfg.channels_after(k)
                        for k in range(gen_cfg.n_up_blocks + 1)])

G = Generator(gen_cfg, d_model=enc_cfg.d_model)
c_bar = torch.randn(B, T, enc_cfg.d_model)
z = torch.randn(B, T, gen_cfg.z_dim)

# Watch the tensor grow through the stack.
x = G.seed_projection(c_bar, z)
print("seed tensor:", tuple(x.shape))
for k, block in enumerate(G.blocks):
    x = block(x)
    print("after block %d:" % k, tuple(x.shape))

frames = G(c_bar, z).detach()
print("frames:", tuple(frames.shape),
      "range (%.3f, %.3f)" % (frames.min(), frames.max()))

# The image critic grades one frame at a time.  It fuses image features
# with the frame's sentence embedding and a story summary, and returns a
# probability per frame.
dim = ImageDiscriminator(DimConfig(base_channels=16, n_down_blocks=3,
                                   text_dim=enc_cfg.d_embed,
                                   d_model=enc_cfg.d_model), image_size=64)
phi = torch.randn(B * T, enc_cfg.d_embed)
h0 = torch.randn(B * T, enc_cfg.d_model)
scores = dim(frames.reshape(B * T, 3, 64, 64), phi, h0)
print("image scores:", [round(float(s), 3) for s in scores.detach()])

# The story critic sees all frames and all sentences together and emits
# one probability per story.
dst = StoryDiscriminator(DstConfig(base_channels=16, n_down_blocks=3,
                                   text_dim=enc_cfg.d_embed, d_shared=32,
                                   frames=T), image_size=64)
story_scores = dst(frames, torch.randn(B, T, enc_cfg.d_embed))
print("story scores:", [round(float(s), 3) for s in story_scores.detach()])

# Spectral normalization divides each weight by a power-iteration
# estimate of its top singular value, so the weight actually applied in
# a forward pass has top singular value near 1.  That bounds how sharply
# either critic can react to small input changes.
with torch.no_grad():
    sigmas = []
    for module in spectral_modules(dst):
        module.power_iterate(50)
        w = module.normalized_weight().reshape(module.weight.shape[0], -1)
        sigmas.append(float(torch.linalg.svdvals(w)[0]))
print("critic layers normalized:", len(sigmas),
      " applied-weight sigma range [%.4f, %.4f]" % (min(sigmas), max(sigmas)))
