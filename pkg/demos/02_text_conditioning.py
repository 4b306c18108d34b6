"""
Text conditioning and gradient routing
======================================

The token sentences of a story pass through a shared transformer
encoder before reaching any network.  Two things matter downstream:
the stochastic conditioning sample (a reparameterized Gaussian around
each frame embedding) and who is allowed to train the encoder.
"""

import torch

from storyvis.encoder import (EncoderConfig, build_encoder_bundle, kl_loss,
                              route_gradients)
from storyvis.story_codec import Tier, make_story
from storyvis.training import story_tokens

torch.manual_seed(0)

spec = make_story(rng_seed=11, tier=Tier.MEDIUM, T=4)
tokens = story_tokens(spec).unsqueeze(0)  # (B=1, T=4, L=5) int64
print("token batch:", tuple(tokens.shape), tokens.dtype)

config = EncoderConfig(d_embed=32, d_ca=16, d_model=48, n_heads=4, n_layers=2)
bundle = build_encoder_bundle(config, "impartial")
enc = bundle.for_generator

# Step 1: frame embeddings.  Each frame's five tokens are averaged.
phi = enc.embed(tokens)
print("phi:", tuple(phi.shape))

# Step 2: conditioning augmentation.  An affine head turns phi into a
# Gaussian (mu, sigma); the sample is mu + z * sigma with z ~ N(0, I),
# so gradients flow through mu and sigma while z stays pure noise.
z = torch.randn(1, 4, config.d_ca)
stats, c_hat = enc.condition_augment(phi, z)
sigma = stats.sigma.detach()
print("mu:", tuple(stats.mu.shape), " sigma range [%.3f, %.3f]"
      % (sigma.min(), sigma.max()))

# With z = 0 the sample collapses to the mean exactly.
_, c_mean = enc.condition_augment(phi, torch.zeros_like(z))
print("z=0 gives mu exactly:", torch.equal(c_mean, stats.mu))

# The regularizer pulls (mu, sigma) toward the standard normal; it is
# zero only at mu=0, sigma=1.
print("kl at init: %.4f" % kl_loss(stats).item())

# Step 3: the transformer mixes frames.  c_bar carries per-frame context,
# h0 summarizes the whole story.
c_bar, h0 = enc.encode_context(c_hat)
print("c_bar:", tuple(c_bar.shape), " h0:", tuple(h0.shape))

# Gradient routing.  Three policies answer "who trains the encoder":
for mode in ("impartial", "separate", "all_grads"):
    p = route_gradients(mode)
    print(f"{mode:9s} shared={p.shared} detach_story_text={p.detach_story_text} "
          f"story_updates_encoder={p.story_loss_updates_encoder}")

# Under the impartial policy the story discriminator reads embeddings
# through a detached view: the graph ends there, so its loss can never
# reach encoder weights.
phi_story = bundle.story_text(tokens)
print("story view requires grad:", phi_story.requires_grad)

# The generator and image discriminator share one live encoder object.
print("G and D_im share params:", bundle.for_generator is bundle.for_image_d)

# The separate ablation gives every network its own private encoder.
sep = build_encoder_bundle(config, "separate")
mods = sep.encoder_modules()
print("separate mode encoder count:", len(mods))
ids = [set(id(p) for p in m.parameters()) for m in mods]
print("parameter sets disjoint:", not (ids[0] & ids[1] or ids[0] & ids[2]))
