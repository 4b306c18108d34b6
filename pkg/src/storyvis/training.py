"""Adversarial training loop: three losses, three Adam optimizers, one step.

Each training step performs exactly one update of the image discriminator,
then the story discriminator, then the generator, in that fixed order.  The
discriminators run 4x the generator's learning rate by default; all rates
halve every ``decay_every`` epochs under the step-decay scheduler.  Noise is
drawn fresh for every forward pass from a dedicated generator whose state is
checkpointed, so a resumed run replays the exact noise sequence.
"""

from __future__ import annotations

import contextlib
import os
import warnings
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .checkpoint import read_checkpoint, write_checkpoint
from .discriminators import ImageDiscriminator, StoryDiscriminator
from .encoder import EncoderOutput, RoutingMode, build_encoder_bundle, kl_loss
from .errors import ConfigError, DataError, NumericsError
from .generator import Generator
from .profiles import Profile, get_profile
from .seeding import derive_seed
from .story_codec import Dataset, StorySpec, tokenize

EPS = 1e-7
LOSS_CSV_HEADER = "step,epoch,loss_g,loss_dim,loss_dst,kl,lr_g,lr_dim,lr_dst"
RING_CAPACITY = 4096


# ---------------------------------------------------------------------------
# Configuration and per-run state
# ---------------------------------------------------------------------------

class Scheduler(str, Enum):
    STEP_DECAY = "step_decay"
    WARMUP = "warmup"


@dataclass
class TrainConfig:
    """All knobs for one training run; hashable into checkpoint headers."""

    profile: str = "desk"
    frames: int | None = None
    routing_mode: str = "impartial"
    scheduler: str = "step_decay"
    lr_g: float = 1e-4
    lr_dim: float = 4e-4
    lr_dst: float = 4e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 8
    epochs: int = 30
    decay_every: int = 20
    warmup_steps: int = 4000
    label_smooth: float = 0.9
    kl_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("lr_g", "lr_dim", "lr_dst"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0.5 < self.label_smooth <= 1.0:
            raise ConfigError("label_smooth must lie in (0.5, 1.0]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.decay_every < 1:
            raise ConfigError("decay_every must be >= 1")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")
        try:
            RoutingMode(self.routing_mode)
        except ValueError:
            raise ConfigError(
                f"routing_mode must be one of {[m.value for m in RoutingMode]}"
            ) from None
        try:
            Scheduler(self.scheduler)
        except ValueError:
            raise ConfigError(
                f"scheduler must be one of {[s.value for s in Scheduler]}"
            ) from None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, m: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(m) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**m)

    def resolve_profile(self) -> Profile:
        return get_profile(self.profile, frames=self.frames)


@dataclass
class LossRecord:
    step: int
    epoch: int
    loss_g: float
    loss_dim: float
    loss_dst: float
    kl: float
    lr_g: float
    lr_dim: float
    lr_dst: float

    def csv_row(self) -> str:
        return ",".join([
            str(self.step), str(self.epoch),
            repr(self.loss_g), repr(self.loss_dim), repr(self.loss_dst),
            repr(self.kl), repr(self.lr_g), repr(self.lr_dim), repr(self.lr_dst),
        ])


@dataclass
class TrainState:
    """Counters and the recent-loss ring; heavy state lives in the modules."""

    step: int = 0
    epoch: int = 0
    lr_g: float = 0.0
    lr_dim: float = 0.0
    lr_dst: float = 0.0
    loss_history: deque = field(default_factory=lambda: deque(maxlen=RING_CAPACITY))


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _bce(p: torch.Tensor, target: float) -> torch.Tensor:
    """Elementwise -[t ln p + (1-t) ln(1-p)] with scores clamped to [eps, 1-eps]."""
    p = p.clamp(EPS, 1.0 - EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log1p(-p))


def loss_image(real_scores: torch.Tensor, fake_scores: torch.Tensor,
               mismatch_scores: torch.Tensor | None = None, *,
               smooth: float = 0.9) -> torch.Tensor:
    """Image-discriminator objective, summed over frames, averaged over batch.

    Scores are per-frame probabilities shaped (B, T) or (T,).  Real frames
    score against the smoothed positive target; fake frames and real frames
    paired with the wrong text both score against 0.  ``mismatch_scores``
    may be None (single-story batches have no wrong text to pair).
    """
    if real_scores.shape != fake_scores.shape:
        raise ValueError("real/fake score shapes differ")
    total = _bce(real_scores, smooth) + _bce(fake_scores, 0.0)
    if mismatch_scores is not None:
        if mismatch_scores.shape != real_scores.shape:
            raise ValueError("mismatch score shape differs")
        total = total + _bce(mismatch_scores, 0.0)
    return total.sum(dim=-1).mean()


def loss_story(real_scores: torch.Tensor, fake_scores: torch.Tensor, *,
               smooth: float = 0.9) -> torch.Tensor:
    """Story-discriminator objective: one score per story, averaged over batch."""
    if real_scores.shape != fake_scores.shape:
        raise ValueError("real/fake score shapes differ")
    return (_bce(real_scores, smooth) + _bce(fake_scores, 0.0)).mean()


def loss_generator(fake_im_scores: torch.Tensor, fake_st_scores: torch.Tensor,
                   kl: torch.Tensor | float, *,
                   kl_weight: float = 1.0) -> torch.Tensor:
    """Non-saturating generator objective plus weighted KL regularizer.

    -sum_t ln D_im(fake_t) - ln D_st(fake story), per story, averaged over
    the batch.  Generator targets are NOT label-smoothed; smoothing is
    one-sided and applies to discriminator positives only.
    """
    if fake_im_scores.shape[:-1] != fake_st_scores.shape:
        raise ValueError("frame scores and story scores disagree on batch shape")
    per_story = _bce(fake_im_scores, 1.0).sum(dim=-1) + _bce(fake_st_scores, 1.0)
    return per_story.mean() + kl_weight * kl


# ---------------------------------------------------------------------------
# Batches and matching-aware negatives
# ---------------------------------------------------------------------------

@dataclass
class StoryBatch:
    images: torch.Tensor        # (B, T, 3, H, W) float32 in [-1, 1]
    tokens: torch.Tensor        # (B, T, L) int64
    story_ids: tuple[int, ...]

    def __post_init__(self):
        if self.images.ndim != 5 or self.tokens.ndim != 3:
            raise ValueError("StoryBatch expects (B,T,3,H,W) images and (B,T,L) tokens")
        if self.images.shape[:2] != self.tokens.shape[:2]:
            raise ValueError("images and tokens disagree on (B, T)")

    @property
    def batch_size(self) -> int:
        return self.images.shape[0]

    @property
    def frames(self) -> int:
        return self.images.shape[1]


def story_tokens(spec: StorySpec) -> torch.Tensor:
    """(T, tokens_per_frame) int64 tensor for one story."""
    return torch.tensor([seq.tokens for seq in tokenize(spec)], dtype=torch.int64)


def batch_from_stories(stories: Sequence, *,
                       ids: Sequence[int] | None = None) -> StoryBatch:
    """Stack rendered stories (images + spec) into one training batch."""
    images = torch.stack([torch.from_numpy(np.ascontiguousarray(s.images)) for s in stories])
    tokens = torch.stack([story_tokens(s.spec) for s in stories])
    if ids is None:
        ids = tuple(s.spec.story_id for s in stories)
    return StoryBatch(images=images.float(), tokens=tokens, story_ids=tuple(ids))


def make_mismatch(batch: StoryBatch) -> StoryBatch | None:
    """Pair each story's images with the NEXT story's text (cyclic shift by 1).

    The shift is a derangement for batch_size >= 2, so no pair stays matched.
    A single-story batch has no wrong text available; returns None with a
    warning so the caller drops the mismatch term.
    """
    if batch.batch_size < 2:
        warnings.warn("batch of one story: mismatch term skipped", stacklevel=2)
        return None
    return StoryBatch(
        images=batch.images,
        tokens=torch.roll(batch.tokens, shifts=-1, dims=0),
        story_ids=tuple(np.roll(np.array(batch.story_ids), -1).tolist()),
    )


# ---------------------------------------------------------------------------
# Learning-rate schedules
# ---------------------------------------------------------------------------

def schedule_step_decay(epoch: int, config: TrainConfig) -> tuple[float, float, float]:
    """Base rates halved every ``decay_every`` epochs; 4:1 ratio preserved."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    factor = 0.5 ** (epoch // config.decay_every)
    return (config.lr_g * factor, config.lr_dim * factor, config.lr_dst * factor)


def schedule_warmup(step: int, *, d_model: int, warmup_steps: int) -> float:
    """Linear ramp to warmup_steps, then inverse-sqrt decay; one rate for all."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return d_model ** -0.5 * min(step ** -0.5, step * warmup_steps ** -1.5)


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------

class Trainer:
    """Owns the four networks, three optimizers, and the update loop.

    Construction is deterministic given config.seed: parameter init draws
    from the globally seeded torch RNG, noise from a private generator.
    """

    def __init__(self, config: TrainConfig, dataset: Dataset | None = None,
                 run_dir: str | None = None):
        self.config = config
        self.profile = config.resolve_profile()
        self.run_dir = run_dir
        torch.manual_seed(derive_seed(config.seed, "init"))
        self.noise_gen = torch.Generator()
        self.noise_gen.manual_seed(derive_seed(config.seed, "noise"))

        self.bundle = build_encoder_bundle(self.profile.encoder, config.routing_mode)
        self.generator = Generator(self.profile.gen, self.profile.encoder.d_model)
        self.d_im = ImageDiscriminator(self.profile.d_im, self.profile.image_size)
        self.d_st = StoryDiscriminator(self.profile.d_st, self.profile.image_size)
        self.nets = nn.ModuleDict({
            "encoders": self.bundle,
            "generator": self.generator,
            "d_im": self.d_im,
            "d_st": self.d_st,
        })

        policy = self.bundle.policy
        params_g = list(self.generator.parameters())
        params_g += list(self.bundle.for_generator.parameters())
        params_dim = list(self.d_im.parameters())
        params_dim += list(self.bundle.for_image_d.parameters())
        params_dst = list(self.d_st.parameters())
        if policy.story_loss_updates_encoder:
            params_dst += list(self.bundle.for_story_d.parameters())
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam(params_g, lr=config.lr_g, betas=betas)
        self.opt_dim = torch.optim.Adam(params_dim, lr=config.lr_dim, betas=betas)
        self.opt_dst = torch.optim.Adam(params_dst, lr=config.lr_dst, betas=betas)

        self.state = TrainState()
        self._apply_schedule()

        self.dataset = dataset
        self._images = self._tokens = None
        self._ids: tuple[int, ...] = ()
        if dataset is not None:
            self._load_dataset(dataset)

    # -- data ---------------------------------------------------------------

    def _load_dataset(self, dataset: Dataset):
        if dataset.T != self.profile.frames:
            raise DataError(
                f"dataset has {dataset.T} frames per story, profile expects "
                f"{self.profile.frames}"
            )
        if dataset.H != self.profile.image_size or dataset.W != self.profile.image_size:
            raise DataError(
                f"dataset images are {dataset.H}x{dataset.W}, profile expects "
                f"{self.profile.image_size}x{self.profile.image_size}"
            )
        images, tokens, ids = [], [], []
        for sid in dataset.story_ids:
            story = dataset.load_story(sid)
            images.append(torch.from_numpy(np.ascontiguousarray(story.images)).float())
            tokens.append(story_tokens(story.spec))
            ids.append(sid)
        self._images = torch.stack(images)
        self._tokens = torch.stack(tokens)
        self._ids = tuple(ids)

    @property
    def steps_per_epoch(self) -> int:
        if self._images is None:
            raise RuntimeError("trainer has no dataset attached")
        n = self._images.shape[0]
        return -(-n // self.config.batch_size)

    def _epoch_order(self, epoch: int) -> np.ndarray:
        """Stateless per-epoch shuffle; resume needs only the step counter."""
        rng = np.random.Generator(np.random.PCG64(
            derive_seed(self.config.seed, f"epoch-order/{epoch}")))
        return rng.permutation(self._images.shape[0])

    def batch_at(self, step: int) -> StoryBatch:
        spe = self.steps_per_epoch
        epoch, k = divmod(step, spe)
        order = self._epoch_order(epoch)
        idx = order[k * self.config.batch_size:(k + 1) * self.config.batch_size]
        return StoryBatch(
            images=self._images[idx],
            tokens=self._tokens[idx],
            story_ids=tuple(self._ids[i] for i in idx),
        )

    # -- schedules ------------------------------------------------------------

    def _apply_schedule(self):
        if self.config.scheduler == Scheduler.STEP_DECAY.value:
            lr_g, lr_dim, lr_dst = schedule_step_decay(self.state.epoch, self.config)
        else:
            lr = schedule_warmup(self.state.step + 1,
                                 d_model=self.profile.encoder.d_model,
                                 warmup_steps=self.config.warmup_steps)
            lr_g = lr_dim = lr_dst = lr
        self.state.lr_g, self.state.lr_dim, self.state.lr_dst = lr_g, lr_dim, lr_dst
        for opt, lr in ((self.opt_g, lr_g), (self.opt_dim, lr_dim),
                        (self.opt_dst, lr_dst)):
            for group in opt.param_groups:
                group["lr"] = lr

    # -- one step -------------------------------------------------------------

    def _zero_grads(self):
        self.nets.zero_grad(set_to_none=True)

    def _draw_z(self, B: int, T: int) -> tuple[torch.Tensor, torch.Tensor]:
        z_ca = torch.randn(B, T, self.profile.encoder.d_ca, generator=self.noise_gen)
        z_g = torch.randn(B, T, self.profile.gen.z_dim, generator=self.noise_gen)
        return z_ca, z_g

    def _fake_frames(self, tokens: torch.Tensor) -> torch.Tensor:
        """Generator output with no graph, for discriminator updates."""
        B, T = tokens.shape[:2]
        z_ca, z_g = self._draw_z(B, T)
        with torch.no_grad():
            enc = self.bundle.for_generator(tokens, z_ca)
            return self.generator(enc.c_bar, z_g)

    def _dim_scores(self, frames: torch.Tensor, enc: EncoderOutput) -> torch.Tensor:
        """Flatten (B,T,...) through the image discriminator, back to (B,T)."""
        B, T = frames.shape[:2]
        flat = frames.reshape(B * T, *frames.shape[2:])
        phi = enc.phi.reshape(B * T, -1)
        h0 = enc.h0.repeat_interleave(T, dim=0)
        return self.d_im(flat, phi, h0).reshape(B, T)

    def _guard_loss(self, loss: torch.Tensor, name: str) -> torch.Tensor:
        if not torch.isfinite(loss).all():
            raise NumericsError(f"non-finite {name} at step {self.state.step}",
                                layer=name)
        return loss

    def _dump_crash_checkpoint(self):
        if self.run_dir is None:
            return
        try:
            self.save(os.path.join(self.run_dir, "crash.ckpt"))
        except Exception:
            pass  # the original numeric failure is the error worth raising

    @contextlib.contextmanager
    def _abort_with_dump(self):
        # any numeric blow-up mid-update leaves a post-mortem checkpoint
        try:
            yield
        except NumericsError:
            self._dump_crash_checkpoint()
            raise

    def update_image_d(self, batch: StoryBatch) -> torch.Tensor:
        """One D_im step: real vs fake vs wrong-text frames."""
        with self._abort_with_dump():
            self._zero_grads()
            B, T = batch.batch_size, batch.frames
            z_ca, _ = self._draw_z(B, T)
            enc_im = self.bundle.for_image_d(batch.tokens, z_ca)
            fake = self._fake_frames(batch.tokens)
            real_s = self._dim_scores(batch.images, enc_im)
            fake_s = self._dim_scores(fake, enc_im)
            mis = make_mismatch(batch)
            mis_s = None
            if mis is not None:
                z_mis, _ = self._draw_z(B, T)
                enc_mis = self.bundle.for_image_d(mis.tokens, z_mis)
                mis_s = self._dim_scores(batch.images, enc_mis)
            l_dim = self._guard_loss(
                loss_image(real_s, fake_s, mis_s, smooth=self.config.label_smooth),
                "loss_dim")
            l_dim.backward()
            self.opt_dim.step()
            return l_dim.detach()

    def update_story_d(self, batch: StoryBatch) -> torch.Tensor:
        """One D_st step: sequence-level real vs fake."""
        with self._abort_with_dump():
            self._zero_grads()
            story_phi = self.bundle.story_text(batch.tokens)
            fake = self._fake_frames(batch.tokens)
            real_st = self.d_st(batch.images, story_phi)
            fake_st = self.d_st(fake, story_phi)
            l_dst = self._guard_loss(
                loss_story(real_st, fake_st, smooth=self.config.label_smooth),
                "loss_dst")
            l_dst.backward()
            self.opt_dst.step()
            return l_dst.detach()

    def update_generator(self, batch: StoryBatch) -> tuple[torch.Tensor, torch.Tensor]:
        """One G step: fool both discriminators, regularize the posterior."""
        with self._abort_with_dump():
            self._zero_grads()
            B, T = batch.batch_size, batch.frames
            z_ca, z_g = self._draw_z(B, T)
            enc_g = self.bundle.for_generator(batch.tokens, z_ca)
            fake = self.generator(enc_g.c_bar, z_g)
            if self.bundle.policy.shared:
                enc_for_dim = enc_g
            else:
                z_ca2, _ = self._draw_z(B, T)
                enc_for_dim = self.bundle.for_image_d(batch.tokens, z_ca2)
            fake_im_s = self._dim_scores(fake, enc_for_dim)
            fake_st_s = self.d_st(fake, self.bundle.story_text(batch.tokens))
            kl = kl_loss(enc_g.ca)
            l_g = self._guard_loss(
                loss_generator(fake_im_s, fake_st_s, kl,
                               kl_weight=self.config.kl_weight),
                "loss_g")
            l_g.backward()
            self.opt_g.step()
            return l_g.detach(), kl.detach()

    def train_step(self, batch: StoryBatch) -> LossRecord:
        """One D_im update, one D_st update, one G update, in that order."""
        self._apply_schedule()
        l_dim = self.update_image_d(batch)
        l_dst = self.update_story_d(batch)
        l_g, kl = self.update_generator(batch)

        record = LossRecord(
            step=self.state.step, epoch=self.state.epoch,
            loss_g=l_g.item(), loss_dim=l_dim.item(), loss_dst=l_dst.item(),
            kl=kl.item(),
            lr_g=self.state.lr_g, lr_dim=self.state.lr_dim, lr_dst=self.state.lr_dst,
        )
        self.state.loss_history.append(record)
        self._log_record(record)
        self.state.step += 1
        return record

    def _log_record(self, record: LossRecord):
        if self.run_dir is None:
            return
        path = os.path.join(self.run_dir, "losses.csv")
        new = not os.path.exists(path)
        with open(path, "a", encoding="utf-8") as f:
            if new:
                f.write(LOSS_CSV_HEADER + "\n")
            f.write(record.csv_row() + "\n")

    # -- the loop -------------------------------------------------------------

    def train(self, *, checkpoint_every: int | None = None,
              progress=None) -> list[LossRecord]:
        """Run to config.epochs, resuming from the current step counter."""
        spe = self.steps_per_epoch
        total = self.config.epochs * spe
        records = []
        while self.state.step < total:
            self.state.epoch = self.state.step // spe
            records.append(self.train_step(self.batch_at(self.state.step)))
            if progress is not None:
                progress(records[-1], total)
            if (checkpoint_every and self.run_dir
                    and self.state.step % checkpoint_every == 0
                    and self.state.step < total):
                self.save(os.path.join(
                    self.run_dir, f"step_{self.state.step:07d}.ckpt"))
        self.state.epoch = self.config.epochs
        if self.run_dir is not None:
            self.save(os.path.join(self.run_dir, "final.ckpt"))
        return records

    # -- synthesis ------------------------------------------------------------

    @torch.no_grad()
    def synthesize(self, tokens: torch.Tensor, rng: torch.Generator) -> torch.Tensor:
        """Eval-mode generation: (B,T,L) tokens -> (B,T,3,H,W) frames in (-1,1)."""
        was_training = self.nets.training
        self.nets.eval()
        try:
            B, T = tokens.shape[:2]
            z_ca = torch.randn(B, T, self.profile.encoder.d_ca, generator=rng)
            z_g = torch.randn(B, T, self.profile.gen.z_dim, generator=rng)
            enc = self.bundle.for_generator(tokens, z_ca)
            return self.generator(enc.c_bar, z_g)
        finally:
            self.nets.train(was_training)

    # -- persistence ----------------------------------------------------------

    def _manifest(self) -> dict:
        return {
            "kind": "trainer",
            "config": self.config.to_dict(),
            "step": self.state.step,
            "epoch": self.state.epoch,
            "lr_g": self.state.lr_g,
            "lr_dim": self.state.lr_dim,
            "lr_dst": self.state.lr_dst,
        }

    def _optimizer_blobs(self) -> dict[str, np.ndarray]:
        blobs = {}
        for name, opt in (("g", self.opt_g), ("dim", self.opt_dim),
                          ("dst", self.opt_dst)):
            for idx, entry in opt.state_dict()["state"].items():
                for key, val in entry.items():
                    arr = val.detach().cpu().numpy() if torch.is_tensor(val) \
                        else np.asarray(val, dtype=np.float64)
                    blobs[f"opt/{name}/{idx}/{key}"] = arr
        return blobs

    def save(self, path: str):
        blobs: dict[str, np.ndarray] = {}
        for key, tensor in self.nets.state_dict().items():
            blobs[f"param/{key}"] = tensor.detach().cpu().numpy()
        blobs.update(self._optimizer_blobs())
        blobs["rng/torch"] = torch.get_rng_state().numpy()
        blobs["rng/noise"] = self.noise_gen.get_state().numpy()
        history = np.array(
            [[r.step, r.epoch, r.loss_g, r.loss_dim, r.loss_dst, r.kl,
              r.lr_g, r.lr_dim, r.lr_dst] for r in self.state.loss_history],
            dtype=np.float64).reshape(-1, 9)
        blobs["loss_history"] = history
        write_checkpoint(path, self._manifest(), blobs)

    def _restore_optimizers(self, blobs: dict[str, np.ndarray]):
        for name, opt in (("g", self.opt_g), ("dim", self.opt_dim),
                          ("dst", self.opt_dst)):
            prefix = f"opt/{name}/"
            state: dict[int, dict] = {}
            for blob_name, arr in blobs.items():
                if not blob_name.startswith(prefix):
                    continue
                _, _, idx, key = blob_name.split("/", 3)
                state.setdefault(int(idx), {})[key] = torch.from_numpy(arr.copy())
            sd = opt.state_dict()
            sd["state"] = state
            opt.load_state_dict(sd)

    def load_weights(self, path: str):
        """Restore parameters, optimizer moments, counters, and RNG streams."""
        manifest, blobs = read_checkpoint(path)
        params = {k[len("param/"):]: torch.from_numpy(v.copy())
                  for k, v in blobs.items() if k.startswith("param/")}
        self.nets.load_state_dict(params, strict=True)
        self._restore_optimizers(blobs)
        torch.set_rng_state(torch.from_numpy(blobs["rng/torch"].copy()))
        self.noise_gen.set_state(torch.from_numpy(blobs["rng/noise"].copy()))
        self.state.step = int(manifest["step"])
        self.state.epoch = int(manifest["epoch"])
        self.state.loss_history = deque(
            (LossRecord(int(r[0]), int(r[1]), *map(float, r[2:]))
             for r in blobs["loss_history"]),
            maxlen=RING_CAPACITY)
        self._apply_schedule()

    @classmethod
    def load(cls, path: str, dataset: Dataset | None = None,
             run_dir: str | None = None) -> "Trainer":
        manifest, _ = read_checkpoint(path)
        config = TrainConfig.from_mapping(manifest["config"])
        trainer = cls(config, dataset=dataset, run_dir=run_dir)
        trainer.load_weights(path)
        return trainer
