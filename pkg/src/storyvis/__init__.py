"""Text-conditioned story visualization: one generator, two discriminators,
a shared context encoder with selectable gradient routing, and a synthetic
cumulative-scene dataset to train on."""

from .encoder import (ContextEncoder, EncoderBundle, EncoderConfig,
                      RoutingMode, build_encoder_bundle, kl_loss,
                      positional_encoding, route_gradients)
from .errors import (CheckpointCorruptError, CheckpointError,
                     CheckpointVersionError, ConfigError, CorruptRecordError,
                     DataError, DatasetNotFoundError, NumericsError,
                     SchemaVersionError, StoryGenerationError, StoryvisError)
from .evaluation import (ConsistencyScore, MetricReport, collapse_score,
                         consistency, evaluate, ssim)
from .generator import GenConfig, Generator, ResUpBlock
from .discriminators import (DimConfig, DstConfig, ImageDiscriminator,
                             ResDownBlock, StoryDiscriminator)
from .profiles import PROFILE_NAMES, Profile, get_profile
from .spectral import SNConv2d, SNLinear, spectral_modules, spectral_normalize
from .story_codec import (Dataset, ObjectSpec, RenderedStory, StorySpec,
                          Tier, make_story, read_dataset, render, tier_of,
                          tokenize, write_dataset)
from .training import (LossRecord, StoryBatch, TrainConfig, Trainer,
                       batch_from_stories, loss_generator, loss_image,
                       loss_story, make_mismatch, schedule_step_decay,
                       schedule_warmup, story_tokens)

__version__ = "0.1.0"

__all__ = [
    "CheckpointCorruptError", "CheckpointError", "CheckpointVersionError",
    "ConfigError", "ConsistencyScore", "ContextEncoder", "CorruptRecordError",
    "DataError", "Dataset", "DatasetNotFoundError", "DimConfig", "DstConfig",
    "EncoderBundle", "EncoderConfig", "GenConfig", "Generator",
    "ImageDiscriminator", "LossRecord", "MetricReport", "NumericsError",
    "ObjectSpec", "PROFILE_NAMES", "Profile", "RenderedStory", "ResDownBlock",
    "ResUpBlock", "RoutingMode", "SNConv2d", "SNLinear", "SchemaVersionError",
    "StoryBatch", "StoryGenerationError", "StorySpec", "StoryDiscriminator",
    "StoryvisError", "Tier", "TrainConfig", "Trainer", "batch_from_stories",
    "build_encoder_bundle", "collapse_score", "consistency", "evaluate",
    "get_profile", "kl_loss", "loss_generator", "loss_image", "loss_story",
    "make_mismatch", "make_story", "positional_encoding", "read_dataset",
    "render", "route_gradients", "schedule_step_decay", "schedule_warmup",
    "spectral_modules", "spectral_normalize", "ssim", "story_tokens",
    "tier_of", "tokenize", "write_dataset",
]
