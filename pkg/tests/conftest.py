"""Shared fixtures: a tiny 16x16 dataset and trainer factories.

Everything here is sized for speed; the slow comparison suites build their
own larger datasets.
"""

import pytest
import torch

from storyvis.story_codec import Tier, make_story, read_dataset, render, write_dataset
from storyvis.training import TrainConfig, Trainer

TINY_SIZE = 16
TINY_FRAMES = 4


@pytest.fixture(scope="session")
def tiny_specs():
    tiers = [Tier.EASY, Tier.EASY, Tier.MEDIUM, Tier.HARD]
    return [make_story(100 + i, tier, T=TINY_FRAMES, story_id=i)
            for i, tier in enumerate(tiers)]


@pytest.fixture(scope="session")
def tiny_renders(tiny_specs):
    return [render(spec, TINY_SIZE, TINY_SIZE) for spec in tiny_specs]


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory, tiny_specs, tiny_renders):
    path = tmp_path_factory.mktemp("data") / "tiny"
    write_dataset(tiny_specs, tiny_renders, str(path))
    return str(path)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_dataset_dir):
    return read_dataset(tiny_dataset_dir)


def tiny_train_config(**overrides) -> TrainConfig:
    base = dict(profile="tiny", batch_size=2, epochs=2, seed=123)
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def make_trainer(tiny_dataset, tmp_path):
    """Factory for tiny trainers; each call gets a fresh run directory."""
    counter = [0]

    def factory(**overrides) -> Trainer:
        counter[0] += 1
        run_dir = tmp_path / f"run{counter[0]}"
        run_dir.mkdir()
        return Trainer(tiny_train_config(**overrides), tiny_dataset,
                       run_dir=str(run_dir))

    return factory


@pytest.fixture(autouse=True)
def _single_thread():
    # keep the 1-core box honest; some torch ops oversubscribe otherwise
    torch.set_num_threads(1)
    yield
