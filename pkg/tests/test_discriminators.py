"""Image and story discriminators: shapes, ranges, fusion, exact zero cases."""

import inspect

import pytest
import torch
from torch import nn

from storyvis.discriminators import (
    DimConfig,
    DstConfig,
    ImageDiscriminator,
    ResDownBlock,
    ScoreBatch,
    ScoreKind,
    StoryDiscriminator,
    replicate_spatial,
)

DIM_CFG = DimConfig(n_down_blocks=2, base_channels=8, dropout_rate=0.3,
                    d_model=32, text_dim=16)
DST_CFG = DstConfig(d_shared=16, n_down_blocks=2, base_channels=8,
                    text_dim=16, frames=4)
SIZE = 16


def image_d(seed=0) -> ImageDiscriminator:
    torch.manual_seed(seed)
    return ImageDiscriminator(DIM_CFG, SIZE)


def story_d(seed=0) -> StoryDiscriminator:
    torch.manual_seed(seed)
    return StoryDiscriminator(DST_CFG, SIZE)


class TestResDownBlock:
    def test_shape_contract(self):
        torch.manual_seed(0)
        block = ResDownBlock(8)
        out = block(torch.randn(2, 8, 16, 16))
        assert out.shape == (2, 16, 8, 8)

    def test_odd_spatial_dims_rejected(self):
        block = ResDownBlock(4)
        with pytest.raises(ValueError):
            block(torch.randn(1, 4, 15, 16))
        with pytest.raises(ValueError):
            block(torch.randn(1, 4, 16, 7))

    def test_eval_mode_deterministic_despite_dropout(self):
        torch.manual_seed(1)
        block = ResDownBlock(4, dropout_rate=0.5).eval()
        x = torch.randn(1, 4, 8, 8)
        with torch.no_grad():
            assert torch.equal(block(x), block(x))


class TestReplication:
    def test_every_position_holds_the_same_vector(self):
        vec = torch.randn(3, 7)
        rep = replicate_spatial(vec, 5, 6)
        assert rep.shape == (3, 7, 5, 6)
        assert rep.var(dim=(-2, -1), unbiased=False).max().item() == 0.0
        assert torch.equal(rep[:, :, 2, 3], vec)


class TestImageDiscriminator:
    def test_scores_are_probabilities(self):
        d = image_d()
        n = 6
        scores = d(torch.rand(n, 3, SIZE, SIZE) * 2 - 1,
                   torch.randn(n, DIM_CFG.text_dim),
                   torch.randn(n, DIM_CFG.d_model))
        assert scores.shape == (n,)
        assert (scores >= 0).all() and (scores <= 1).all()

    def test_no_pooling_layers(self):
        pool_types = (nn.MaxPool2d, nn.AvgPool2d, nn.AdaptiveAvgPool2d,
                      nn.AdaptiveMaxPool2d)
        assert not any(isinstance(m, pool_types) for m in image_d().modules())
        assert not any("Pool" in type(m).__name__ for m in image_d().modules())

    def test_downsampling_chain(self):
        d = image_d()
        feats = d.image_features(torch.randn(2, 3, SIZE, SIZE))
        want_c = DIM_CFG.base_channels * 2 ** DIM_CFG.n_down_blocks
        want_hw = SIZE // 2 ** DIM_CFG.n_down_blocks
        assert feats.shape == (2, want_c, want_hw, want_hw)

    def test_eval_calls_bit_stable(self):
        d = image_d().eval()
        img = torch.rand(2, 3, SIZE, SIZE) * 2 - 1
        phi = torch.randn(2, DIM_CFG.text_dim)
        h0 = torch.randn(2, DIM_CFG.d_model)
        with torch.no_grad():
            assert torch.equal(d(img, phi, h0), d(img, phi, h0))

    def test_train_mode_dropout_varies(self):
        torch.manual_seed(2)
        d = image_d().train()
        img = torch.rand(2, 3, SIZE, SIZE) * 2 - 1
        phi = torch.randn(2, DIM_CFG.text_dim)
        h0 = torch.randn(2, DIM_CFG.d_model)
        a = d(img, phi, h0)
        b = d(img, phi, h0)
        assert not torch.equal(a, b)

    def test_image_gradient_nonzero(self):
        d = image_d(seed=3).eval()
        img = (torch.rand(1, 3, SIZE, SIZE) * 2 - 1).requires_grad_()
        phi = torch.randn(1, DIM_CFG.text_dim)
        h0 = torch.randn(1, DIM_CFG.d_model)
        d(img, phi, h0).sum().backward()
        assert torch.any(img.grad != 0)

    def test_signature_is_image_phi_h0(self):
        params = list(inspect.signature(ImageDiscriminator.forward).parameters)
        assert params == ["self", "images", "phi", "h0"]

    def test_too_many_blocks_rejected(self):
        with pytest.raises(ValueError):
            ImageDiscriminator(DimConfig(n_down_blocks=3, base_channels=8,
                                         d_model=32, text_dim=16), 16)

    def test_dropout_rate_validated(self):
        with pytest.raises(ValueError):
            DimConfig(dropout_rate=1.0)


class TestStoryDiscriminator:
    def test_scores_are_probabilities(self):
        d = story_d()
        scores = d(torch.rand(3, 4, 3, SIZE, SIZE) * 2 - 1,
                   torch.randn(3, 4, DST_CFG.text_dim))
        assert scores.shape == (3,)
        assert (scores >= 0).all() and (scores <= 1).all()

    def test_zero_text_scores_sigmoid_of_bias_exactly(self):
        d = story_d().eval()
        images = torch.rand(2, 4, 3, SIZE, SIZE) * 2 - 1
        scores = d(images, torch.zeros(2, 4, DST_CFG.text_dim))
        want = torch.sigmoid(d.out_fc.bias.detach()).expand(2)
        assert torch.equal(scores, want)

    def test_frame_count_mismatch_rejected(self):
        d = story_d()
        with pytest.raises(ValueError):
            d(torch.rand(1, 3, 3, SIZE, SIZE), torch.randn(1, 3, DST_CFG.text_dim))

    def test_text_image_shape_mismatch_rejected(self):
        d = story_d()
        with pytest.raises(ValueError):
            d(torch.rand(1, 4, 3, SIZE, SIZE), torch.randn(2, 4, DST_CFG.text_dim))

    def test_no_pooling_layers(self):
        assert not any("Pool" in type(m).__name__ for m in story_d().modules())

    def test_eval_calls_bit_stable(self):
        d = story_d().eval()
        images = torch.rand(1, 4, 3, SIZE, SIZE) * 2 - 1
        phi = torch.randn(1, 4, DST_CFG.text_dim)
        with torch.no_grad():
            assert torch.equal(d(images, phi), d(images, phi))

    def test_signature_is_images_phi(self):
        params = list(inspect.signature(StoryDiscriminator.forward).parameters)
        assert params == ["self", "images", "phi"]

    def test_image_gradient_nonzero(self):
        d = story_d(seed=4).eval()
        images = (torch.rand(1, 4, 3, SIZE, SIZE) * 2 - 1).requires_grad_()
        phi = torch.randn(1, 4, DST_CFG.text_dim)
        d(images, phi).sum().backward()
        assert torch.any(images.grad != 0)


class TestScoreBatch:
    def test_accepts_probabilities(self):
        sb = ScoreBatch(scores=torch.tensor([0.0, 0.5, 1.0]),
                        kind=ScoreKind.IMAGE_REAL)
        assert sb.kind is ScoreKind.IMAGE_REAL

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ScoreBatch(scores=torch.tensor([1.5]), kind=ScoreKind.STORY_FAKE)
        with pytest.raises(ValueError):
            ScoreBatch(scores=torch.tensor([-0.1]), kind=ScoreKind.IMAGE_FAKE)
