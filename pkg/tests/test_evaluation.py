"""SSIM against a naive windowed reference, consistency, reports, plugins."""

import math
import textwrap

import numpy as np
import pytest
import torch

from storyvis.errors import DataError
from storyvis.evaluation import (
    ConsistencyScore,
    MetricReport,
    build_report,
    collapse_score,
    consistency,
    evaluate,
    run_plugin,
    ssim,
    write_png,
)
from storyvis.story_codec import make_story, read_dataset, render, write_dataset

# ---------------------------------------------------------------------------
# Naive reference: explicit python loops over every window
# ---------------------------------------------------------------------------

WIN = 11


def ref_kernel():
    k = [[math.exp(-0.5 * (((u - 5) / 1.5) ** 2 + ((v - 5) / 1.5) ** 2))
          for v in range(WIN)] for u in range(WIN)]
    s = sum(sum(row) for row in k)
    return [[x / s for x in row] for row in k]


def ref_ssim(a, b) -> float:
    xa = (np.asarray(a, dtype=np.float64) + 1.0) / 2.0
    xb = (np.asarray(b, dtype=np.float64) + 1.0) / 2.0
    k = ref_kernel()
    C1, C2 = 0.01 ** 2, 0.03 ** 2
    H, W = xa.shape[1:]
    vals = []
    for c in range(3):
        for i in range(H - WIN + 1):
            for j in range(W - WIN + 1):
                mu_a = mu_b = e_aa = e_bb = e_ab = 0.0
                for u in range(WIN):
                    for v in range(WIN):
                        w = k[u][v]
                        pa = xa[c, i + u, j + v]
                        pb = xb[c, i + u, j + v]
                        mu_a += w * pa
                        mu_b += w * pb
                        e_aa += w * pa * pa
                        e_bb += w * pb * pb
                        e_ab += w * pa * pb
                var_a = e_aa - mu_a * mu_a
                var_b = e_bb - mu_b * mu_b
                cov = e_ab - mu_a * mu_b
                num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
                den = (mu_a ** 2 + mu_b ** 2 + C1) * (var_a + var_b + C2)
                vals.append(num / den)
    return sum(vals) / len(vals)


class TestSSIM:
    def test_self_similarity_is_exactly_one(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, (3, 16, 16))
        assert ssim(x, x) == 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(-1, 1, (3, 16, 16))
        b = rng.uniform(-1, 1, (3, 16, 16))
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12

    def test_constant_pair_closed_form(self):
        # constants 0.2 and 0.8 after the [-1,1] -> [0,1] map
        a = np.full((3, 16, 16), -0.6)
        b = np.full((3, 16, 16), 0.6)
        want = (2 * 0.2 * 0.8 + 0.01 ** 2) / (0.2 ** 2 + 0.8 ** 2 + 0.01 ** 2)
        assert ssim(a, b) == pytest.approx(want, abs=1e-12)
        assert ssim(a, b) == pytest.approx(0.4707, abs=1e-4)

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            a = rng.uniform(-1, 1, (3, 14, 14))
            b = np.clip(a + rng.normal(0, 0.2, a.shape), -1, 1)
            assert ssim(a, b) == pytest.approx(ref_ssim(a, b), abs=1e-6)

    def test_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = rng.uniform(-1, 1, (3, 12, 12))
            b = rng.uniform(-1, 1, (3, 12, 12))
            assert -1.0 <= ssim(a, b) <= 1.0

    def test_accepts_torch_tensors(self):
        x = torch.rand(3, 16, 16) * 2 - 1
        assert ssim(x, x) == 1.0

    def test_too_small_rejected(self):
        x = np.zeros((3, 10, 10))
        with pytest.raises(ValueError, match="11"):
            ssim(x, x)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((3, 16, 16)), np.zeros((3, 12, 12)))
        with pytest.raises(ValueError):
            ssim(np.zeros((1, 16, 16)), np.zeros((1, 16, 16)))


class TestConsistency:
    def test_identical_frames_score_one(self, tiny_specs):
        spec = tiny_specs[0]
        frame = np.random.default_rng(4).uniform(-1, 1, (3, 16, 16))
        images = np.stack([frame] * spec.n_frames)
        assert consistency(images, spec).value == 1.0

    def test_ground_truth_stories_score_high(self):
        # objects persist pixel-exactly when nothing occludes them, so only
        # window-border effects keep these below 1
        for seed in range(10, 30):
            spec = make_story(seed, "easy", T=4)
            images = render(spec, 64, 64).images
            assert consistency(images, spec).value > 0.95

    def test_occlusion_lowers_the_score(self):
        spec = make_story(13, "hard", T=4)
        images = render(spec, 64, 64).images
        easy = make_story(13, "easy", T=4)
        easy_images = render(easy, 64, 64).images
        assert consistency(images, spec).value < consistency(easy_images, easy).value

    def test_noise_scores_low(self, tiny_specs):
        spec = tiny_specs[0]
        rng = np.random.default_rng(5)
        images = rng.uniform(-1, 1, (spec.n_frames, 3, 16, 16))
        assert consistency(images, spec).value < 0.5

    def test_score_range_enforced(self):
        with pytest.raises(ValueError):
            ConsistencyScore(value=1.5)
        with pytest.raises(ValueError):
            ConsistencyScore(value=-0.1)

    def test_frame_count_mismatch_rejected(self, tiny_specs):
        with pytest.raises(ValueError):
            consistency(np.zeros((2, 3, 16, 16)), tiny_specs[0])


class TestCollapseScore:
    def test_identical_outputs_score_one(self):
        frame = np.random.default_rng(6).uniform(-1, 1, (2, 3, 16, 16))
        frames = np.stack([frame, frame, frame])
        assert collapse_score(frames) == pytest.approx(1.0, abs=1e-12)

    def test_distinct_renders_score_below_one(self, tiny_renders):
        frames = np.stack([r.images for r in tiny_renders[:3]])
        assert collapse_score(frames) < 0.99

    def test_story_cap_uses_prefix(self, tiny_renders):
        frames = np.stack([r.images for r in tiny_renders[:3]])
        capped = collapse_score(frames, max_stories=2)
        assert capped == pytest.approx(collapse_score(frames[:2]), abs=1e-12)

    def test_too_few_stories_rejected(self):
        with pytest.raises(ValueError):
            collapse_score(np.zeros((1, 2, 3, 16, 16)))
        with pytest.raises(ValueError):
            collapse_score(np.zeros((2, 3, 16, 16)))


# ---------------------------------------------------------------------------
# Plugin protocol
# ---------------------------------------------------------------------------

def plugin_command(tmp_path, body: str) -> str:
    script = tmp_path / "metric.py"
    script.write_text(textwrap.dedent(body))
    return f"python3 {script}"


class TestPlugin:
    def test_png_round_trip(self, tmp_path, tiny_renders):
        from PIL import Image
        path = str(tmp_path / "frame.png")
        write_png(path, tiny_renders[0].images[0])
        arr = np.asarray(Image.open(path))
        assert arr.shape == (16, 16, 3) and arr.dtype == np.uint8

    def test_scores_read_back_in_order(self, tmp_path):
        cmd = plugin_command(tmp_path, """\
            import sys
            for i, line in enumerate(sys.stdin):
                gen, ref = line.rstrip("\\n").split("\\t")
                print(0.1 * i)
        """)
        got = run_plugin(cmd, [("a.png", "b.png"), ("c.png", "d.png")])
        assert got == pytest.approx([0.0, 0.1])

    def test_nonzero_exit_carries_stderr(self, tmp_path):
        cmd = plugin_command(tmp_path, """\
            import sys
            print("boom", file=sys.stderr)
            sys.exit(2)
        """)
        with pytest.raises(DataError, match="boom"):
            run_plugin(cmd, [("a.png", "b.png")])

    def test_count_mismatch_rejected(self, tmp_path):
        cmd = plugin_command(tmp_path, "print(0.5)\n")
        with pytest.raises(DataError, match="1 values for 2"):
            run_plugin(cmd, [("a", "b"), ("c", "d")])

    def test_non_numeric_output_rejected(self, tmp_path):
        cmd = plugin_command(tmp_path, """\
            import sys
            for line in sys.stdin:
                print("not-a-number")
        """)
        with pytest.raises(DataError, match="non-numeric"):
            run_plugin(cmd, [("a", "b")])


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

class TestReport:
    def test_aggregate_recomputable_from_per_frame_rows(self):
        rng = np.random.default_rng(7)
        values = rng.uniform(0, 1, (6, 4))
        report = build_report(values, checkpoint_id="x")
        means = [r.ssim_mean for r in report.per_frame]
        stds = [r.ssim_std for r in report.per_frame]
        want_mean = np.mean(means)
        want_std = math.sqrt(np.mean(np.square(stds)) + np.var(means))
        assert report.aggregate.ssim_mean == pytest.approx(want_mean, abs=1e-12)
        assert report.aggregate.ssim_std == pytest.approx(want_std, abs=1e-12)
        # and the pooled numbers equal the flat sample statistics
        assert report.aggregate.ssim_mean == pytest.approx(values.mean(), abs=1e-12)
        assert report.aggregate.ssim_std == pytest.approx(values.std(), abs=1e-12)

    def test_row_labels_and_counts(self):
        report = build_report(np.full((3, 4), 0.5), checkpoint_id="x")
        labels = [r.label for r in report.rows()]
        assert labels == ["1", "2", "3", "4", "all"]
        assert report.aggregate.n == 12
        assert all(r.n == 3 for r in report.per_frame)

    def test_csv_shape(self):
        report = build_report(np.full((2, 3), 0.25), checkpoint_id="x",
                              plugin_values=np.full((2, 3), 0.75))
        lines = report.to_csv().splitlines()
        assert lines[0] == "frame,n,ssim_mean,ssim_std,plugin_mean,plugin_std"
        assert len(lines) == 1 + 3 + 1
        assert lines[-1].startswith("all,6,")

    def test_table_renders(self):
        report = build_report(np.full((2, 3), 0.25), checkpoint_id="step7",
                              consistency_mean=0.5)
        table = report.to_table()
        assert "step7" in table and "consistency: 0.5000" in table


# ---------------------------------------------------------------------------
# End-to-end evaluate
# ---------------------------------------------------------------------------

class TestEvaluate:
    def test_oracle_mode_pins_the_scale(self, tiny_dataset):
        report = evaluate(tiny_dataset, 3, seed=0)
        assert report.checkpoint_id == "oracle"
        for row in report.rows():
            assert row.ssim_mean == 1.0 and row.ssim_std == 0.0
        assert report.consistency_mean is not None

    def test_oracle_csv_reproducible(self, tiny_dataset):
        a = evaluate(tiny_dataset, 2, seed=3).to_csv()
        b = evaluate(tiny_dataset, 2, seed=3).to_csv()
        assert a == b

    def test_trainer_mode_deterministic_per_seed(self, make_trainer):
        t = make_trainer()
        a = evaluate(t.dataset, 2, seed=1, trainer=t)
        b = evaluate(t.dataset, 2, seed=1, trainer=t)
        assert a.to_csv() == b.to_csv()
        assert a.checkpoint_id == "step0"
        for row in a.rows():
            assert -1.0 <= row.ssim_mean <= 1.0

    def test_trainer_mode_seed_changes_scores(self, make_trainer):
        t = make_trainer()
        a = evaluate(t.dataset, 2, seed=1, trainer=t)
        b = evaluate(t.dataset, 2, seed=2, trainer=t)
        assert a.to_csv() != b.to_csv()

    def test_too_many_stories_rejected(self, tiny_dataset):
        with pytest.raises(DataError, match="holds 4"):
            evaluate(tiny_dataset, 5, seed=0)

    def test_story_id_count_must_match(self, tiny_dataset):
        with pytest.raises(DataError):
            evaluate(tiny_dataset, 2, seed=0, story_ids=[0])

    def test_frame_count_mismatch_rejected(self, make_trainer, tmp_path):
        specs = [make_story(40 + i, "easy", T=2, story_id=i) for i in range(2)]
        renders = [render(s, 16, 16) for s in specs]
        root = str(tmp_path / "short")
        write_dataset(specs, renders, root)
        short = read_dataset(root)
        with pytest.raises(DataError, match="frames"):
            evaluate(short, 2, seed=0, trainer=make_trainer())

    def test_plugin_columns_flow_through(self, tiny_dataset, tmp_path):
        cmd = plugin_command(tmp_path, """\
            import sys
            for line in sys.stdin:
                print(0.5)
        """)
        report = evaluate(tiny_dataset, 2, seed=0, plugin=cmd)
        assert report.has_plugin
        assert report.aggregate.plugin_mean == pytest.approx(0.5, abs=1e-12)
        assert report.aggregate.plugin_std == pytest.approx(0.0, abs=1e-9)
