"""Image-quality and sequence-consistency metrics, reported per frame.

SSIM is computed natively on numpy arrays: Gaussian window (size 11,
sigma 1.5), constants C1=(0.01)^2 and C2=(0.03)^2 on a [0,1] dynamic range,
and VALID windows only (no padding), so zero-variance inputs reduce to the
textbook closed form.  Reports carry one row per frame position plus an
``all`` row, mirroring a per-frame metric-table layout.
"""

from __future__ import annotations

import os
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .errors import DataError
from .seeding import derive_seed
from .story_codec import Dataset, StorySpec, float_to_u8
from .training import Trainer, story_tokens

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def _as_chw(img) -> np.ndarray:
    arr = img.detach().cpu().numpy() if torch.is_tensor(img) else np.asarray(img)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected (3,H,W) image, got shape {arr.shape}")
    return arr.astype(np.float64)


def ssim(a, b) -> float:
    """Mean SSIM over channels and valid windows; inputs (3,H,W) in [-1,1]."""
    xa, xb = _as_chw(a), _as_chw(b)
    if xa.shape != xb.shape:
        raise ValueError(f"image shapes differ: {xa.shape} vs {xb.shape}")
    H, W = xa.shape[1:]
    if H < SSIM_WINDOW or W < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels per side")
    xa = (xa + 1.0) / 2.0
    xb = (xb + 1.0) / 2.0
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)

    values = []
    for c in range(3):
        wa = np.lib.stride_tricks.sliding_window_view(xa[c], (SSIM_WINDOW, SSIM_WINDOW))
        wb = np.lib.stride_tricks.sliding_window_view(xb[c], (SSIM_WINDOW, SSIM_WINDOW))
        mu_a = np.einsum("ijkl,kl->ij", wa, kernel)
        mu_b = np.einsum("ijkl,kl->ij", wb, kernel)
        e_aa = np.einsum("ijkl,kl->ij", wa * wa, kernel)
        e_bb = np.einsum("ijkl,kl->ij", wb * wb, kernel)
        e_ab = np.einsum("ijkl,kl->ij", wa * wb, kernel)
        var_a = e_aa - mu_a ** 2
        var_b = e_bb - mu_b ** 2
        cov = e_ab - mu_a * mu_b
        num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
        values.append(num / den)
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# Sequence consistency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsistencyScore:
    """Mean SSIM of consecutive frames over the prior frame's object boxes."""

    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("consistency score must lie in [0, 1]")


def _region_slices(box, H: int, W: int) -> tuple[slice, slice]:
    """One bounding box in pixels, widened to the SSIM window if needed."""
    x0, y0, x1, y1 = box
    r0, r1 = int(np.floor(y0 * H)), int(np.ceil(y1 * H))
    c0, c1 = int(np.floor(x0 * W)), int(np.ceil(x1 * W))

    def widen(lo, hi, limit):
        lo, hi = max(lo, 0), min(hi, limit)
        while hi - lo < SSIM_WINDOW:
            if lo > 0:
                lo -= 1
            elif hi < limit:
                hi += 1
            else:
                break
        return lo, hi

    r0, r1 = widen(r0, r1, H)
    c0, c1 = widen(c0, c1, W)
    return slice(r0, r1), slice(c0, c1)


def consistency(images, spec: StorySpec) -> ConsistencyScore:
    """How much of each frame's predecessor content persists, frame over frame.

    For each t >= 1 and each object present in frame t-1, crop frames t-1
    and t to that object's bounding box and compare by SSIM.  A frame whose
    scene does not occlude its predecessor's boxes scores ~1 here; frames
    whose predecessor holds no objects are skipped.  Mean clamped to [0, 1].
    """
    arr = images.detach().cpu().numpy() if torch.is_tensor(images) else np.asarray(images)
    if arr.ndim != 4 or arr.shape[0] != spec.n_frames:
        raise ValueError("images must be (T,3,H,W) aligned with the spec")
    H, W = arr.shape[2:]
    scores = []
    for t in range(1, spec.n_frames):
        for obj in spec.frames[t - 1]:
            rows, cols = _region_slices(obj.bounding_box, H, W)
            scores.append(ssim(arr[t - 1][:, rows, cols], arr[t][:, rows, cols]))
    if not scores:
        return ConsistencyScore(value=1.0)
    return ConsistencyScore(value=float(np.clip(np.mean(scores), 0.0, 1.0)))


def collapse_score(frames, max_stories: int = 20) -> float:
    """Mean pairwise same-position SSIM across DIFFERENT stories' outputs.

    High values mean the model draws near-identical images regardless of the
    conditioning text, a mode-collapse proxy.  Capped at ``max_stories`` for
    cost; the subset is the deterministic prefix.
    """
    arr = frames.detach().cpu().numpy() if torch.is_tensor(frames) else np.asarray(frames)
    if arr.ndim != 5:
        raise ValueError("expected (N,T,3,H,W) generated frames")
    n = min(arr.shape[0], max_stories)
    if n < 2:
        raise ValueError("collapse score needs at least two stories")
    T = arr.shape[1]
    vals = []
    for i in range(n):
        for j in range(i + 1, n):
            for t in range(T):
                vals.append(ssim(arr[i, t], arr[j, t]))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Plugin metric subprocess
# ---------------------------------------------------------------------------

def write_png(path: str, image: np.ndarray):
    """Save one (3,H,W) [-1,1] frame as an 8-bit PNG."""
    Image.fromarray(float_to_u8(image)).save(path, format="PNG")


def run_plugin(command: str, pairs: list[tuple[str, str]]) -> list[float]:
    """Feed `generated<TAB>reference` PNG paths per line; read one float per line."""
    lines = "".join(f"{g}\t{r}\n" for g, r in pairs)
    proc = subprocess.run(
        command, shell=True, input=lines, capture_output=True, text=True)
    if proc.returncode != 0:
        raise DataError(
            f"metric plugin exited with {proc.returncode}; stderr:\n{proc.stderr}")
    out = proc.stdout.split()
    if len(out) != len(pairs):
        raise DataError(
            f"metric plugin returned {len(out)} values for {len(pairs)} pairs")
    try:
        return [float(v) for v in out]
    except ValueError as e:
        raise DataError(f"metric plugin emitted a non-numeric line: {e}") from e


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

@dataclass
class FrameRow:
    label: str
    n: int
    ssim_mean: float
    ssim_std: float
    plugin_mean: float | None = None
    plugin_std: float | None = None


@dataclass
class MetricReport:
    """Per-frame metric rows plus an ``all`` aggregate row.

    The aggregate mean is the arithmetic mean of the per-frame means and the
    aggregate variance the pooled (equal-count) variance, so the ``all`` row
    is exactly recomputable from the per-frame rows.
    """

    per_frame: list[FrameRow]
    aggregate: FrameRow
    n_stories: int
    checkpoint_id: str
    has_plugin: bool = False
    consistency_mean: float | None = None

    def rows(self) -> list[FrameRow]:
        return [*self.per_frame, self.aggregate]

    def to_csv(self) -> str:
        header = "frame,n,ssim_mean,ssim_std"
        if self.has_plugin:
            header += ",plugin_mean,plugin_std"
        lines = [header]
        for row in self.rows():
            cells = [row.label, str(row.n), repr(row.ssim_mean), repr(row.ssim_std)]
            if self.has_plugin:
                cells += [repr(row.plugin_mean), repr(row.plugin_std)]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        cols = ["frame", "n", "ssim_mean", "ssim_std"]
        if self.has_plugin:
            cols += ["plugin_mean", "plugin_std"]
        out = [f"checkpoint: {self.checkpoint_id}   stories: {self.n_stories}"]
        if self.consistency_mean is not None:
            out.append(f"consistency: {self.consistency_mean:.4f}")
        out.append("  ".join(f"{c:>12}" for c in cols))
        for row in self.rows():
            cells = [row.label, str(row.n), f"{row.ssim_mean:.4f}",
                     f"{row.ssim_std:.4f}"]
            if self.has_plugin:
                cells += [f"{row.plugin_mean:.4f}", f"{row.plugin_std:.4f}"]
            out.append("  ".join(f"{c:>12}" for c in cells))
        return "\n".join(out) + "\n"


def _frame_label(t: int) -> str:
    return str(t + 1)


def _pooled(rows: list[FrameRow], key_mean, key_std) -> tuple[float, float]:
    means = np.array([key_mean(r) for r in rows], dtype=np.float64)
    stds = np.array([key_std(r) for r in rows], dtype=np.float64)
    mean = float(np.mean(means))
    var = float(np.mean(stds ** 2) + np.var(means))
    return mean, float(np.sqrt(var))


def build_report(ssim_values: np.ndarray, *, checkpoint_id: str,
                 plugin_values: np.ndarray | None = None,
                 consistency_mean: float | None = None) -> MetricReport:
    """(n_stories, T) metric samples -> per-frame rows + aggregate."""
    n, T = ssim_values.shape
    rows = []
    for t in range(T):
        row = FrameRow(
            label=_frame_label(t), n=n,
            ssim_mean=float(np.mean(ssim_values[:, t])),
            ssim_std=float(np.std(ssim_values[:, t])),
        )
        if plugin_values is not None:
            row.plugin_mean = float(np.mean(plugin_values[:, t]))
            row.plugin_std = float(np.std(plugin_values[:, t]))
        rows.append(row)
    agg_mean, agg_std = _pooled(rows, lambda r: r.ssim_mean, lambda r: r.ssim_std)
    aggregate = FrameRow(label="all", n=n * T, ssim_mean=agg_mean, ssim_std=agg_std)
    if plugin_values is not None:
        aggregate.plugin_mean, aggregate.plugin_std = _pooled(
            rows, lambda r: r.plugin_mean, lambda r: r.plugin_std)
    return MetricReport(
        per_frame=rows, aggregate=aggregate, n_stories=n,
        checkpoint_id=checkpoint_id, has_plugin=plugin_values is not None,
        consistency_mean=consistency_mean)


def evaluate(dataset: Dataset, n_stories: int, seed: int, *,
             trainer: Trainer | None = None, plugin: str | None = None,
             story_ids: list[int] | None = None,
             checkpoint_id: str | None = None) -> MetricReport:
    """Generate (or echo, when trainer is None) stories and score them.

    Each story uses a private noise stream derived from (seed, story id), so
    scores across checkpoints differ only through parameters.  With
    ``trainer=None`` the ground truth is scored against itself, which pins
    the upper end of the scale (all SSIM rows 1.0).
    """
    if story_ids is None:
        story_ids = dataset.story_ids[:n_stories]
    if n_stories > len(dataset):
        raise DataError(
            f"requested {n_stories} stories, dataset holds {len(dataset)}")
    if len(story_ids) != n_stories:
        raise DataError(f"requested {n_stories} stories, got {len(story_ids)} ids")
    if trainer is not None and trainer.profile.frames != dataset.T:
        raise DataError(
            f"checkpoint expects {trainer.profile.frames} frames per story, "
            f"dataset has {dataset.T}")
    if checkpoint_id is None:
        checkpoint_id = "oracle" if trainer is None else f"step{trainer.state.step}"

    T = dataset.T
    ssim_values = np.zeros((n_stories, T), dtype=np.float64)
    consistencies = []
    generated = []
    references = []
    for i, sid in enumerate(story_ids):
        story = dataset.load_story(sid)
        if trainer is None:
            frames = story.images
        else:
            rng = torch.Generator()
            rng.manual_seed(derive_seed(seed, f"eval-z/{sid}"))
            tokens = story_tokens(story.spec).unsqueeze(0)
            frames = trainer.synthesize(tokens, rng)[0].numpy()
        for t in range(T):
            ssim_values[i, t] = ssim(frames[t], story.images[t])
        consistencies.append(consistency(frames, story.spec).value)
        generated.append(frames)
        references.append(story.images)

    plugin_values = None
    if plugin is not None:
        with tempfile.TemporaryDirectory(prefix="storyvis-plugin-") as tmp:
            pairs = []
            for i, sid in enumerate(story_ids):
                for t in range(T):
                    g = os.path.join(tmp, f"gen_{sid}_{t}.png")
                    r = os.path.join(tmp, f"ref_{sid}_{t}.png")
                    write_png(g, generated[i][t])
                    write_png(r, references[i][t])
                    pairs.append((g, r))
            values = run_plugin(plugin, pairs)
        plugin_values = np.array(values, dtype=np.float64).reshape(n_stories, T)

    return build_report(
        ssim_values, checkpoint_id=checkpoint_id, plugin_values=plugin_values,
        consistency_mean=float(np.mean(consistencies)))
