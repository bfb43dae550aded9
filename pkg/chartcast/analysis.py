#    Licensed under the Apache License, Version 2.0 (the "License"); you may
#    not use this file except in compliance with the License. You may obtain
#    a copy of the License at
#
#         http://www.apache.org/licenses/LICENSE-2.0
#
#    Unless required by applicable law or agreed to in writing, software
#    distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
#    WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
#    License for the specific language governing permissions and limitations
#    under the License.

"""Interpretability and embedding geometry.

Relevance maps follow gradient-weighted attention rollout: per vision block
the attention probabilities are multiplied by their gradients, negatives
are clamped to zero and heads are averaged; blocks are then composed as
``R <- R + cam @ R`` starting from the identity, and the CLS row over the
patch tokens gives the patch-grid relevance.
"""

import dataclasses
import os

import numpy as np
from oslo_log import log as logging
import pandas as pd
from PIL import Image
from sklearn import manifold
from sklearn.metrics import pairwise
import torch

from chartcast.common import constants
from chartcast.common import exceptions
from chartcast.common import utils
from chartcast.forecaster import model as model_mod
from chartcast.i18n import _
from chartcast import market_data
from chartcast.representation import chart

LOG = logging.getLogger(__name__)

HEAT_COLOR = np.array([255.0, 0.0, 0.0])
# Above this size t-SNE switches to the Barnes-Hut approximation.
EXACT_TSNE_LIMIT = 500


@dataclasses.dataclass(frozen=True)
class RelevanceMap:
    grid: np.ndarray
    overlay: np.ndarray
    raw_max: float

    def to_png(self):
        return chart.ChartImage(pixels=self.overlay, window_start=None,
                                window_end=None, window_hours=0,
                                value_range=(0.0, 0.0)).to_png()


@dataclasses.dataclass(frozen=True)
class Projection2D:
    points: tuple

    def __len__(self):
        return len(self.points)

    @property
    def coordinates(self):
        if not self.points:
            return np.zeros((0, 2))
        return np.array([(p[0], p[1]) for p in self.points])

    def to_frame(self):
        return pd.DataFrame(list(self.points),
                            columns=['x', 'y', 'label', 'anchor'])


def _rollout(attentions, gradients):
    tokens = attentions[0].shape[-1]
    relevance = torch.eye(tokens, dtype=attentions[0].dtype)
    for attn, grad in zip(attentions, gradients):
        cam = (grad * attn).clamp(min=0).mean(dim=1)[0]
        relevance = relevance + cam @ relevance
    return relevance


def _overlay(pixels, grid, alpha):
    height, width = pixels.shape[:2]
    heat = Image.fromarray(np.rint(grid * 255).astype(np.uint8))
    heat = heat.resize((width, height), Image.BILINEAR)
    weight = alpha * (np.asarray(heat, dtype=np.float64) / 255.0)[..., None]
    blended = (1.0 - weight) * pixels.astype(np.float64) + weight * HEAT_COLOR
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def relevance(image, target, handle, alpha=0.5):
    """Patch relevance of ``image`` for the output direction ``target``.

    ``target`` is a vector in the embedding space; the backward pass starts
    from the dot product of the image embedding with it. When ``target`` is
    None the image's own embedding is used.
    """
    model = handle.model
    vision = getattr(model, 'vision_model', None)
    if vision is None:
        raise exceptions.UnsupportedEncoder(
            encoder=type(model).__name__, feature=_('attention relevance'))
    pixels = handle.pixel_values([image.to_pil()]).requires_grad_(True)
    with torch.enable_grad():
        outputs = vision(pixel_values=pixels, output_attentions=True)
        attentions = outputs.attentions
        if not attentions or any(a is None for a in attentions):
            raise exceptions.UnsupportedEncoder(
                encoder=handle.checkpoint_id,
                feature=_('attention introspection'))
        embedding = outputs.pooler_output
        if handle.embedding_output == constants.EMBEDDING_PROJECTED:
            embedding = model.visual_projection(embedding)
        if target is None:
            direction = embedding.detach()
        else:
            direction = torch.as_tensor(np.asarray(target),
                                        dtype=embedding.dtype).reshape(1, -1)
        score = (embedding * direction).sum()
        gradients = torch.autograd.grad(score, attentions,
                                        allow_unused=True)
    gradients = [torch.zeros_like(a) if g is None else g
                 for a, g in zip(attentions, gradients)]
    rollout = _rollout([a.detach() for a in attentions],
                       [g.detach() for g in gradients])
    rows, cols = handle.patch_grid
    grid = rollout[0, 1:].reshape(rows, cols).cpu().numpy().astype(
        np.float64)
    raw_max = float(grid.max())
    if raw_max > 0:
        grid = grid / raw_max
    else:
        grid = np.zeros_like(grid)
    return RelevanceMap(grid=grid,
                        overlay=_overlay(image.pixels, grid, alpha),
                        raw_max=raw_max)


def line_mass_ratio(rmap, image):
    """Mean relevance of patches touching a drawn line over blank ones."""
    rows, cols = rmap.grid.shape
    pixels = np.asarray(image.pixels)
    height, width = pixels.shape[:2]
    ink = (pixels < 128).all(axis=-1)
    on_line = []
    blank = []
    for r in range(rows):
        for c in range(cols):
            patch = ink[r * height // rows:(r + 1) * height // rows,
                        c * width // cols:(c + 1) * width // cols]
            (on_line if patch.any() else blank).append(rmap.grid[r, c])
    if not on_line or not blank or np.mean(blank) == 0:
        return None
    return float(np.mean(on_line) / np.mean(blank))


def forecaster_target(trained, sequence, frame_index=-1,
                      class_index=constants.LABEL_LONG):
    """Embedding-space direction that raises the forecaster's class score.

    The gradient of the trained forecaster's ``class_index`` probability
    with respect to one frame embedding of ``sequence``.
    """
    module = trained.build()
    inputs = model_mod.as_tensor([sequence], module).requires_grad_(True)
    with torch.enable_grad():
        probs = torch.softmax(module(inputs), dim=-1)
        grad, = torch.autograd.grad(probs[0, class_index], inputs)
    return grad[0, frame_index].detach().cpu().numpy()


def select_cases(anchors, predictions, labels, direction, count, seed):
    """Seeded pick of anchors where prediction and label both equal
    ``direction`` (the True-Long or True-Short cases)."""
    hits = [i for i, (p, y) in enumerate(zip(predictions, labels))
            if int(p) == direction and int(y) == direction]
    if not hits:
        return []
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(hits), size=min(count, len(hits)), replace=False)
    return [anchors[hits[int(i)]] for i in sorted(picks)]


def tsne_projector(seed, perplexity):
    def project(vectors):
        n, dim = vectors.shape
        tsne = manifold.TSNE(
            n_components=2,
            perplexity=min(perplexity, float(n - 1)),
            init='pca' if dim >= 2 else 'random',
            method='exact' if n <= EXACT_TSNE_LIMIT else 'barnes_hut',
            random_state=seed)
        return tsne.fit_transform(vectors)
    return project


def project_embeddings(vectors, labels, anchors, seed, perplexity=30.0,
                       projector=None):
    vectors = np.asarray(vectors, dtype=np.float64)
    if len(vectors) < 2:
        raise exceptions.TooFewPoints(minimum=2, got=len(vectors))
    projector = projector or tsne_projector(seed, perplexity)
    coords = np.asarray(projector(vectors), dtype=np.float64)
    return Projection2D(points=tuple(
        (float(x), float(y), label, anchor)
        for (x, y), label, anchor in zip(coords, labels, anchors)))


def trajectory_score(projection, seed):
    """Consecutive-point distance against random-pair distance."""
    coords = projection.coordinates
    if len(coords) < 3:
        return {'consecutive_mean': None, 'random_mean': None,
                'passed': None}
    consecutive = np.linalg.norm(np.diff(coords, axis=0), axis=1).mean()
    rng = np.random.default_rng(seed)
    a = rng.integers(0, len(coords), size=4 * len(coords))
    b = rng.integers(0, len(coords), size=4 * len(coords))
    keep = a != b
    random_mean = np.linalg.norm(coords[a[keep]] - coords[b[keep]],
                                 axis=1).mean()
    return {'consecutive_mean': float(consecutive),
            'random_mean': float(random_mean),
            'passed': bool(consecutive < random_mean)}


def bucket_summary(projection, bucket_size):
    """Mean 2D distance within and across number buckets."""
    coords = projection.coordinates
    if len(coords) < 2:
        return {}
    numbers = np.array([int(p[2]) for p in projection.points])
    buckets = (numbers - 1) // bucket_size
    distances = pairwise.pairwise_distances(coords)
    same = buckets[:, None] == buckets[None, :]
    off_diagonal = ~np.eye(len(coords), dtype=bool)
    intra = distances[same & off_diagonal]
    inter = distances[~same]
    if not len(intra) or not len(inter):
        return {}
    return {'bucket_size': bucket_size,
            'buckets': int(len(np.unique(buckets))),
            'intra_mean': float(intra.mean()),
            'inter_mean': float(inter.mean()),
            'passed': bool(intra.mean() < inter.mean())}


def number_embedding_study(range_end, handle, seed, bucket_size=100,
                           perplexity=30.0, projector=None):
    """Embed "1".."range_end" as text, project and summarise buckets."""
    numbers = [str(n) for n in range(1, range_end + 1)]
    if len(numbers) < 2:
        vectors = handle.text_features(numbers) if numbers else []
        points = tuple((0.0, 0.0, n, n) for n in numbers[:len(vectors)])
        return Projection2D(points=points), {}
    vectors = handle.text_features(numbers)
    projection = project_embeddings(vectors, numbers, numbers, seed,
                                    perplexity=perplexity,
                                    projector=projector)
    return projection, bucket_summary(projection, bucket_size)


def relevance_filename(anchor_ts):
    return 'relevance_%s.png' % anchor_ts.strftime('%Y%m%dT%H%M%S')


def save_relevance(directory, anchor_ts, rmap):
    path = os.path.join(directory, relevance_filename(anchor_ts))
    utils.atomic_write(path, rmap.to_png())
    return path


def write_projection(path, projection):
    frame = projection.to_frame()
    frame['anchor'] = [market_data.format_ts(a) if hasattr(a, 'strftime')
                       else a for a in frame['anchor']]
    utils.ensure_dir(os.path.dirname(os.path.abspath(path)))
    frame.to_csv(path, index=False)


def write_summary(path, summary, **provenance):
    data = dict(summary)
    data['provenance'] = provenance
    utils.write_json(path, data)
