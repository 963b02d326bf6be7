"""End-to-end evaluation drivers over a trained (or fresh) model state.

Cross-domain appearance transfer: for each appearance code y, a source
image uses y's own parent shape and a target uses a shape from the other
domain; the chi-square distance between their foreground color (and
texton) histograms measures how well appearance survives the transfer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .filterbank import FilterBank, compute_histogram
from .losses import PairScheme, build_batch, sample_base_codes
from .scene import DomainPartition, LatentCode, SceneParams, render, sample_pose
from .tensor import Tensor


def render_image(params: SceneParams, code: LatentCode, size: int) -> tuple[np.ndarray, np.ndarray]:
    out = render(code, params, size, size)
    return out.image.data, out.mask


def cross_domain_pairs(partition: DomainPartition,
                       rng: np.random.Generator) -> list[tuple[LatentCode, LatentCode]]:
    """(source, target) codes per appearance: same y/b/z, shape from the
    other domain for the target."""
    pairs = []
    for y in range(partition.n_y):
        xi = partition.parent_x(y)
        pool = partition.x_b if xi in partition.x_a else partition.x_a
        xj = int(rng.choice(pool))
        b = int(rng.integers(partition.n_b))
        z = sample_pose(rng)
        pairs.append((LatentCode(x=xi, y=y, b=b, z=z),
                      LatentCode(x=xj, y=y, b=b, z=z)))
    return pairs


def sample_dataset_images(params: SceneParams, partition: DomainPartition,
                          size: int, rng: np.random.Generator,
                          per_y: int = 2) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """In-distribution renders used to fit the evaluation codebooks."""
    images, masks = [], []
    for y in range(partition.n_y):
        for _ in range(per_y):
            code = LatentCode(x=partition.parent_x(y), y=y,
                              b=int(rng.integers(partition.n_b)), z=sample_pose(rng))
            img, m = render_image(params, code, size)
            images.append(img)
            masks.append(m)
    return images, masks


@dataclass
class TransferResult:
    mean_color_chi2: float
    per_pair_color: list[float]
    mean_texton_chi2: float | None
    per_pair_texton: list[float]


def cross_domain_chi2(params: SceneParams, partition: DomainPartition,
                      size: int, seed: int,
                      color_codebook: metrics.Codebook | None = None,
                      with_textons: bool | None = None,
                      n_codebook_samples: int = 50000) -> TransferResult:
    """Mean chi-square between source/target foreground histograms.

    Texton histograms need the image to fit the MR8 support (49); they
    are skipped for smaller renders unless explicitly requested.
    """
    rng = np.random.default_rng(seed)
    if with_textons is None:
        with_textons = size >= metrics.MR8_SUPPORT

    if color_codebook is None:
        images, masks = sample_dataset_images(params, partition, size, rng)
        color_codebook = metrics.build_color_codebook(
            images, masks, n_samples=n_codebook_samples, seed=seed)
    bank = metrics.Mr8Bank() if with_textons else None
    texton_codebook = None
    if with_textons:
        images, masks = sample_dataset_images(params, partition, size, rng)
        texton_codebook = metrics.build_texton_codebook(
            images, masks, n_samples=n_codebook_samples, seed=seed, bank=bank)

    color_d, texton_d = [], []
    for src, tgt in cross_domain_pairs(partition, rng):
        si, sm = render_image(params, src, size)
        ti, tm = render_image(params, tgt, size)
        hs = metrics.assign_histogram(metrics.foreground_features(si, sm), color_codebook)
        ht = metrics.assign_histogram(metrics.foreground_features(ti, tm), color_codebook)
        color_d.append(metrics.chi2_distance(hs, ht))
        if with_textons:
            hs = metrics.assign_histogram(
                metrics.texton_features(si, sm, bank), texton_codebook)
            ht = metrics.assign_histogram(
                metrics.texton_features(ti, tm, bank), texton_codebook)
            texton_d.append(metrics.chi2_distance(hs, ht))
    return TransferResult(
        mean_color_chi2=float(np.mean(color_d)),
        per_pair_color=color_d,
        mean_texton_chi2=float(np.mean(texton_d)) if texton_d else None,
        per_pair_texton=texton_d,
    )


def retrieval_accuracy(bank: FilterBank, params: SceneParams,
                       partition: DomainPartition, size: int,
                       n_batches: int, batch_size: int,
                       rng: np.random.Generator, tau: float = 0.5) -> float:
    """Positive-pair top-1 accuracy: fraction of anchors whose nearest
    embedding (cosine similarity) among the other 2N-1 is their positive."""
    hits = total = 0
    for _ in range(n_batches):
        base = sample_base_codes(batch_size, partition, rng)
        batch = build_batch(PairScheme.FILTER, base, rng, partition, tau=tau)
        embs = []
        for code in batch.anchors + batch.positives:
            out = render(code, params, size, size)
            h = compute_histogram(out.image, Tensor(out.mask), bank)
            embs.append(h.data / np.linalg.norm(h.data))
        mat = np.stack(embs)
        sims = mat @ mat.T
        np.fill_diagonal(sims, -np.inf)
        n = len(batch.anchors)
        for i in range(n):
            if int(sims[i].argmax()) == i + n:
                hits += 1
            total += 1
    return hits / total


def shape_iou(params: SceneParams, partition: DomainPartition, size: int,
              threshold: float = 0.2, n_splits: int = 10,
              seed: int = 0) -> dict[int, metrics.IouScore]:
    """Shape-disentanglement IoU per shape code, over all appearance codes."""
    rng = np.random.default_rng(seed)
    scores = {}
    for x in range(partition.n_x):
        b = int(rng.integers(partition.n_b))
        z = sample_pose(rng)

        def render_fn(xc, y, _b=b, _z=z):
            return render(LatentCode(x=xc, y=y, b=_b, z=_z), params, size, size).image.data

        scores[x] = metrics.shape_iou_score(
            render_fn, x, list(range(partition.n_y)),
            threshold=threshold, n_splits=n_splits, seed=seed + x)
    return scores


def resistivity(params: SceneParams, partition: DomainPartition, size: int,
                seed: int = 0) -> metrics.ResistivityReport:
    rng = np.random.default_rng(seed)
    b = int(rng.integers(partition.n_b))
    z = sample_pose(rng)

    def render_fn(x, y):
        return render(LatentCode(x=x, y=y, b=b, z=z), params, size, size).image.data

    return metrics.resistivity_report(render_fn, list(range(partition.n_x)),
                                      list(range(partition.n_y)))
