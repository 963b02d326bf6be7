"""Quantitative evaluation: color/texton codebooks, chi-square histogram
distance, shape-IoU disentanglement score, and the resistivity analysis.

Everything here is plain numpy/scipy on rendered pixels: it is the
independent measurement route, deliberately separate from the
differentiable histogram used for training.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import DegenerateInputError, DimensionError

CHI2_EPS = 1e-10
MASK_BIN_THRESHOLD = 0.5


# -- k-means codebooks -------------------------------------------------

@dataclass
class Codebook:
    """k cluster centers in color (3-d) or filter-response (8-d) space."""

    centers: np.ndarray

    @property
    def k(self) -> int:
        return self.centers.shape[0]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i:] = centers[0]
            break
        probs = d2 / total
        centers[i] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = 100,
           tol: float = 1e-6) -> Codebook:
    """Lloyd's algorithm with k-means++ init, seeded and deterministic.

    If there are fewer distinct points than k, k is reduced with a
    warning instead of failing.
    """
    points = np.asarray(points, dtype=np.float64)
    distinct = np.unique(points, axis=0)
    if distinct.shape[0] < k:
        warnings.warn(f"only {distinct.shape[0]} distinct points < k={k}; "
                      f"reducing k", stacklevel=2)
        k = distinct.shape[0]
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    for _ in range(max_iter):
        assign = _nearest(points, centers)
        new_centers = centers.copy()
        for j in range(k):
            sel = points[assign == j]
            if sel.shape[0] > 0:
                new_centers[j] = sel.mean(axis=0)
        shift = float(np.abs(new_centers - centers).max())
        centers = new_centers
        if shift < tol:
            break
    return Codebook(centers=centers)


def _nearest(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)   # argmin ties break to the lowest index


def kmeans_objective(points: np.ndarray, centers: np.ndarray) -> float:
    """Within-cluster sum of squared distances."""
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return float(d2.min(axis=1).sum())


def sample_foreground_pixels(images: list[np.ndarray], masks: list[np.ndarray],
                             n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of foreground RGB values over all images."""
    pools = []
    for img, m in zip(images, masks):
        sel = m > MASK_BIN_THRESHOLD
        pools.append(img[:, sel].T)        # [n_fg, 3]
    allpix = np.concatenate(pools, axis=0)
    if allpix.shape[0] == 0:
        raise DegenerateInputError("no foreground pixels to sample")
    idx = rng.integers(allpix.shape[0], size=n_samples)
    return allpix[idx]


def build_color_codebook(images: list[np.ndarray], masks: list[np.ndarray],
                         n_samples: int = 50000, k: int = 50,
                         seed: int = 0) -> Codebook:
    """Cluster sampled foreground RGB values into k color centers."""
    rng = np.random.default_rng(seed)
    pts = sample_foreground_pixels(images, masks, n_samples, rng)
    return kmeans(pts, k, seed)


# -- MR8 filter bank ---------------------------------------------------

MR8_SUPPORT = 49
MR8_SCALES = ((1.0, 3.0), (2.0, 6.0), (4.0, 12.0))
MR8_ORIENTATIONS = 6
MR8_BLUR_SIGMA = 10.0


def _gauss1d(sigma: float, mean: float, x: np.ndarray, order: int) -> np.ndarray:
    x = x - mean
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    if order == 1:
        g = -g * x / sigma ** 2
    elif order == 2:
        g = g * (x ** 2 - sigma ** 2) / sigma ** 4
    return g


def _oriented_filter(sigma_deriv: float, sigma_elong: float, order: int,
                     theta: float, sup: int) -> np.ndarray:
    half = (sup - 1) // 2
    gy, gx = np.mgrid[-half: half + 1, -half: half + 1].astype(np.float64)
    # rotate so the derivative acts along the filter's short axis
    rx = gx * np.cos(theta) - gy * np.sin(theta)
    ry = gx * np.sin(theta) + gy * np.cos(theta)
    f = _gauss1d(sigma_elong, 0.0, rx, 0) * _gauss1d(sigma_deriv, 0.0, ry, order)
    f -= f.mean()                      # zero mean
    f /= np.abs(f).sum()               # L1 normalized
    return f


def _gaussian_kernel(sigma: float, sup: int) -> np.ndarray:
    half = (sup - 1) // 2
    gy, gx = np.mgrid[-half: half + 1, -half: half + 1].astype(np.float64)
    g = np.exp(-(gx ** 2 + gy ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()                 # all-positive, L1 normalized


def _log_kernel(sigma: float, sup: int) -> np.ndarray:
    half = (sup - 1) // 2
    gy, gx = np.mgrid[-half: half + 1, -half: half + 1].astype(np.float64)
    r2 = gx ** 2 + gy ** 2
    f = (r2 - 2.0 * sigma ** 2) / sigma ** 4 * np.exp(-r2 / (2.0 * sigma ** 2))
    f -= f.mean()
    f /= np.abs(f).sum()
    return f


class Mr8Bank:
    """38 fixed kernels reduced to 8 responses.

    36 oriented kernels (edge + bar at 3 scales x 6 orientations), plus a
    Gaussian and a Laplacian-of-Gaussian.  Responses take the max over
    orientations per (type, scale); channel order is
    [edge s1..s3, bar s1..s3, Gaussian, LoG].
    """

    def __init__(self, support: int = MR8_SUPPORT):
        self.support = support
        thetas = [np.pi * t / MR8_ORIENTATIONS for t in range(MR8_ORIENTATIONS)]
        self.edge = [[_oriented_filter(sd, se, 1, th, support)
                      for th in thetas] for sd, se in MR8_SCALES]
        self.bar = [[_oriented_filter(sd, se, 2, th, support)
                     for th in thetas] for sd, se in MR8_SCALES]
        self.gaussian = _gaussian_kernel(MR8_BLUR_SIGMA, support)
        self.log = _log_kernel(MR8_BLUR_SIGMA, support)

    @property
    def num_kernels(self) -> int:
        return 2 * len(MR8_SCALES) * MR8_ORIENTATIONS + 2

    def responses(self, gray: np.ndarray) -> np.ndarray:
        """Valid-mode filtering of an [H, W] grayscale image -> [8, H', W']."""
        gray = np.asarray(gray, dtype=np.float64)
        if gray.ndim != 2:
            raise DimensionError(f"mr8 expects a 2-d image, got shape {gray.shape}")
        h, w = gray.shape
        if h < self.support or w < self.support:
            raise DimensionError(
                f"image {h}x{w} smaller than filter support {self.support}")

        def corr(k):
            return fftconvolve(gray, k[::-1, ::-1], mode="valid")

        out = []
        for group in (self.edge, self.bar):
            for scale_filters in group:
                stack = np.stack([corr(k) for k in scale_filters])
                out.append(stack.max(axis=0))
        out.append(corr(self.gaussian))
        out.append(corr(self.log))
        return np.stack(out)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luma conversion of a [3, H, W] image."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(f"expected [3, H, W], got shape {image.shape}")
    r, g, b = image
    return 0.299 * r + 0.587 * g + 0.114 * b


def build_texton_codebook(images: list[np.ndarray], masks: list[np.ndarray],
                          n_samples: int = 50000, k: int = 50, seed: int = 0,
                          bank: Mr8Bank | None = None) -> Codebook:
    """Cluster sampled 8-d filter responses into k texton centers."""
    bank = bank or Mr8Bank()
    rng = np.random.default_rng(seed)
    pools = []
    off = (bank.support - 1) // 2
    for img, m in zip(images, masks):
        resp = bank.responses(to_grayscale(img))       # [8, H', W']
        mc = m[off: off + resp.shape[1], off: off + resp.shape[2]]
        sel = mc > MASK_BIN_THRESHOLD
        pools.append(resp[:, sel].T)
    allpts = np.concatenate(pools, axis=0)
    if allpts.shape[0] == 0:
        raise DegenerateInputError("no foreground responses to sample")
    idx = rng.integers(allpts.shape[0], size=n_samples)
    return kmeans(allpts[idx], k, seed)


# -- histograms and distances -----------------------------------------

def assign_histogram(features: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Hard nearest-center histogram, L1-normalized to sum 1.

    features: [n, d] foreground-pixel features.  Ties break to the
    lowest center index.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise DegenerateInputError(
            f"need a non-empty [n, d] feature array, got shape {features.shape}")
    if features.shape[1] != codebook.centers.shape[1]:
        raise DimensionError(
            f"feature dim {features.shape[1]} != codebook dim "
            f"{codebook.centers.shape[1]}")
    assign = _nearest(features, codebook.centers)
    counts = np.bincount(assign, minlength=codebook.k).astype(np.float64)
    return counts / counts.sum()


def foreground_features(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """RGB features of pixels whose mask exceeds the binarization threshold."""
    sel = mask > MASK_BIN_THRESHOLD
    if not sel.any():
        raise DegenerateInputError("empty foreground after binarization")
    return image[:, sel].T


def texton_features(image: np.ndarray, mask: np.ndarray,
                    bank: Mr8Bank) -> np.ndarray:
    """8-d MR8 response features of foreground pixels."""
    resp = bank.responses(to_grayscale(image))
    off = (bank.support - 1) // 2
    mc = mask[off: off + resp.shape[1], off: off + resp.shape[2]]
    sel = mc > MASK_BIN_THRESHOLD
    if not sel.any():
        raise DegenerateInputError("empty foreground in the valid response region")
    return resp[:, sel].T


def chi2_distance(h1: np.ndarray, h2: np.ndarray) -> float:
    """0.5 * sum (h1 - h2)^2 / (h1 + h2); in [0, 1] for normalized input.

    Bins whose combined mass is below CHI2_EPS contribute zero, keeping
    the populated-bin terms exact instead of epsilon-shifted.
    """
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise DimensionError(f"histogram length mismatch: {h1.shape} vs {h2.shape}")
    denom = h1 + h2
    safe = np.where(denom > CHI2_EPS, denom, 1.0)
    terms = np.where(denom > CHI2_EPS, (h1 - h2) ** 2 / safe, 0.0)
    return float(0.5 * terms.sum())


# -- shape disentanglement (IoU) and resistivity ----------------------

@dataclass
class IouScore:
    mean: float
    std: float
    degenerate_splits: int


def std_change_mask(stack: np.ndarray, threshold: float) -> np.ndarray:
    """Binarize the per-pixel std of an image stack [n, 3, H, W].

    Std is taken per channel across the stack, averaged over channels,
    then thresholded.
    """
    std = stack.std(axis=0).mean(axis=0)
    return std > threshold


def shape_iou_score(render_fn, x: int, appearance_set: list[int],
                    threshold: float = 0.2, n_splits: int = 10,
                    seed: int = 0) -> IouScore:
    """IoU between change-region masks of two random appearance splits.

    render_fn(x, y) must return a [3, H, W] image; pose and background
    are held fixed by the caller.  Both masks empty counts as IoU 1.0 and
    is reported as a degenerate split.
    """
    if len(appearance_set) < 4:
        raise DegenerateInputError(
            f"need at least 4 appearance codes, got {len(appearance_set)}")
    rng = np.random.default_rng(seed)
    images = {y: np.asarray(render_fn(x, y)) for y in appearance_set}
    ious, degenerate = [], 0
    for _ in range(n_splits):
        perm = rng.permutation(appearance_set)
        half = len(perm) // 2
        s1, s2 = perm[:half], perm[half:]
        m1 = std_change_mask(np.stack([images[y] for y in s1]), threshold)
        m2 = std_change_mask(np.stack([images[y] for y in s2]), threshold)
        union = np.logical_or(m1, m2).sum()
        if union == 0:
            ious.append(1.0)
            degenerate += 1
        else:
            ious.append(float(np.logical_and(m1, m2).sum() / union))
    arr = np.asarray(ious)
    return IouScore(mean=float(arr.mean()), std=float(arr.std()),
                    degenerate_splits=degenerate)


RESISTIVITY_BINS = 64
RESISTIVITY_RANGE = (0.0, 0.5)


@dataclass
class ResistivityReport:
    heatmaps: dict[int, np.ndarray]     # per shape code: [H, W] std heatmap
    histogram: np.ndarray               # counts over 64 bins in [0, 0.5]
    bin_edges: np.ndarray


def resistivity_report(render_fn, shape_codes: list[int],
                       appearance_codes: list[int]) -> ResistivityReport:
    """Per-shape std heatmap over appearance sweeps, plus a global
    histogram of all heatmap values."""
    if len(appearance_codes) < 2:
        raise DegenerateInputError("need at least 2 appearance codes")
    heatmaps = {}
    values = []
    for x in shape_codes:
        stack = np.stack([np.asarray(render_fn(x, y)) for y in appearance_codes])
        heat = stack.std(axis=0).mean(axis=0)
        heatmaps[x] = heat
        values.append(heat.reshape(-1))
    allvals = np.concatenate(values)
    counts, edges = np.histogram(np.clip(allvals, *RESISTIVITY_RANGE),
                                 bins=RESISTIVITY_BINS, range=RESISTIVITY_RANGE)
    return ResistivityReport(heatmaps=heatmaps, histogram=counts, bin_edges=edges)
