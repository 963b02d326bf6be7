"""Differentiable masked feature histograms over a learnable filter bank.

Each layer convolves, applies ReLU, multiplies the responses by the mask
(average-pooled to the layer's resolution), sums per channel, and divides
by the mask sum.  Per-layer vectors are concatenated into one histogram.
ReLU before masking keeps every entry non-negative, so the vector keeps
its frequency semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, DegenerateInputError, DimensionError
from .tensor import Parameter, Tensor

MIN_MASK_SUM = 1e-6

# The first filter of every layer keeps all taps >= INTENSITY_FLOOR.  Images
# are strictly positive, so that filter's masked response (and hence one
# histogram entry) stays strictly positive for any non-empty mask.  Without
# this floor the contrastive objective can drive every filter's taps negative,
# after which ReLU zeroes the whole histogram on low-contrast foregrounds.
INTENSITY_FLOOR = 1e-2

DEFAULT_WIDTHS = (64, 128, 192)

_SETTINGS = {
    "i": ((1, 1),),
    "ii": ((1, 3),),
    "iii": ((1, 3), (2, 3)),
    "iv": ((1, 3), (2, 3), (3, 3)),
}


@dataclass(frozen=True)
class LayerSpec:
    num_filters: int
    kernel_size: int

    def __post_init__(self):
        if self.num_filters < 1:
            raise ConfigError(f"num_filters must be positive, got {self.num_filters}")
        if self.kernel_size not in (1, 3):
            raise ConfigError(f"kernel_size must be 1 or 3, got {self.kernel_size}")


@dataclass(frozen=True)
class FilterBankConfig:
    """Layer layout of the histogram filter bank.

    Settings: (i) one layer of 1x1 filters, (ii) one layer 3x3,
    (iii) two layers 3x3, (iv) three layers 3x3, with default widths
    64/128/192 for layers 1-3.  ReLU + 2x2 maxpool sit between layers.
    """

    layers: tuple[LayerSpec, ...]
    setting: str = "custom"

    @classmethod
    def from_setting(cls, setting: str,
                     widths: tuple[int, ...] = DEFAULT_WIDTHS) -> "FilterBankConfig":
        if setting not in _SETTINGS:
            raise ConfigError(f"setting must be one of i/ii/iii/iv, got {setting!r}")
        layers = tuple(LayerSpec(widths[depth - 1], ks)
                       for depth, ks in _SETTINGS[setting])
        return cls(layers=layers, setting=setting)

    @property
    def histogram_length(self) -> int:
        return sum(layer.num_filters for layer in self.layers)


@dataclass
class FilterBank:
    """Per-layer learnable convolution kernels."""

    config: FilterBankConfig
    kernels: list[Parameter] = field(default_factory=list)

    def parameters(self) -> list[Parameter]:
        return list(self.kernels)

    def zero_grad(self) -> None:
        for k in self.kernels:
            k.zero_grad()

    def project(self) -> None:
        """Re-impose the intensity-filter constraint after a gradient step."""
        for k in self.kernels:
            np.maximum(k.data[0], INTENSITY_FLOOR, out=k.data[0])


def init_filter_bank(config: FilterBankConfig, seed: int) -> FilterBank:
    """Kernels i.i.d. uniform in [-a, a] with a = sqrt(1 / fan_in); the
    first filter of each layer is folded to positive taps (see
    INTENSITY_FLOOR)."""
    rng = np.random.default_rng(seed)
    kernels = []
    in_ch = 3
    for layer in config.layers:
        ks = layer.kernel_size
        fan_in = in_ch * ks * ks
        a = np.sqrt(1.0 / fan_in)
        kernels.append(Parameter(
            rng.uniform(-a, a, size=(layer.num_filters, in_ch, ks, ks))))
        in_ch = layer.num_filters
    bank = FilterBank(config=config, kernels=kernels)
    for k in bank.kernels:
        np.abs(k.data[0], out=k.data[0])
    bank.project()
    return bank


def mask_downsample(mask: Tensor) -> Tensor:
    """2x2 average pooling of an [H, W] mask; output stays in [0, 1]."""
    if mask.data.ndim != 2:
        raise DimensionError(f"mask_downsample expects a 2-d mask, got shape {mask.shape}")
    return T.avgpool2(mask)


def compute_histogram(image: Tensor, mask: Tensor, bank: FilterBank) -> Tensor:
    """Masked multi-layer feature histogram of an image.

    image: [3, H, W], mask: [H, W] in [0, 1].  Returns a 1-d Tensor whose
    length is the sum of configured layer widths; differentiable with
    respect to image, mask, and kernels.
    """
    if image.data.ndim != 3 or image.data.shape[0] != 3:
        raise DimensionError(f"image must be [3, H, W], got shape {image.shape}")
    if mask.data.shape != image.data.shape[1:]:
        raise DimensionError(
            f"mask shape {mask.shape} does not match image spatial dims "
            f"{image.data.shape[1:]}")
    if float(mask.data.sum()) <= MIN_MASK_SUM:
        raise DegenerateInputError(
            f"mask sum {float(mask.data.sum()):.3e} <= {MIN_MASK_SUM}")

    parts = []
    current = image
    current_mask = mask
    for depth, layer in enumerate(bank.config.layers):
        if depth > 0:
            current = T.maxpool2(current)
            current_mask = mask_downsample(current_mask)
        ks = layer.kernel_size
        h, w = current.data.shape[1:]
        if ks > h or ks > w:
            raise DimensionError(
                f"image too small for layer {depth + 1}: {h}x{w} < kernel {ks}x{ks}")
        responses = T.relu(T.conv2d_valid(current, bank.kernels[depth]))
        # valid conv shrinks the map; crop the mask to the aligned center
        rh, rw = responses.data.shape[1:]
        off = (ks - 1) // 2
        layer_mask = _crop(current_mask, off, rh, rw)
        msum = T.tsum(layer_mask)
        if float(msum.data) <= MIN_MASK_SUM:
            raise DegenerateInputError(
                f"mask sum at layer {depth + 1} fell below {MIN_MASK_SUM}")
        masked = T.mul(responses, _expand_mask(layer_mask))
        parts.append(T.scalar_div(T.channel_sum(masked), msum))
        current = responses
    return T.concat(parts) if len(parts) > 1 else parts[0]


def _expand_mask(mask: Tensor) -> Tensor:
    """View an [H, W] mask as [1, H, W] so it broadcasts over channels."""
    out = Tensor(mask.data[None],
                 _parents=(mask,),
                 _backward=lambda g: mask._accum(g[0]))
    return out


def _crop(mask: Tensor, off: int, h: int, w: int) -> Tensor:
    if off == 0 and mask.data.shape == (h, w):
        return mask
    sl = (slice(off, off + h), slice(off, off + w))
    out = Tensor(mask.data[sl], _parents=(mask,), _backward=None)

    def back(g):
        full = np.zeros_like(mask.data)
        full[sl] = g
        mask._accum(full)

    out._backward = back
    return out
