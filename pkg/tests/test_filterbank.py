"""Masked feature histogram: oracles, invariances, degenerate inputs."""

import numpy as np
import pytest

from histdis import tensor as T
from histdis.errors import ConfigError, DegenerateInputError, DimensionError
from histdis.filterbank import (FilterBank, FilterBankConfig, LayerSpec,
                                compute_histogram, init_filter_bank,
                                mask_downsample)
from histdis.tensor import Parameter, Tensor


def _bank_1x1(weights) -> FilterBank:
    """Setting-(i) style bank with explicit 1x1 kernel weights [C_out, 3]."""
    w = np.asarray(weights, dtype=np.float64)
    cfg = FilterBankConfig(layers=(LayerSpec(w.shape[0], 1),), setting="i")
    return FilterBank(config=cfg, kernels=[Parameter(w[:, :, None, None])])


def test_setting_layouts():
    assert FilterBankConfig.from_setting("i").layers == (LayerSpec(64, 1),)
    assert FilterBankConfig.from_setting("ii").layers == (LayerSpec(64, 3),)
    assert FilterBankConfig.from_setting("iii").layers == (LayerSpec(64, 3),
                                                           LayerSpec(128, 3))
    assert FilterBankConfig.from_setting("iv").layers == (
        LayerSpec(64, 3), LayerSpec(128, 3), LayerSpec(192, 3))
    assert FilterBankConfig.from_setting("iv").histogram_length == 64 + 128 + 192
    with pytest.raises(ConfigError):
        FilterBankConfig.from_setting("v")


def test_init_scale_is_inverse_sqrt_fan_in():
    bank = init_filter_bank(FilterBankConfig.from_setting("ii"), seed=0)
    a = np.sqrt(1.0 / (3 * 3 * 3))
    k = bank.kernels[0].data
    assert np.abs(k).max() <= a
    # uniform on [-a, a] should come close to the bound with 64*27 draws
    assert np.abs(k).max() > 0.9 * a


def test_histogram_oracle_uniform_image():
    """Constant 0.5 image, full mask, single 1x1 filter w = [2, 0, 0]:
    response is 1.0 everywhere, so the histogram entry is exactly 1."""
    bank = _bank_1x1([[2.0, 0.0, 0.0]])
    img = Tensor(np.full((3, 8, 8), 0.5))
    mask = Tensor(np.ones((8, 8)))
    h = compute_histogram(img, mask, bank)
    assert h.data.shape == (1,)
    assert h.data[0] == pytest.approx(1.0, abs=1e-12)


def test_histogram_negative_response_clipped():
    bank = _bank_1x1([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
    img = Tensor(np.full((3, 8, 8), 0.5))
    h = compute_histogram(img, Tensor(np.ones((8, 8))), bank)
    assert h.data[0] == pytest.approx(0.0, abs=1e-12)
    assert h.data[1] == pytest.approx(1.5, abs=1e-12)


def test_histogram_mask_weighting():
    """Half mask selects only the left half of a split image."""
    img = np.zeros((3, 8, 8))
    img[:, :, :4] = 1.0
    mask = np.zeros((8, 8))
    mask[:, :4] = 1.0
    bank = _bank_1x1([[1.0, 0.0, 0.0]])
    h = compute_histogram(Tensor(img), Tensor(mask), bank)
    assert h.data[0] == pytest.approx(1.0, abs=1e-12)


def test_histogram_permutation_invariance_1x1():
    """1x1 responses pool over space, so shuffling pixels inside the mask
    leaves the histogram unchanged."""
    rng = np.random.default_rng(7)
    img = rng.uniform(size=(3, 8, 8))
    bank = _bank_1x1(rng.uniform(-1, 1, size=(4, 3)))
    full = Tensor(np.ones((8, 8)))
    h1 = compute_histogram(Tensor(img), full, bank).data
    perm = rng.permutation(64)
    shuffled = img.reshape(3, -1)[:, perm].reshape(3, 8, 8)
    h2 = compute_histogram(Tensor(shuffled), full, bank).data
    np.testing.assert_allclose(h1, h2, atol=1e-12)


def test_histogram_scale_invariant_to_mask_scaling():
    """Multiplying the whole mask by a constant cancels in the ratio."""
    rng = np.random.default_rng(11)
    img = rng.uniform(size=(3, 8, 8))
    mask = rng.uniform(0.2, 1.0, size=(8, 8))
    bank = _bank_1x1(rng.uniform(-1, 1, size=(2, 3)))
    h1 = compute_histogram(Tensor(img), Tensor(mask), bank).data
    h2 = compute_histogram(Tensor(img), Tensor(0.25 * mask), bank).data
    np.testing.assert_allclose(h1, h2, atol=1e-12)


def test_mask_downsample_checkerboard():
    mask = np.indices((6, 6)).sum(axis=0) % 2 == 0
    out = mask_downsample(Tensor(mask.astype(np.float64)))
    np.testing.assert_allclose(out.data, 0.5, atol=1e-12)


def test_empty_mask_raises():
    bank = _bank_1x1([[1.0, 0.0, 0.0]])
    with pytest.raises(DegenerateInputError):
        compute_histogram(Tensor(np.ones((3, 8, 8))),
                          Tensor(np.zeros((8, 8))), bank)


def test_shape_mismatch_raises():
    bank = _bank_1x1([[1.0, 0.0, 0.0]])
    with pytest.raises(DimensionError):
        compute_histogram(Tensor(np.ones((3, 8, 8))),
                          Tensor(np.ones((4, 4))), bank)
    with pytest.raises(DimensionError):
        compute_histogram(Tensor(np.ones((1, 8, 8))),
                          Tensor(np.ones((8, 8))), bank)


def test_multilayer_length_and_nonnegativity():
    cfg = FilterBankConfig(layers=(LayerSpec(4, 3), LayerSpec(6, 3)),
                           setting="iii")
    bank = init_filter_bank(cfg, seed=2)
    rng = np.random.default_rng(3)
    img = Tensor(rng.uniform(size=(3, 16, 16)))
    h = compute_histogram(img, Tensor(np.ones((16, 16))), bank)
    assert h.data.shape == (10,)
    assert (h.data >= 0.0).all()


def test_histogram_gradient_flows_to_all_inputs():
    cfg = FilterBankConfig(layers=(LayerSpec(2, 3), LayerSpec(3, 3)),
                           setting="iii")
    bank = init_filter_bank(cfg, seed=4)
    rng = np.random.default_rng(5)
    img = Parameter(rng.uniform(size=(3, 12, 12)))
    mask = Parameter(rng.uniform(0.3, 1.0, size=(12, 12)))
    h = compute_histogram(img, mask, bank)
    T.tsum(h).backward()
    assert np.abs(img.grad).sum() > 0
    assert np.abs(mask.grad).sum() > 0
    for k in bank.kernels:
        assert np.abs(k.grad).sum() > 0


def test_image_too_small_for_depth():
    cfg = FilterBankConfig(layers=(LayerSpec(2, 3), LayerSpec(2, 3),
                                   LayerSpec(2, 3)), setting="iv")
    bank = init_filter_bank(cfg, seed=0)
    with pytest.raises(DimensionError):
        compute_histogram(Tensor(np.ones((3, 8, 8))),
                          Tensor(np.ones((8, 8))), bank)
