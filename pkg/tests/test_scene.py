"""Toy scene generator: compositing, pose invariance, domain partition."""

import numpy as np
import pytest

from histdis import tensor as T
from histdis.errors import ConfigError
from histdis.scene import (LatentCode, SceneParams, ToyDatasetSpec,
                           make_two_domain_dataset, render, render_mask,
                           sample_pose)


@pytest.fixture(scope="module")
def partition():
    return make_two_domain_dataset(ToyDatasetSpec(n_x=4, n_y=8, n_b=2))


@pytest.fixture(scope="module")
def scene(partition):
    return SceneParams(partition, seed=42)


def test_partition_layout(partition):
    assert partition.x_a == (0, 1)
    assert partition.x_b == (2, 3)
    assert partition.y_a == (0, 1, 2, 3)
    assert partition.y_b == (4, 5, 6, 7)
    assert partition.parent_x(5) == 2
    assert partition.domain_of_y(5) == 1
    assert partition.is_hybrid(0, 5)
    assert not partition.is_hybrid(2, 5)


def test_partition_validation():
    with pytest.raises(ConfigError):
        make_two_domain_dataset(ToyDatasetSpec(n_x=8, n_y=8))
    with pytest.raises(ConfigError):
        make_two_domain_dataset(ToyDatasetSpec(n_x=3, n_y=8))
    with pytest.raises(ConfigError):
        make_two_domain_dataset(ToyDatasetSpec(n_x=1, n_y=4))


def test_compositing_identity(scene):
    """I = m * fg + (1 - m) * bg exactly: where m == 0 the image equals
    the background color to 1e-12."""
    code = LatentCode(x=0, y=1, b=0, z=(0.0, 0.0))
    out = render(code, scene, 32, 32)
    bg = scene.background[0]
    zero = out.mask < 1e-9
    assert zero.any()
    for c in range(3):
        np.testing.assert_allclose(out.image.data[c][zero], bg[c], atol=1e-12)


def test_image_in_unit_interval(scene):
    code = LatentCode(x=3, y=6, b=1, z=(0.1, -0.1))
    out = render(code, scene, 32, 32)
    assert out.image.data.min() >= 0.0
    assert out.image.data.max() <= 1.0


def test_mask_depends_only_on_shape_and_pose(scene):
    z = (0.05, -0.02)
    m1 = render(LatentCode(x=1, y=0, b=0, z=z), scene, 32, 32).mask
    m2 = render(LatentCode(x=1, y=3, b=1, z=z), scene, 32, 32).mask
    np.testing.assert_array_equal(m1, m2)


def test_pose_translates_texture_with_mask(scene):
    """Shifting z by exactly one pixel pitch shifts both the mask and the
    foreground texture; the overlap interior must match."""
    h = 64
    pitch = 2.0 / (h - 1)
    c0 = LatentCode(x=0, y=0, b=0, z=(0.0, 0.0))
    c1 = LatentCode(x=0, y=0, b=0, z=(0.0, pitch))
    o0 = render(c0, scene, h, h)
    o1 = render(c1, scene, h, h)
    inner0 = o0.mask > 0.999
    shifted = np.zeros_like(inner0)
    shifted[:, 1:] = inner0[:, :-1]
    common = shifted & (o1.mask > 0.999)
    assert common.sum() > 50
    img0 = o0.image.data[:, :, :-1][:, common[:, 1:]]
    img1 = o1.image.data[:, :, 1:][:, common[:, 1:]]
    np.testing.assert_allclose(img0, img1, atol=1e-9)


def test_boxy_domain_exponents(scene, partition):
    for xa in partition.x_a:
        assert 1.8 <= scene.shape_exponent[xa] <= 2.4
    for xb in partition.x_b:
        assert 6.0 <= scene.shape_exponent[xb] <= 10.0


def test_mask_in_unit_interval(scene):
    m = render_mask(LatentCode(x=2, y=0, b=0, z=(0.1, 0.1)), scene, 48, 48)
    assert m.min() >= 0.0
    assert m.max() <= 1.0
    # the silhouette has both solid interior and empty exterior
    assert (m > 0.99).any()
    assert (m < 0.01).any()


def test_render_differentiable_wrt_appearance(scene):
    code = LatentCode(x=0, y=2, b=0, z=(0.0, 0.0))
    scene.zero_grad()
    out = render(code, scene, 32, 32)
    T.tsum(out.image).backward()
    d = scene.partition.domain_of_x(0)
    assert np.abs(scene.color_a.grad[2, d]).sum() > 0
    assert np.abs(scene.color_b.grad[2, d]).sum() > 0
    # untouched appearance rows receive no gradient
    assert np.abs(scene.color_a.grad[3]).sum() == 0.0
    scene.zero_grad()


def test_render_rejects_small_canvas(scene):
    with pytest.raises(ConfigError):
        render(LatentCode(x=0, y=0, b=0, z=(0.0, 0.0)), scene, 16, 16)


def test_render_rejects_out_of_range_code(scene):
    with pytest.raises(ConfigError):
        render(LatentCode(x=9, y=0, b=0, z=(0.0, 0.0)), scene, 32, 32)


def test_sample_pose_range():
    rng = np.random.default_rng(0)
    for _ in range(100):
        zv, zu = sample_pose(rng)
        assert -0.2 <= zv <= 0.2
        assert -0.2 <= zu <= 0.2


def test_scene_params_deterministic(partition):
    s1 = SceneParams(partition, seed=9)
    s2 = SceneParams(partition, seed=9)
    np.testing.assert_array_equal(s1.color_a.data, s2.color_a.data)
    np.testing.assert_array_equal(s1.shape_exponent, s2.shape_exponent)
