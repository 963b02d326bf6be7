"""Analytic, differentiable toy scene generator.

Stands in for a learned generator: a soft superellipse silhouette
(controlled by the shape code and pose offset) composited over a flat
background, with a two-color sinusoidal stripe texture inside.  The
texture lives in object-centered coordinates, so translating the pose
moves pattern and silhouette together.

Appearance parameters are trainable and conditioned on (appearance code,
shape domain): an untrained model renders the same appearance code
differently on the two shape domains, which is exactly the inconsistency
the hybrid loss is meant to remove.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .tensor import Parameter, Tensor

MASK_SHARPNESS = 20.0
POSE_RANGE = 0.2


@dataclass(frozen=True)
class LatentCode:
    """(shape index, appearance index, background index, 2-d pose offset)."""

    x: int
    y: int
    b: int
    z: tuple[float, float]


@dataclass(frozen=True)
class DomainPartition:
    """Split of shape/appearance indices into two domains A and B."""

    n_x: int
    n_y: int
    n_b: int
    x_a: tuple[int, ...]
    x_b: tuple[int, ...]
    y_a: tuple[int, ...]
    y_b: tuple[int, ...]

    def parent_x(self, y: int) -> int:
        """Owner shape of an appearance code under the hierarchy constraint."""
        return y // (self.n_y // self.n_x)

    def domain_of_x(self, x: int) -> int:
        return 0 if x in self.x_a else 1

    def domain_of_y(self, y: int) -> int:
        return self.domain_of_x(self.parent_x(y))

    def is_hybrid(self, x: int, y: int) -> bool:
        return self.domain_of_x(x) != self.domain_of_y(y)


@dataclass(frozen=True)
class ToyDatasetSpec:
    n_x: int = 4
    n_y: int = 8
    n_b: int = 2


def make_two_domain_dataset(spec: ToyDatasetSpec) -> DomainPartition:
    """Domain A = rounded shapes, domain B = boxy shapes, each owning
    an equal share of appearance codes through the hierarchy."""
    if spec.n_x < 2 or spec.n_y < 2:
        raise ConfigError(f"need n_x >= 2 and n_y >= 2, got {spec.n_x}, {spec.n_y}")
    if spec.n_x >= spec.n_y:
        raise ConfigError(f"hierarchy requires n_x < n_y, got n_x={spec.n_x}, n_y={spec.n_y}")
    if spec.n_y % spec.n_x != 0:
        raise ConfigError(f"n_y={spec.n_y} not divisible by n_x={spec.n_x}")
    half_x = spec.n_x // 2
    x_a = tuple(range(half_x))
    x_b = tuple(range(half_x, spec.n_x))
    per_x = spec.n_y // spec.n_x
    y_a = tuple(y for x in x_a for y in range(x * per_x, (x + 1) * per_x))
    y_b = tuple(y for x in x_b for y in range(x * per_x, (x + 1) * per_x))
    return DomainPartition(n_x=spec.n_x, n_y=spec.n_y, n_b=spec.n_b,
                           x_a=x_a, x_b=x_b, y_a=y_a, y_b=y_b)


class SceneParams:
    """Trainable appearance and fixed shape/background parameters.

    Appearance tensors have shape [N_y, 2, ...]: axis 1 indexes the shape
    domain the code is rendered on.  Colors pass through a sigmoid before
    rendering so they stay in [0, 1].
    """

    def __init__(self, partition: DomainPartition, seed: int):
        self.partition = partition
        rng = np.random.default_rng(seed)
        n_y = partition.n_y
        # wide logit range: rendered colors sit near 0 or 1, so appearance
        # sweeps move pixels by well over the 0.2 change-mask threshold
        self.color_a = Parameter(rng.uniform(-4.0, 4.0, size=(n_y, 2, 3)))
        self.color_b = Parameter(rng.uniform(-4.0, 4.0, size=(n_y, 2, 3)))
        self.stripe_freq = Parameter(rng.uniform(1.5, 4.0, size=(n_y, 2)))
        self.stripe_angle = Parameter(rng.uniform(0.0, np.pi, size=(n_y, 2)))
        # shape: superellipse exponent + aspect ratio, fixed per x code
        n_x = partition.n_x
        self.shape_exponent = np.empty(n_x)
        self.shape_exponent[list(partition.x_a)] = rng.uniform(1.8, 2.4, size=len(partition.x_a))
        self.shape_exponent[list(partition.x_b)] = rng.uniform(6.0, 10.0, size=len(partition.x_b))
        self.shape_aspect = rng.uniform(0.9, 1.6, size=n_x)
        # fixed background colors, kept away from saturation
        self.background = rng.uniform(0.15, 0.85, size=(partition.n_b, 3))

    def parameters(self) -> list[Parameter]:
        return [self.color_a, self.color_b, self.stripe_freq, self.stripe_angle]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


@dataclass
class RenderOutput:
    image: Tensor          # [3, H, W] in [0, 1]
    mask: np.ndarray       # [H, W] in [0, 1], constant w.r.t. appearance


def _coords(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    v = np.linspace(-1.0, 1.0, h)
    u = np.linspace(-1.0, 1.0, w)
    return np.meshgrid(v, u, indexing="ij")


def render_mask(code: LatentCode, params: SceneParams, h: int, w: int) -> np.ndarray:
    """Soft superellipse silhouette; depends only on (x, z)."""
    vv, uu = _coords(h, w)
    zv, zu = code.z
    n = params.shape_exponent[code.x]
    aspect = params.shape_aspect[code.x]
    a, c = 0.55 * aspect, 0.55 / aspect
    r = (np.abs((uu - zu) / a) ** n + np.abs((vv - zv) / c) ** n)
    arg = np.clip(MASK_SHARPNESS * (1.0 - r), -60.0, 60.0)
    return 1.0 / (1.0 + np.exp(-arg))


def _pick(param: Parameter, y: int, d: int) -> Tensor:
    """Differentiable slice param[y, d] of an appearance parameter."""
    sl = (y, d)
    out = Tensor(param.data[sl], _parents=(param,), _backward=None)

    def back(g):
        full = np.zeros_like(param.data)
        full[sl] = g
        param._accum(full)

    out._backward = back
    return out


def render(code: LatentCode, params: SceneParams, h: int, w: int) -> RenderOutput:
    """I = mask * foreground + (1 - mask) * background, exactly.

    Differentiable with respect to the appearance parameters of
    (code.y, domain of code.x); mask, shape, and background are constants.
    """
    if h < 32 or w < 32:
        raise ConfigError(f"render needs H, W >= 32, got {h}x{w}")
    part = params.partition
    if not (0 <= code.x < part.n_x and 0 <= code.y < part.n_y and 0 <= code.b < part.n_b):
        raise ConfigError(f"latent code out of range: {code}")
    mask = render_mask(code, params, h, w)
    d = part.domain_of_x(code.x)

    vv, uu = _coords(h, w)
    zv, zu = code.z
    # object-frame coordinates: texture translates with the silhouette
    uo = Tensor(uu - zu)
    vo = Tensor(vv - zv)

    freq = _pick(params.stripe_freq, code.y, d)
    ang = _pick(params.stripe_angle, code.y, d)
    phase = T.mul(freq, T.add(T.mul(T.cos(ang), uo), T.mul(T.sin(ang), vo)))
    t = T.mul(Tensor(0.5), T.add(Tensor(1.0), T.sin(T.mul(Tensor(np.pi), phase))))

    c1 = T.sigmoid(_pick(params.color_a, code.y, d))   # [3]
    c2 = T.sigmoid(_pick(params.color_b, code.y, d))   # [3]
    t3 = _spread(t)                                     # [1, H, W]
    fg = T.add(T.mul(_as_chan(c1), t3),
               T.mul(_as_chan(c2), T.add(Tensor(1.0), T.mul(Tensor(-1.0), t3))))

    bg = params.background[code.b][:, None, None] * np.ones((3, h, w))
    m3 = Tensor(mask[None])
    image = T.add(T.mul(fg, m3), Tensor((1.0 - mask[None]) * bg))
    return RenderOutput(image=image, mask=mask)


def _spread(t: Tensor) -> Tensor:
    """View [H, W] as [1, H, W]."""
    out = Tensor(t.data[None], _parents=(t,), _backward=lambda g: t._accum(g[0]))
    return out


def _as_chan(c: Tensor) -> Tensor:
    """View a length-3 color vector as [3, 1, 1] for broadcasting."""
    out = Tensor(c.data[:, None, None], _parents=(c,),
                 _backward=lambda g: c._accum(g.sum(axis=(1, 2))))
    return out


def sample_pose(rng: np.random.Generator) -> tuple[float, float]:
    zv, zu = rng.uniform(-POSE_RANGE, POSE_RANGE, size=2)
    return (float(zv), float(zu))
