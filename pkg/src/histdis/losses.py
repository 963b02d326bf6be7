"""NT-Xent contrastive objective and the two asymmetric training steps.

Positive pairs come in two flavors: FILTER pairs share every code but the
pose offset (trains the filter bank), HYBRID pairs share every code but
the shape (trains the generator's appearance parameters).  Negatives are
all other embeddings in the batch, identical for both schemes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, InsufficientDiversityError
from .filterbank import FilterBank, compute_histogram
from .scene import DomainPartition, LatentCode, SceneParams, render, sample_pose
from .tensor import Parameter, Tensor


class PairScheme(enum.Enum):
    FILTER = "filter"
    HYBRID = "hybrid"


@dataclass
class ContrastiveBatch:
    anchors: list[LatentCode]
    positives: list[LatentCode]
    tau: float

    def __post_init__(self):
        if len(self.anchors) != len(self.positives) or not self.anchors:
            raise ConfigError("batch needs N >= 1 anchors with matching positives")
        if self.tau <= 0.0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")


def nt_xent(embeddings: Sequence[Tensor], tau: float,
            symmetric: bool = False) -> Tensor:
    """Temperature-scaled contrastive loss over [anchors; positives].

    l_i = -log( exp(sim(h_i, h_j)/tau) / sum_{k != i} exp(sim(h_i, h_k)/tau) )
    summed over the N anchors (over all 2N embeddings when symmetric=True).
    The log-sum-exp subtracts the row max for stability.
    """
    if tau <= 0.0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    m = len(embeddings)
    if m < 2 or m % 2 != 0:
        raise ConfigError(f"need an even number (2N) of embeddings, got {m}")
    n = m // 2

    sims: dict[tuple[int, int], Tensor] = {}

    def sim(i, k):
        key = (min(i, k), max(i, k))
        if key not in sims:
            sims[key] = T.cosine_similarity(embeddings[key[0]], embeddings[key[1]])
        return sims[key]

    rows = range(m) if symmetric else range(n)
    total = Tensor(0.0)
    for i in rows:
        j = i + n if i < n else i - n
        scaled = [T.scalar_div(sim(i, k), Tensor(tau)) for k in range(m) if k != i]
        shift = max(float(s.data) for s in scaled)
        acc = Tensor(0.0)
        for s in scaled:
            acc = T.add(acc, T.exp(T.add(s, Tensor(-shift))))
        lse = T.add(Tensor(shift), T.log(acc))
        li = T.add(lse, T.mul(Tensor(-1.0), T.scalar_div(sim(i, j), Tensor(tau))))
        total = T.add(total, li)
    return total


def build_batch(scheme: PairScheme, base_codes: Sequence[LatentCode],
                rng: np.random.Generator, partition: DomainPartition,
                tau: float = 0.5) -> ContrastiveBatch:
    """Positive for each anchor: fresh pose (FILTER) or foreign shape (HYBRID).

    HYBRID draws the replacement shape from the other domain when the
    anchor's shape belongs to one; appearance and background are always
    preserved within a pair.
    """
    anchors = list(base_codes)
    positives = []
    for code in anchors:
        if scheme is PairScheme.FILTER:
            z2 = sample_pose(rng)
            while z2 == code.z:
                z2 = sample_pose(rng)
            positives.append(LatentCode(x=code.x, y=code.y, b=code.b, z=z2))
        else:
            if partition.n_x < 2:
                raise InsufficientDiversityError(
                    "HYBRID pairs need at least 2 distinct shape codes")
            pool = partition.x_b if code.x in partition.x_a else partition.x_a
            pool = [x for x in pool if x != code.x] or \
                   [x for x in range(partition.n_x) if x != code.x]
            x2 = int(rng.choice(pool))
            positives.append(LatentCode(x=x2, y=code.y, b=code.b, z=code.z))
    return ContrastiveBatch(anchors=anchors, positives=positives, tau=tau)


def sample_base_codes(n: int, partition: DomainPartition,
                      rng: np.random.Generator) -> list[LatentCode]:
    """In-distribution codes: each y is paired with its parent shape.

    Appearance codes are drawn without replacement while they last, so
    positives in a batch stay mutually distinguishable.
    """
    ys = []
    remaining = n
    while remaining > 0:
        take = min(remaining, partition.n_y)
        ys.extend(int(v) for v in rng.choice(partition.n_y, size=take, replace=False))
        remaining -= take
    return [LatentCode(x=partition.parent_x(y), y=y,
                       b=int(rng.integers(partition.n_b)), z=sample_pose(rng))
            for y in ys]


# -- optimizers --------------------------------------------------------

def clip_gradients(params: Sequence[Parameter], max_norm: float) -> float:
    """Scale all gradients down so their global L2 norm is <= max_norm."""
    norm = float(np.sqrt(sum(float((p.grad ** 2).sum()) for p in params)))
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


class SGD:
    """Plain SGD with momentum (default 0.9) and optional gradient clipping."""

    def __init__(self, params: Sequence[Parameter], lr: float, momentum: float = 0.9,
                 clip: float | None = None):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.clip = clip
        self._vel = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        if self.clip is not None:
            clip_gradients(self.params, self.clip)
        for p, v in zip(self.params, self._vel):
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v


class Adam:
    """Adam with the GAN-style defaults beta1 = 0.5, beta2 = 0.999."""

    def __init__(self, params: Sequence[Parameter], lr: float,
                 betas: tuple[float, float] = (0.5, 0.999), eps: float = 1e-8,
                 clip: float | None = None):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip = clip
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self._t = 0

    def step(self) -> None:
        if self.clip is not None:
            clip_gradients(self.params, self.clip)
        self._t += 1
        for p, m, v in zip(self.params, self._m, self._v):
            m *= self.b1
            m += (1 - self.b1) * p.grad
            v *= self.b2
            v += (1 - self.b2) * p.grad ** 2
            mh = m / (1 - self.b1 ** self._t)
            vh = v / (1 - self.b2 ** self._t)
            p.data -= self.lr * mh / (np.sqrt(vh) + self.eps)


def make_optimizer(kind: str, params: Sequence[Parameter], lr: float,
                   momentum: float = 0.9, clip: float | None = None):
    if kind == "sgd":
        return SGD(params, lr, momentum=momentum, clip=clip)
    if kind == "adam":
        return Adam(params, lr, clip=clip)
    raise ConfigError(f"unknown optimizer {kind!r}, expected 'sgd' or 'adam'")


# -- training steps ----------------------------------------------------

def batch_embeddings(batch: ContrastiveBatch, bank: FilterBank,
                     params: SceneParams, h: int, w: int) -> list[Tensor]:
    """Histograms for [anchors; positives], in order."""
    out = []
    for code in list(batch.anchors) + list(batch.positives):
        ro = render(code, params, h, w)
        out.append(compute_histogram(ro.image, Tensor(ro.mask), bank))
    return out


def step_filter(batch: ContrastiveBatch, bank: FilterBank, params: SceneParams,
                optimizer, h: int, w: int, symmetric: bool = False) -> float:
    """One gradient step on the filter bank only; generator untouched."""
    bank.zero_grad()
    params.zero_grad()
    emb = batch_embeddings(batch, bank, params, h, w)
    loss = nt_xent(emb, batch.tau, symmetric=symmetric)
    loss.backward()
    optimizer.step()
    bank.project()
    return loss.item()


def step_hybrid(batch: ContrastiveBatch, bank: FilterBank, params: SceneParams,
                optimizer, h: int, w: int, symmetric: bool = False) -> float:
    """One gradient step on the generator's appearance parameters only."""
    bank.zero_grad()
    params.zero_grad()
    emb = batch_embeddings(batch, bank, params, h, w)
    loss = nt_xent(emb, batch.tau, symmetric=symmetric)
    loss.backward()
    optimizer.step()
    return loss.item()


@dataclass
class ScheduleConfig:
    steps: int
    batch_size: int = 24
    tau: float = 0.5
    hybrid_every: int = 4
    lr_filter: float = 0.001
    lr_generator: float = 0.05
    optimizer: str = "sgd"
    image_size: int = 64
    symmetric: bool = False
    train_filter: bool = True
    # the filter step runs without momentum and with a clipped gradient:
    # a persistent loss gradient otherwise drives every first-layer kernel
    # to a negative tap sum, ReLU responses die on low-contrast foregrounds,
    # and the histogram collapses to the zero vector
    grad_clip: float = 1.0
    momentum_filter: float = 0.0
    momentum_generator: float = 0.9

    def validate(self) -> None:
        for name in ("steps",):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("batch_size", "hybrid_every", "image_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("tau", "lr_filter", "lr_generator", "grad_clip"):
            if not math.isfinite(getattr(self, name)) or getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("momentum_filter", "momentum_generator"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {getattr(self, name)}")


@dataclass
class LogRow:
    step: int
    scheme: str
    loss: float
    tau: float
    seed: int


def training_schedule(config: ScheduleConfig, bank: FilterBank,
                      params: SceneParams, partition: DomainPartition,
                      rng: np.random.Generator, seed: int,
                      log: list[LogRow] | None = None,
                      start_step: int = 0) -> list[LogRow]:
    """Interleave filter steps every iteration with hybrid steps every
    ``hybrid_every``-th iteration; returns per-step loss rows."""
    config.validate()
    rows = log if log is not None else []
    hw = config.image_size
    opt_f = make_optimizer(config.optimizer, bank.parameters(), config.lr_filter,
                           momentum=config.momentum_filter, clip=config.grad_clip)
    opt_h = make_optimizer(config.optimizer, params.parameters(), config.lr_generator,
                           momentum=config.momentum_generator, clip=config.grad_clip)
    for it in range(start_step, start_step + config.steps):
        base = sample_base_codes(config.batch_size, partition, rng)
        fb = build_batch(PairScheme.FILTER, base, rng, partition, tau=config.tau)
        if config.train_filter:
            loss = step_filter(fb, bank, params, opt_f, hw, hw,
                               symmetric=config.symmetric)
        else:
            emb = batch_embeddings(fb, bank, params, hw, hw)
            loss = nt_xent(emb, config.tau, symmetric=config.symmetric).item()
        rows.append(LogRow(step=it, scheme="filter", loss=loss,
                           tau=config.tau, seed=seed))
        if (it + 1) % config.hybrid_every == 0:
            hb = build_batch(PairScheme.HYBRID, base, rng, partition, tau=config.tau)
            loss = step_hybrid(hb, bank, params, opt_h, hw, hw,
                               symmetric=config.symmetric)
            rows.append(LogRow(step=it, scheme="hybrid", loss=loss,
                               tau=config.tau, seed=seed))
    return rows
