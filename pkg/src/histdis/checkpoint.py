"""Binary checkpoints: magic header, version byte, JSON metadata, then raw
little-endian float64 tensor blobs.  Round-trips are bit-exact."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import CheckpointFormatError
from .filterbank import FilterBank, FilterBankConfig, init_filter_bank
from .scene import SceneParams, ToyDatasetSpec, make_two_domain_dataset
from .tensor import Parameter

MAGIC = b"HDIS"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: RunConfig
    bank: FilterBank
    scene: SceneParams
    step: int
    rng_state: dict

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        named = [(f"bank.layer{i}", k.data) for i, k in enumerate(self.bank.kernels)]
        s = self.scene
        named += [
            ("scene.color_a", s.color_a.data),
            ("scene.color_b", s.color_b.data),
            ("scene.stripe_freq", s.stripe_freq.data),
            ("scene.stripe_angle", s.stripe_angle.data),
            ("scene.shape_exponent", s.shape_exponent),
            ("scene.shape_aspect", s.shape_aspect),
            ("scene.background", s.background),
        ]
        return named


def fresh_state(config: RunConfig) -> Checkpoint:
    """Deterministic initialization; all randomness flows from config.seed
    through named SeedSequence children."""
    root = np.random.SeedSequence(config.seed)
    bank_seed, scene_seed, train_seed = root.spawn(3)
    bank = init_filter_bank(
        FilterBankConfig.from_setting(config.setting, config.filter_widths),
        seed=int(bank_seed.generate_state(1)[0]))
    partition = make_two_domain_dataset(
        ToyDatasetSpec(n_x=config.n_x, n_y=config.n_y, n_b=config.n_b))
    scene = SceneParams(partition, seed=int(scene_seed.generate_state(1)[0]))
    rng = np.random.Generator(np.random.PCG64(train_seed))
    return Checkpoint(config=config, bank=bank, scene=scene, step=0,
                      rng_state=rng.bit_generator.state)


def training_rng(ckpt: Checkpoint) -> np.random.Generator:
    gen = np.random.Generator(np.random.PCG64())
    gen.bit_generator.state = ckpt.rng_state
    return gen


def save(ckpt: Checkpoint, path: str | Path) -> None:
    named = ckpt.tensors()
    header = {
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "rng_state": _jsonable_state(ckpt.rng_state),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in named],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in named:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {raw[:4]!r}")
    if raw[4] != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: unsupported format version {raw[4]} (expected {FORMAT_VERSION})")
    (hlen,) = struct.unpack("<I", raw[5:9])
    header = json.loads(raw[9: 9 + hlen].decode())
    config = RunConfig.from_dict(header["config"])

    ckpt = fresh_state(config)
    ckpt.step = int(header["step"])
    ckpt.rng_state = _state_from_json(header["rng_state"])

    offset = 9 + hlen
    named = dict(_tensor_slots(ckpt))
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        name = entry["name"]
        if name not in named:
            raise CheckpointFormatError(f"{path}: unexpected tensor {name!r}")
        target = named[name]
        if target.shape != shape:
            raise CheckpointFormatError(
                f"{path}: tensor {name!r} shape {shape} != expected {target.shape}")
        target[...] = arr.reshape(shape)
    return ckpt


def _tensor_slots(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    return ckpt.tensors()


def _jsonable_state(state: dict) -> dict:
    def conv(v):
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, (np.integer,)):
            return int(v)
        return v
    return conv(state)


def _state_from_json(state: dict) -> dict:
    return state
