"""Named random sub-streams derived from one seed."""
from __future__ import annotations

from typing import Dict

import numpy as np
import torch

STREAMS: Dict[str, int] = {"init": 0, "sampling": 1, "perturb": 2, "metrics": 3, "synthetic": 4}


def _stream_id(name: str) -> int:
    if name not in STREAMS:
        raise KeyError(f"unknown random stream: {name}")
    return STREAMS[name]


def numpy_rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_stream_id(name),)))


def stream_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(_stream_id(name),)).generate_state(1, dtype=np.uint64)[0] >> 1)


def torch_generator(seed: int, name: str, device: str | torch.device = "cpu") -> torch.Generator:
    gen = torch.Generator(device=device)
    gen.manual_seed(stream_seed(seed, name))
    return gen
