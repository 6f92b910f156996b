# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

import logging
import os
import secrets
from pathlib import Path

import numpy as np

logger = logging.getLogger("ssdeconv")

THREADS_ENV = "SSDECONV_THREADS"


def apply_logging_config(verbose: bool = False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s: (%(name)s) %(message)s",
    )


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Return the generator for stream ``keys`` under ``seed``.

    Streams are children of ``np.random.SeedSequence(seed)`` addressed by
    their spawn key, so ``rng_for(seed, r)`` is the r-th spawned child and
    distinct key tuples never share state.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(sequence)


def resolve_concurrency(concurrency: int | None = None) -> int:
    """Worker count: explicit value, else $SSDECONV_THREADS, else the CPU count."""
    if concurrency is None:
        value = os.environ.get(THREADS_ENV)
        if value:
            try:
                concurrency = int(value)
            except ValueError:
                raise ValueError(f"{THREADS_ENV} must be an integer, got {value!r}")
        else:
            concurrency = os.cpu_count() or 1
    return max(1, concurrency)


def atomic_write_bytes(path: str | Path, data: bytes):
    """Write ``data`` to ``path`` through a temporary sibling and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.parent / f"{path.name}.tmp-{secrets.token_hex(8)}"
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        tmp.replace(path)
    finally:
        if tmp.exists():
            tmp.unlink()


def atomic_write_text(path: str | Path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def derive_seed(seed: int, *keys: int) -> int:
    """A 32-bit integer seed for the child stream ``keys`` of ``seed``."""
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1)[0])
