# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

"""
File-based caching for expensive, deterministic results.

Cache entries are addressed by the SHA-256 digest of a typed encoding of the
key (strings, bytes, numbers, lists, dicts and numpy arrays are supported), so
any change to a model constant, grid, draw count or seed produces a new entry.
Files live in a two-level directory layout under the cache root and are
written atomically (temporary file + rename).

Values are serialized as ``.npz`` archives of named arrays by default; pass
``json_serializer``/``json_deserializer`` for plain JSON values.

Example:
    >>> from ssdeconv.cache import file_cache_value
    >>> table = file_cache_value(
    ...     {"model": "O1", "draws": 1_000_000, "seed": 0},
    ...     lambda: {"grid": grid, "values": values},
    ...     scope="truth",
    ... )
"""

import hashlib
import json
import os
import struct
from io import BytesIO, TextIOWrapper
from pathlib import Path
from typing import IO, Any, Callable, Iterator

import numpy as np
from platformdirs import user_cache_path

from .utils import atomic_write_bytes, logger

CACHE_DIR_ENV = "SSDECONV_CACHE_DIR"


def file_cache_get(
    key: Any,
    *,
    scope: str | None = None,
    cache_root: str | Path | None = None,
    deserializer: Callable[[IO[bytes]], Any] | None = None,
) -> Any | None:
    """
    Retrieve a cached value.

    Args:
        key: The cache key. Any value accepted by ``sha256_hexdigest``.
        scope: Optional namespace; equal keys in different scopes do not collide.
        cache_root: Optional cache directory. Defaults to ``$SSDECONV_CACHE_DIR``
            or the per-user cache directory.
        deserializer: Reads the value from a binary file object. Defaults to
            ``npz_deserializer``.

    Returns:
        The cached value, or None if the entry is missing or unreadable.
    """
    cache_path = _cache_path(key, scope, cache_root)
    if deserializer is None:
        deserializer = npz_deserializer
    if not cache_path.exists():
        return None
    try:
        with open(cache_path, "rb") as file:
            return deserializer(BytesIO(file.read()))
    except Exception:
        logger.debug("Cache read failed for %s", cache_path.name, exc_info=True)
        return None


def file_cache_set(
    key: Any,
    value: Any,
    *,
    scope: str | None = None,
    cache_root: str | Path | None = None,
    serializer: Callable[[Any, IO[bytes]], None] | None = None,
):
    """
    Store a value in the cache, replacing any previous entry for the key.

    Raises:
        OSError: If the cache directory cannot be created or written.
    """
    cache_path = _cache_path(key, scope, cache_root)
    if serializer is None:
        serializer = npz_serializer
    buffer = BytesIO()
    serializer(value, buffer)
    atomic_write_bytes(cache_path, buffer.getvalue())


def file_cache_value(
    key: Any,
    value_func: Callable[[], Any],
    *,
    scope: str | None = None,
    cache_root: str | Path | None = None,
    serializer: Callable[[Any, IO[bytes]], None] | None = None,
    deserializer: Callable[[IO[bytes]], Any] | None = None,
    callback: Callable[[Path], None] | None = None,
):
    """
    Read-through helper: return the cached value for ``key`` or compute,
    store and return ``value_func()``.

    A failure to write the entry is logged and otherwise ignored; ``callback``
    receives the cache file path on a hit.
    """
    cache_path = _cache_path(key, scope, cache_root)
    if serializer is None:
        serializer = npz_serializer
    if deserializer is None:
        deserializer = npz_deserializer

    if cache_path.exists():
        try:
            with open(cache_path, "rb") as file:
                result = deserializer(BytesIO(file.read()))
            if callback is not None:
                callback(cache_path)
            return result
        except Exception:
            # Unreadable entry; recompute it.
            logger.debug("Cache read failed for %s", cache_path.name, exc_info=True)

    value = value_func()

    try:
        buffer = BytesIO()
        serializer(value, buffer)
        atomic_write_bytes(cache_path, buffer.getvalue())
    except Exception:
        logger.debug("Cache write failed for %s", cache_path.name, exc_info=True)

    return value


def resolve_cache_root(cache_root: str | Path | None = None) -> Path:
    if cache_root is None:
        cache_root = os.environ.get(CACHE_DIR_ENV) or None
    if cache_root is None:
        return (user_cache_path("ssdeconv") / "cache").resolve()
    return Path(cache_root).resolve()


def _cache_path(key: Any, scope: str | None, cache_root: str | Path | None) -> Path:
    digest = sha256_hexdigest(key, scope)
    return resolve_cache_root(cache_root) / digest[:2] / digest


def _key_chunks(value: Any) -> Iterator[bytes]:
    """Typed, length-prefixed encoding of a cache key.

    Keys are experiment configs, model dicts and lattice arrays, so only JSON
    scalars, sequences, string-keyed dicts and numpy arrays are accepted.
    Numpy scalars encode like the Python scalar they hold; floats are exact.
    """
    if isinstance(value, np.generic):
        value = value.item()
    if value is None:
        yield b"N"
    elif isinstance(value, bool):
        yield b"T" if value else b"F"
    elif isinstance(value, int):
        yield _tagged(b"i", str(value).encode("ascii"))
    elif isinstance(value, float):
        yield _tagged(b"f", value.hex().encode("ascii"))
    elif isinstance(value, str):
        yield _tagged(b"s", value.encode("utf-8"))
    elif isinstance(value, bytes):
        yield _tagged(b"b", value)
    elif isinstance(value, np.ndarray):
        array = np.ascontiguousarray(value)
        header = f"{array.dtype.str}{list(array.shape)}".encode("ascii")
        yield _tagged(b"a", header)
        yield _tagged(b"", array.tobytes())
    elif isinstance(value, (list, tuple)):
        yield b"l" + struct.pack("<Q", len(value))
        for item in value:
            yield from _key_chunks(item)
    elif isinstance(value, dict):
        if not all(isinstance(k, str) for k in value):
            raise TypeError("cache key dicts must have string keys")
        yield b"d" + struct.pack("<Q", len(value))
        for k in sorted(value):
            yield _tagged(b"s", k.encode("utf-8"))
            yield from _key_chunks(value[k])
    else:
        raise TypeError(f"cannot use a {type(value).__name__} in a cache key")


def _tagged(tag: bytes, data: bytes) -> bytes:
    return tag + struct.pack("<Q", len(data)) + data


def sha256_hexdigest(value: Any, scope: str | None = None) -> str:
    h = hashlib.sha256()
    for chunk in _key_chunks([scope, value]):
        h.update(chunk)
    return h.hexdigest()


def npz_serializer(value: dict[str, np.ndarray], fd: IO[bytes]) -> None:
    np.savez(fd, **{k: np.asarray(v) for k, v in value.items()})


def npz_deserializer(fd: IO[bytes]) -> dict[str, np.ndarray]:
    with np.load(fd, allow_pickle=False) as data:
        return {k: data[k] for k in data.files}


def json_serializer(value: Any, fd: IO[bytes]) -> None:
    text_fd = TextIOWrapper(fd, encoding="utf-8")
    json.dump(value, text_fd)
    text_fd.detach()


def json_deserializer(fd: IO[bytes]) -> Any:
    text_fd = TextIOWrapper(fd, encoding="utf-8")
    result = json.load(text_fd)
    text_fd.detach()
    return result
