"""
Binary checkpoints for hypotheses.

Layout (all integers little-endian):
    8 bytes   magic b"SHGAUGE1"
    4 bytes   version (1)
    4 bytes   length L of the metadata blob
    L bytes   UTF-8 JSON metadata (spec fields, dropout rate)
    ...       for each layer: weights then biases as float64, row-major

Discriminators are training aids and are never written here.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from shiftgauge.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from shiftgauge.exceptions import FormatError
from shiftgauge.models import Hypothesis, Linear, MlpSpec
from shiftgauge.tensor import Tensor

logger = logging.getLogger("shiftgauge")

_HEADER = struct.Struct("<8sII")


def encode_checkpoint(h: Hypothesis) -> bytes:
    """Serialise a hypothesis to checkpoint bytes."""
    meta = json.dumps(
        {"spec": h.spec.to_dict(), "dropout_rate": h.dropout_rate}, sort_keys=True
    ).encode("utf-8")
    parts = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(meta)), meta]
    for layer in h.layers:
        parts.append(layer.weight.data.astype("<f8").tobytes(order="C"))
        parts.append(layer.bias.data.astype("<f8").tobytes(order="C"))
    return b"".join(parts)


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Hypothesis:
    """
    Parse checkpoint bytes back into a hypothesis.

    Raises:
        FormatError: on wrong magic, unsupported version, bad metadata or a
            truncated/oversized payload
    """
    if len(blob) < _HEADER.size:
        raise FormatError(f"{source}: truncated checkpoint header ({len(blob)} bytes)")
    magic, version, meta_len = _HEADER.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{source}: not a checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise FormatError(
            f"{source}: unsupported checkpoint version {version} (this build reads {CHECKPOINT_VERSION})"
        )
    offset = _HEADER.size
    if len(blob) < offset + meta_len:
        raise FormatError(f"{source}: truncated metadata at offset {offset}")
    try:
        meta = json.loads(blob[offset:offset + meta_len].decode("utf-8"))
        spec = MlpSpec.from_dict(meta["spec"])
        dropout_rate = float(meta.get("dropout_rate", 0.0))
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"{source}: unreadable metadata: {e}") from e
    offset += meta_len
    layers = []
    for fan_in, fan_out in spec.layer_dims:
        arrays = []
        for shape in ((fan_in, fan_out), (fan_out,)):
            nbytes = 8 * int(np.prod(shape))
            if len(blob) < offset + nbytes:
                raise FormatError(f"{source}: truncated weights at offset {offset}")
            arrays.append(np.frombuffer(blob, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape))
            offset += nbytes
        layers.append(Linear(Tensor(arrays[0]), Tensor(arrays[1])))
    if offset != len(blob):
        raise FormatError(f"{source}: {len(blob) - offset} trailing bytes after offset {offset}")
    return Hypothesis(spec, layers, dropout_rate)


def save_checkpoint(h: Hypothesis, path: Union[str, Path]) -> Path:
    """Write ``h`` to ``path`` (parent directories are created)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(h))
    logger.debug(f"Checkpoint saved: {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Hypothesis:
    """
    Read a hypothesis written by ``save_checkpoint``.

    Raises:
        FileNotFoundError: if the file does not exist
        FormatError: if the file is not a valid checkpoint
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), str(path))
