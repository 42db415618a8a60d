"""Named-tensor checkpoint container.

An ``.npz`` archive holding one array per parameter name plus a JSON header
(format version and arbitrary config).  Array contents round-trip bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

_HEADER_KEY = "__header__"
_TENSOR_PREFIX = "t."


class CheckpointFormatError(ValueError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray], config: dict) -> None:
    payload = {_TENSOR_PREFIX + name: np.ascontiguousarray(arr) for name, arr in tensors.items()}
    header = json.dumps({"format_version": FORMAT_VERSION, "config": config}, sort_keys=True)
    payload[_HEADER_KEY] = np.array(header)
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with np.load(path, allow_pickle=False) as archive:
        if _HEADER_KEY not in archive:
            raise CheckpointFormatError(f"{path}: missing checkpoint header")
        header = json.loads(str(archive[_HEADER_KEY]))
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(f"{path}: unsupported format version {version}")
        tensors = {
            key[len(_TENSOR_PREFIX):]: archive[key]
            for key in archive.files
            if key.startswith(_TENSOR_PREFIX)
        }
    return tensors, header.get("config", {})
