"""
Binary checkpoints for NetworkParams.

Layout (little-endian):
    magic      4 bytes  b"TNNP"
    version    uint16   FORMAT_VERSION
    header_len uint32
    header     JSON     spec fields, parameter version, value and buffer counts
    values     float64 * n_values
    buffers    float64 * n_buffers
"""

import json
import struct
from pathlib import Path

import numpy as np

from tinynn.mlp import MlpSpec, NetworkParams, ShapeError


MAGIC = b"TNNP"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_FLOAT = np.dtype("<f8")


class CheckpointError(Exception):
    """Raised for unreadable, corrupt or truncated checkpoint files."""
    pass


class CheckpointVersionError(CheckpointError):
    pass


def save_params(params: NetworkParams, path: Path) -> Path:
    path = Path(path)
    header = json.dumps(
        {
            "spec": params.spec.to_dict(),
            "version": params.version,
            "n_values": int(params.values.size),
            "n_buffers": int(params.buffers.size),
        },
        sort_keys=True,
    ).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        f.write(header)
        f.write(params.values.astype(_FLOAT).tobytes())
        f.write(params.buffers.astype(_FLOAT).tobytes())
    return path


def load_params(path: Path) -> NetworkParams:
    """Load a checkpoint; the file is validated in full before anything is built."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    data = path.read_bytes()

    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint header")
    magic, version, header_len = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, this build reads version {FORMAT_VERSION}"
        )

    start = _PREFIX.size
    if len(data) < start + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[start:start + header_len].decode("utf-8"))
        spec = MlpSpec.from_dict(header["spec"])
        n_values, n_buffers = int(header["n_values"]), int(header["n_buffers"])
        param_version = int(header["version"])
    except (ValueError, KeyError, TypeError, ShapeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from None

    body = data[start + header_len:]
    expected = (n_values + n_buffers) * _FLOAT.itemsize
    if len(body) != expected:
        raise CheckpointError(f"{path}: payload has {len(body)} bytes, header promises {expected}")

    floats = np.frombuffer(body, dtype=_FLOAT).astype(np.float64)
    try:
        return NetworkParams(
            spec=spec,
            values=floats[:n_values].copy(),
            version=param_version,
            buffers=floats[n_values:].copy(),
        )
    except ShapeError as e:
        raise CheckpointError(f"{path}: {e}") from None
