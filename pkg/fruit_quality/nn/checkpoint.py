"""
Binary checkpoint files.

Layout (all integers little-endian):

    magic      4 bytes  b"FQCK"
    version    u32      1 = dense, 2 = sparse
    count      u32      number of tensors
    per tensor:
        name_len u16, name (UTF-8)
        dtype    u8     0 = float32, 1 = float64
        rank     u8
        dims     u32 * rank
        version 1: raw values
        version 2: nnz u32, flat indices u32 * nnz, nonzero values

Both versions load to dense tensors. Tensors keep their insertion order, so a
save -> load -> save cycle reproduces the file byte for byte.
"""

# Standard library imports
import logging
import os
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Tuple, Union

# Third-party imports
import numpy as np

# Local imports
from ..exceptions import CheckpointError, CheckpointVersionError
from ..tensor import FLOAT32, FLOAT64, Tensor
from .init import ParameterSet

logger = logging.getLogger(__name__)

MAGIC = b"FQCK"
DENSE_VERSION = 1
SPARSE_VERSION = 2
SUPPORTED_VERSIONS = (DENSE_VERSION, SPARSE_VERSION)

_DTYPE_CODES = {FLOAT32: 0, FLOAT64: 1}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}

PathLike = Union[str, os.PathLike]


def _encode(params: ParameterSet, version: int) -> bytes:
    chunks = [MAGIC, struct.pack("<II", version, len(params))]
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"Tensor name too long: {name[:40]}...")
        if tensor.dtype not in _DTYPE_CODES:
            raise CheckpointError(f"Unsupported dtype {tensor.dtype} for {name}")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", _DTYPE_CODES[tensor.dtype], tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        values = tensor.data.astype(tensor.dtype.newbyteorder("<"), copy=False).reshape(-1)
        if version == SPARSE_VERSION:
            indices = np.flatnonzero(values).astype("<u4")
            chunks.append(struct.pack("<I", indices.size))
            chunks.append(indices.tobytes())
            chunks.append(values[indices].tobytes())
        else:
            chunks.append(values.tobytes())
    return b"".join(chunks)


def _write(data: bytes, path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_checkpoint(params: ParameterSet, path: PathLike) -> Path:
    """Write a dense (version 1) checkpoint; returns the path written."""
    _write(_encode(params, DENSE_VERSION), path)
    logger.debug(f"Wrote checkpoint with {len(params)} tensors to {path}")
    return Path(path)


def save_sparse_checkpoint(params: ParameterSet, path: PathLike) -> Path:
    """Write a sparse (version 2) checkpoint storing only nonzero entries."""
    _write(_encode(params, SPARSE_VERSION), path)
    logger.debug(f"Wrote sparse checkpoint with {len(params)} tensors to {path}")
    return Path(path)


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CheckpointError(
                f"{self.source}: truncated at byte offset {self.offset} while reading {what} "
                f"({size} bytes needed, {len(self.data) - self.offset} available)"
            )
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Tuple[int, ParameterSet]:
    """
    Parse checkpoint bytes.

    Returns:
        (format version, ordered parameter set of tracked tensors)

    Raises:
        CheckpointError: bad magic, truncation or trailing bytes, naming the byte offset
        CheckpointVersionError: version other than 1 or 2
    """
    reader = _Reader(data, source)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"{source}: bad magic {magic!r} at byte offset 0")
    version_offset = reader.offset
    (version,) = reader.unpack("<I", "version")
    if version not in SUPPORTED_VERSIONS:
        raise CheckpointVersionError(
            f"{source}: unsupported checkpoint version {version} at byte offset {version_offset}"
        )
    (count,) = reader.unpack("<I", "tensor count")

    params: ParameterSet = OrderedDict()
    for index in range(count):
        (name_len,) = reader.unpack("<H", f"name length of tensor {index}")
        name_offset = reader.offset
        try:
            name = reader.take(name_len, f"name of tensor {index}").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(
                f"{source}: invalid UTF-8 tensor name at byte offset {name_offset}"
            ) from exc
        dtype_offset = reader.offset
        code, rank = reader.unpack("<BB", f"dtype and rank of {name}")
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"{source}: unknown dtype code {code} at byte offset {dtype_offset}")
        dtype = _CODE_DTYPES[code]
        shape = reader.unpack(f"<{rank}I", f"shape of {name}") if rank else ()
        size = int(np.prod(shape, dtype=np.int64))
        little = dtype.newbyteorder("<")
        if version == SPARSE_VERSION:
            (nnz,) = reader.unpack("<I", f"nonzero count of {name}")
            if nnz > size:
                raise CheckpointError(
                    f"{source}: nonzero count {nnz} exceeds size {size} of {name} "
                    f"at byte offset {reader.offset - 4}"
                )
            index_offset = reader.offset
            indices = np.frombuffer(reader.take(4 * nnz, f"indices of {name}"), dtype="<u4")
            if nnz and int(indices.max()) >= size:
                raise CheckpointError(
                    f"{source}: index out of range for {name} at byte offset {index_offset}"
                )
            nonzero = np.frombuffer(reader.take(little.itemsize * nnz, f"values of {name}"), little)
            values = np.zeros(size, dtype=dtype)
            values[indices] = nonzero
        else:
            raw = reader.take(little.itemsize * size, f"values of {name}")
            values = np.frombuffer(raw, dtype=little).astype(dtype)
        if name in params:
            raise CheckpointError(f"{source}: duplicate tensor {name} at byte offset {name_offset}")
        params[name] = Tensor(values.reshape(shape), dtype=dtype, requires_grad=True, name=name)

    if reader.offset != len(data):
        raise CheckpointError(
            f"{source}: {len(data) - reader.offset} trailing bytes at byte offset {reader.offset}"
        )
    return version, params


def load_checkpoint(path: PathLike) -> ParameterSet:
    """Read a dense or sparse checkpoint into dense tensors."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"Checkpoint not found: {path}") from exc
    version, params = decode_checkpoint(data, str(path))
    logger.debug(f"Loaded {len(params)} tensors from {path} (version {version})")
    return params
