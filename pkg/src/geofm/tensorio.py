"""Named-tensor archive: the single on-disk tensor format used everywhere.

Layout:
  - 8 bytes: unsigned little-endian length N of the header
  - N bytes: UTF-8 JSON object mapping tensor names to
    {"dtype": tag, "shape": [...], "offsets": [begin, end]}
    plus an optional reserved "__metadata__" entry (str -> str)
  - raw tensor payload: little-endian, IEEE-754 for floats, row-major,
    offsets relative to the end of the header

Checkpoints, adapter dumps, dataset samples, and projection scores all go
through this module, so independently produced files stay interchangeable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import CheckpointError

METADATA_KEY = "__metadata__"
DEFAULT_EXTENSION = ".nta"

_DTYPE_TAGS: dict[str, np.dtype] = {
    "f16": np.dtype("<f2"),
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
    "i8": np.dtype("<i1"),
    "i16": np.dtype("<i2"),
    "i32": np.dtype("<i4"),
    "i64": np.dtype("<i8"),
    "u8": np.dtype("<u1"),
    "bool": np.dtype("?"),
}
_TAG_FOR_KIND = {np.dtype(d).str.lstrip("<>|="): tag for tag, d in _DTYPE_TAGS.items()}


@dataclass(frozen=True)
class TensorInfo:
    dtype: str
    shape: tuple[int, ...]
    offsets: tuple[int, int]

    @property
    def nbytes(self) -> int:
        return self.offsets[1] - self.offsets[0]


def _dtype_tag(array: np.ndarray) -> str:
    kind = array.dtype.str.lstrip("<>|=")
    tag = _TAG_FOR_KIND.get(kind)
    if tag is None:
        raise CheckpointError(f"unsupported dtype {array.dtype!r} for archive tensor")
    return tag


def write_tensors(
    path: str | Path,
    tensors: Mapping[str, np.ndarray],
    metadata: Mapping[str, str] | None = None,
) -> None:
    """Write *tensors* to *path*, overwriting any existing file."""
    header: dict[str, object] = {}
    payload: list[bytes] = []
    cursor = 0
    for name in tensors:
        if name == METADATA_KEY:
            raise CheckpointError(f"tensor name {METADATA_KEY!r} is reserved")
        arr = np.asarray(tensors[name])
        if arr.ndim:  # ascontiguousarray would promote 0-d arrays to shape (1,)
            arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        tag = _dtype_tag(arr)
        raw = arr.astype(_DTYPE_TAGS[tag], copy=False).tobytes(order="C")
        header[name] = {
            "dtype": tag,
            "shape": list(arr.shape),
            "offsets": [cursor, cursor + len(raw)],
        }
        payload.append(raw)
        cursor += len(raw)
    if metadata:
        header[METADATA_KEY] = {str(k): str(v) for k, v in metadata.items()}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for raw in payload:
            fh.write(raw)


def read_header(path: str | Path) -> tuple[dict[str, TensorInfo], dict[str, str]]:
    """Read only the header: cheap shape/dtype inspection without payload IO."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            prefix = fh.read(8)
            if len(prefix) != 8:
                raise CheckpointError(f"{path}: truncated archive (no header length)")
            (length,) = struct.unpack("<Q", prefix)
            blob = fh.read(length)
            if len(blob) != length:
                raise CheckpointError(f"{path}: truncated archive header")
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed archive header: {exc}") from exc
    metadata = {str(k): str(v) for k, v in header.pop(METADATA_KEY, {}).items()}
    infos: dict[str, TensorInfo] = {}
    for name, entry in header.items():
        tag = entry.get("dtype")
        if tag not in _DTYPE_TAGS:
            raise CheckpointError(f"{path}: tensor {name!r} has unknown dtype tag {tag!r}")
        shape = tuple(int(s) for s in entry["shape"])
        begin, end = (int(v) for v in entry["offsets"])
        expected = int(np.prod(shape, dtype=np.int64)) * _DTYPE_TAGS[tag].itemsize
        if end - begin != expected:
            raise CheckpointError(
                f"{path}: tensor {name!r} offsets span {end - begin} bytes, "
                f"shape {shape} needs {expected}"
            )
        infos[name] = TensorInfo(dtype=tag, shape=shape, offsets=(begin, end))
    return infos, metadata


def read_tensors(
    path: str | Path, names: Iterable[str] | None = None
) -> dict[str, np.ndarray]:
    """Load tensors by name (all of them when *names* is None)."""
    path = Path(path)
    infos, _ = read_header(path)
    wanted = list(infos) if names is None else list(names)
    data_start = _data_start(path)
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        for name in wanted:
            info = infos.get(name)
            if info is None:
                raise CheckpointError(f"{path}: no tensor named {name!r}")
            fh.seek(data_start + info.offsets[0])
            raw = fh.read(info.nbytes)
            if len(raw) != info.nbytes:
                raise CheckpointError(f"{path}: tensor {name!r} payload truncated")
            out[name] = np.frombuffer(raw, dtype=_DTYPE_TAGS[info.dtype]).reshape(
                info.shape
            ).copy()
    return out


def read_metadata(path: str | Path) -> dict[str, str]:
    return read_header(path)[1]


def open_memmap(path: str | Path, name: str) -> np.memmap:
    """Memory-map one tensor; used to slice large volumes without full reads."""
    path = Path(path)
    infos, _ = read_header(path)
    info = infos.get(name)
    if info is None:
        raise CheckpointError(f"{path}: no tensor named {name!r}")
    offset = _data_start(path) + info.offsets[0]
    return np.memmap(
        path, dtype=_DTYPE_TAGS[info.dtype], mode="r", offset=offset, shape=info.shape
    )


def _data_start(path: Path) -> int:
    with open(path, "rb") as fh:
        (length,) = struct.unpack("<Q", fh.read(8))
    return 8 + length
