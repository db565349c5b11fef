"""Persistence of tensors, checkpoints, ground-truth sidecars and reports.

Binary files share one framing::

    b"C2RECv1"
    uint32  header length, then that many bytes of UTF-8 JSON
    uint32  tensor count
    per tensor:
        uint16 name length, name (UTF-8)
        uint8  rank
        uint32 x rank dims
        row-major little-endian float32 data

All integers are little-endian. JSON reports are written with sorted keys
and a fixed indent so that identical results give identical bytes.
"""

import json
import logging
import struct
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .config import ModelConfig
from .dataset import Vocab
from .exceptions import CcrecCheckpointError
from .model import Parameters, parameter_shapes
from .synthgen import EmissionCounts, GroundTruth

logger = logging.getLogger(__name__)

MAGIC = b"C2RECv1"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


class _Reader:
    """Cursor over a byte buffer that fails loudly on truncation."""

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise CcrecCheckpointError(
                f"Truncated file {self.path}: wanted {n} bytes at offset {self.offset}",
                path=str(self.path),
            )
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def write_tensors(path: PathLike, header: Dict[str, Any], tensors: Dict[str, np.ndarray]) -> Path:
    """Write ``header`` and ``tensors`` in the framing described above."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(struct.pack("<I", len(tensors)))
        for name, array in tensors.items():
            array = np.ascontiguousarray(array, dtype="<f4")
            if not np.all(np.isfinite(array)):
                raise CcrecCheckpointError(f"Tensor '{name}' contains non-finite values", path=str(path))
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<H", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<B", array.ndim))
            f.write(struct.pack(f"<{array.ndim}I", *array.shape))
            f.write(array.tobytes(order="C"))
    logger.debug(f"Wrote {len(tensors)} tensors to {path}")
    return path


def read_tensors(path: PathLike) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Read a file written by :func:`write_tensors`; arrays come back as float64."""
    path = Path(path)
    if not path.exists():
        raise CcrecCheckpointError(f"File not found: {path}", path=str(path))

    reader = _Reader(path.read_bytes(), path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CcrecCheckpointError(f"Bad magic in {path}; not a ccrec tensor file", path=str(path))

    (header_len,) = reader.unpack("<I")
    try:
        header = json.loads(reader.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CcrecCheckpointError(f"Corrupt header in {path}: {e}", path=str(path))

    (count,) = reader.unpack("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(reader.take(4 * size), dtype="<f4")
        tensors[name] = data.reshape(shape).astype(np.float64)

    if reader.offset != len(reader.data):
        raise CcrecCheckpointError(
            f"{len(reader.data) - reader.offset} trailing bytes in {path}",
            path=str(path),
        )
    return header, tensors


def _expect_kind(header: Dict[str, Any], kind: str, path: Path) -> None:
    if header.get("kind") != kind:
        raise CcrecCheckpointError(
            f"{path} holds a '{header.get('kind')}' file, expected '{kind}'",
            path=str(path),
        )
    if header.get("format_version") != FORMAT_VERSION:
        raise CcrecCheckpointError(
            f"Unsupported format version {header.get('format_version')} in {path}",
            path=str(path),
        )


def save_checkpoint(
    path: PathLike,
    params: Parameters,
    model_cfg: ModelConfig,
    vocab: Vocab,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write model parameters together with the config and id vocabularies."""
    header = {
        "kind": "checkpoint",
        "format_version": FORMAT_VERSION,
        "model_config": model_cfg.to_dict(),
        "vocab": vocab.to_dict(),
        "extra": extra or {},
    }
    return write_tensors(path, header, params.as_dict())


def load_checkpoint(path: PathLike) -> Tuple[Parameters, ModelConfig, Vocab]:
    """
    Read a checkpoint and validate every tensor against the stored config.

    Raises:
        CcrecCheckpointError: Bad magic, truncation, wrong kind, missing
            tensors or a shape mismatch
    """
    path = Path(path)
    header, tensors = read_tensors(path)
    _expect_kind(header, "checkpoint", path)
    try:
        model_cfg = ModelConfig.from_dict(header["model_config"])
        vocab = Vocab.from_dict(header["vocab"])
    except (KeyError, TypeError, ValueError) as e:
        raise CcrecCheckpointError(f"Incomplete checkpoint header in {path}: {e}", path=str(path))

    expected = parameter_shapes(vocab.n_users, vocab.n_items, model_cfg)
    missing = sorted(set(expected) - set(tensors))
    unexpected = sorted(set(tensors) - set(expected))
    if missing or unexpected:
        raise CcrecCheckpointError(
            f"Tensor set mismatch in {path}: missing {missing}, unexpected {unexpected}",
            path=str(path),
        )
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != shape:
            raise CcrecCheckpointError(
                f"Tensor '{name}' has shape {tuple(tensors[name].shape)}, config implies {shape}",
                path=str(path),
            )
    return Parameters.from_dict(tensors), model_cfg, vocab


def save_ground_truth(path: PathLike, truth: GroundTruth) -> Path:
    """Write the generator's planted factors as a sidecar to the interactions CSV."""
    header = {
        "kind": "ground_truth",
        "format_version": FORMAT_VERSION,
        "gamma": truth.gamma,
        "vocab": truth.vocab.to_dict(),
        "counts": truth.counts.to_dict(),
    }
    tensors = {"z": truth.z, "delta_off": truth.delta_off, "delta_on": truth.delta_on, "w": truth.w}
    return write_tensors(path, header, tensors)


def load_ground_truth(path: PathLike) -> GroundTruth:
    path = Path(path)
    header, tensors = read_tensors(path)
    _expect_kind(header, "ground_truth", path)
    missing = sorted({"z", "delta_off", "delta_on", "w"} - set(tensors))
    if missing:
        raise CcrecCheckpointError(f"Missing ground-truth tensors {missing} in {path}", path=str(path))

    vocab = Vocab.from_dict(header["vocab"])
    users_f = tensors["z"].shape
    for name in ("delta_off", "delta_on"):
        if tensors[name].shape != users_f:
            raise CcrecCheckpointError(f"'{name}' shape {tensors[name].shape} != z shape {users_f}", path=str(path))
    if tensors["w"].shape[1:] != users_f[1:] or users_f[0] != vocab.n_users or tensors["w"].shape[0] != vocab.n_items:
        raise CcrecCheckpointError(f"Ground-truth shapes disagree with the vocabulary in {path}", path=str(path))

    return GroundTruth(
        z=tensors["z"],
        delta_off=tensors["delta_off"],
        delta_on=tensors["delta_on"],
        w=tensors["w"],
        gamma=float(header["gamma"]),
        vocab=vocab,
        counts=EmissionCounts.from_dict(header.get("counts", {})),
    )


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def write_json(path: PathLike, obj: Any) -> Path:
    """Write ``obj`` as byte-reproducible JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(obj))
        f.write("\n")
    return path


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def append_jsonl(path: PathLike, record: Dict[str, Any]) -> None:
    """Append one record as a single JSON line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True, default=_json_default))
        f.write("\n")


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
