"""
I/O utilities for ikeda_snn package.

Handles the IDX dataset container, content hashing, JSONL streaming and
hash-keyed binary caches.
"""

import gzip
import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Tuple

import numpy as np


IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
UBYTE_TYPE = 0x08


class IDXFormatError(ValueError):
    """Malformed or inconsistent IDX file."""


def _open(path: Path, mode: str = 'rb'):
    """Open plain or gzip-compressed file (auto-detect by suffix)."""
    if str(path).endswith('.gz'):
        return gzip.open(path, mode)
    return Path(path).open(mode)


def read_idx(path: Path) -> np.ndarray:
    """
    Read an unsigned-byte IDX file.

    Header (big endian): two zero bytes, type code 0x08, dimension count,
    then one 32-bit size per dimension, followed by the data row-major.

    Args:
        path: IDX file (optionally .gz)

    Returns:
        uint8 array with the header's shape

    Raises:
        IDXFormatError: on empty file, bad magic, or size mismatch
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"IDX file not found: {path}")

    with _open(path) as f:
        raw = f.read()

    if len(raw) < 4:
        raise IDXFormatError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")

    zero, type_code, ndim = struct.unpack('>HBB', raw[:4])
    if zero != 0 or type_code != UBYTE_TYPE or ndim == 0:
        magic = struct.unpack('>I', raw[:4])[0]
        raise IDXFormatError(f"{path}: bad magic 0x{magic:08x}")

    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IDXFormatError(f"{path}: truncated header")
    shape = struct.unpack(f'>{ndim}I', raw[4:header_end])

    expected = int(np.prod(shape, dtype=np.int64))
    payload = len(raw) - header_end
    if payload != expected:
        kind = 'truncated' if payload < expected else 'has trailing bytes'
        raise IDXFormatError(f"{path}: {kind} (expected {expected} data bytes, found {payload})")

    return np.frombuffer(raw, dtype=np.uint8, offset=header_end).reshape(shape)


def write_idx(path: Path, array: np.ndarray):
    """
    Write a uint8 array as IDX (gzip if path ends with .gz).

    Args:
        path: Output file
        array: Values in 0..255; 1D for labels, 3D for images
    """
    array = np.asarray(array)
    if array.ndim == 0 or array.ndim > 255:
        raise ValueError(f"cannot store a {array.ndim}-dimensional array as IDX")
    if array.size and (array.min() < 0 or array.max() > 255):
        raise ValueError("IDX ubyte data must lie in 0..255")

    header = struct.pack('>HBB', 0, UBYTE_TYPE, array.ndim) + struct.pack(f'>{array.ndim}I', *array.shape)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _open(path, 'wb') as f:
        f.write(header)
        f.write(np.ascontiguousarray(array, dtype=np.uint8).tobytes())


def load_idx(images_path: Path, labels_path: Optional[Path] = None) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Load an image set and (optionally) its labels.

    Args:
        images_path: IDX image file (magic 0x00000803)
        labels_path: IDX label file (magic 0x00000801)

    Returns:
        (images, labels): images float64 (count, rows*cols) scaled to [0, 1]
        in row-major pixel order; labels int64 in 0..9 or None
    """
    images = read_idx(images_path)
    if images.ndim != 3:
        raise IDXFormatError(f"{images_path}: expected 3D image data (magic 0x{IMAGE_MAGIC:08x}), got {images.ndim}D")

    labels = None
    if labels_path is not None:
        raw_labels = read_idx(labels_path)
        if raw_labels.ndim != 1:
            raise IDXFormatError(f"{labels_path}: expected 1D label data (magic 0x{LABEL_MAGIC:08x})")
        if raw_labels.shape[0] != images.shape[0]:
            raise IDXFormatError(
                f"image/label count mismatch: {images.shape[0]} images, {raw_labels.shape[0]} labels"
            )
        if raw_labels.size and raw_labels.max() > 9:
            raise IDXFormatError(f"{labels_path}: label {raw_labels.max()} outside 0..9")
        labels = raw_labels.astype(np.int64)

    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return flat, labels


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def canonical_json(obj: Any) -> str:
    """Key-sorted, whitespace-free JSON used for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), default=_json_default, allow_nan=True)


def hash_config(obj: Any) -> str:
    """sha256 of the canonical JSON form of obj."""
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()


def hash_file(path: Path, block_size: int = 65536) -> str:
    """SHA-256 hex digest of a file's bytes."""
    hasher = hashlib.sha256()
    with Path(path).open('rb') as f:
        for chunk in iter(lambda: f.read(block_size), b''):
            hasher.update(chunk)
    return hasher.hexdigest()


class JSONLWriter:
    """Streaming JSONL writer with optional gzip compression."""

    def __init__(self, path: Path, compressed: bool = False):
        self.path = Path(path)
        self.compressed = compressed
        self._file = None

        if compressed and not str(path).endswith('.gz'):
            self.path = Path(str(path) + '.gz')

    def __enter__(self):
        if self.compressed:
            self._file = gzip.open(self.path, 'wt', encoding='utf-8')
        else:
            self._file = self.path.open('w', encoding='utf-8')
        return self

    def __exit__(self, *args):
        if self._file:
            self._file.close()

    def write(self, record: Dict[str, Any]):
        """Write a single JSON record."""
        self._file.write(json.dumps(record, default=_json_default) + '\n')


def read_jsonl(path: Path) -> Iterator[Dict[str, Any]]:
    """Records of a JSONL file written by JSONLWriter; blank lines are skipped."""
    path = Path(path)
    opener = gzip.open if path.suffix == '.gz' else open
    with opener(path, 'rt', encoding='utf-8') as f:
        for line in f:
            if line.strip():
                yield json.loads(line)


def save_cache(path: Path, arrays: Dict[str, np.ndarray], key: str, metadata: Optional[Dict[str, Any]] = None):
    """
    Save arrays to a compressed .npz with an embedded cache key.

    Args:
        path: Output .npz path
        arrays: Named arrays
        key: Hash identifying the inputs that produced the arrays
        metadata: Extra JSON-serializable description
    """
    reserved = {'__key__', '__metadata__'} & set(arrays)
    if reserved:
        raise ValueError(f"reserved cache entry names: {sorted(reserved)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path,
        __key__=np.array(key),
        __metadata__=np.array(json.dumps(metadata or {}, default=_json_default)),
        **arrays,
    )


def load_cache(path: Path, expected_key: Optional[str] = None) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Load a cache written by save_cache.

    Raises:
        FileNotFoundError: if the cache does not exist
        ValueError: if expected_key is given and differs from the stored key
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Cache not found: {path}")

    with np.load(path, allow_pickle=False) as data:
        key = str(data['__key__'])
        if expected_key is not None and key != expected_key:
            raise ValueError(f"stale cache {path}: key {key[:12]} does not match {expected_key[:12]}")
        metadata = json.loads(str(data['__metadata__']))
        arrays = {name: data[name] for name in data.files if name not in ('__key__', '__metadata__')}

    return arrays, metadata
