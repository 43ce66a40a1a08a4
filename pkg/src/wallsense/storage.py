"""Binary dataset containers and parameter checkpoints.

Both formats are little-endian with a fixed magic + version header, a JSON
manifest, a raw float64 payload, and a trailing CRC32 of everything before it.
Writes go through a temp file and rename, so partial files never appear under
the final name.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

DATASET_MAGIC = b"WSDATASET\x00\x00\x00"   # 12 bytes + uint32 version = 16-byte head
CHECKPOINT_MAGIC = b"WSCKPT\x00\x00"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Malformed or corrupted container file."""


class ChecksumError(ContainerError):
    """Stored CRC32 does not match the file contents."""


@dataclass
class DatasetContainer:
    """Labeled frame batch: payload [n, freq_bins, time_samples], complex or real."""

    class_names: list[str]
    sample_rate: float
    labels: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 3:
            raise ContainerError("payload must be [records x freq_bins x time_samples]")
        if self.labels.shape[0] != self.data.shape[0]:
            raise ContainerError("label count must match record count")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= len(self.class_names)):
            raise ContainerError("label ids must index class_names")

    @property
    def freq_bins(self) -> int:
        return self.data.shape[1]

    @property
    def time_samples(self) -> int:
        return self.data.shape[2]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def header(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "dtype": "complex128" if self.is_complex else "float64",
            "freq_bins": int(self.freq_bins),
            "n_records": int(self.data.shape[0]),
            "sample_rate": float(self.sample_rate),
            "time_samples": int(self.time_samples),
            "version": FORMAT_VERSION,
        }


def _atomic_write(path: str, payload: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_container(container: DatasetContainer, path: str) -> None:
    header_bytes = json.dumps(container.header(), sort_keys=True,
                              separators=(",", ":")).encode()
    parts = [DATASET_MAGIC, struct.pack("<I", FORMAT_VERSION),
             struct.pack("<I", len(header_bytes)), header_bytes]
    dtype = np.complex128 if container.is_complex else np.float64
    for label, frame in zip(container.labels, container.data):
        parts.append(struct.pack("<I", int(label)))
        arr = np.ascontiguousarray(frame, dtype=dtype)
        if container.is_complex:
            # Interleave re/im explicitly so the byte layout is unambiguous.
            arr = np.stack([arr.real, arr.imag], axis=-1)
        parts.append(arr.astype("<f8").tobytes())
    body = b"".join(parts)
    _atomic_write(path, body + struct.pack("<I", zlib.crc32(body)))


def read_container(path: str) -> DatasetContainer:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 24 or blob[:12] != DATASET_MAGIC:
        raise ContainerError(f"{path} is not a dataset container")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise ChecksumError(f"{path}: checksum mismatch; refusing to load")
    version = struct.unpack("<I", blob[12:16])[0]
    if version != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    hlen = struct.unpack("<I", blob[16:20])[0]
    header = json.loads(blob[20:20 + hlen])
    offset = 20 + hlen

    n = header["n_records"]
    fbins, tsamp = header["freq_bins"], header["time_samples"]
    is_complex = header["dtype"] == "complex128"
    per_value = 2 if is_complex else 1
    frame_bytes = fbins * tsamp * per_value * 8
    labels = np.empty(n, dtype=np.int64)
    data = np.empty((n, fbins, tsamp), dtype=np.complex128 if is_complex else np.float64)
    for i in range(n):
        labels[i] = struct.unpack_from("<I", blob, offset)[0]
        offset += 4
        flat = np.frombuffer(blob, dtype="<f8", count=fbins * tsamp * per_value,
                             offset=offset)
        offset += frame_bytes
        if is_complex:
            pairs = flat.reshape(fbins, tsamp, 2)
            data[i] = pairs[..., 0] + 1j * pairs[..., 1]
        else:
            data[i] = flat.reshape(fbins, tsamp)
    if offset != len(blob) - 4:
        raise ContainerError(f"{path}: trailing bytes after records")
    return DatasetContainer(class_names=header["class_names"],
                            sample_rate=header["sample_rate"],
                            labels=labels, data=data)


# ---------------------------------------------------------------------------
# Parameter checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str, named_params: list[tuple[str, np.ndarray]],
                    meta: dict | None = None) -> None:
    """Flat float64 blob plus a JSON manifest of (name, shape, offset, dtype)."""
    manifest = {"params": [], "meta": meta or {}}
    blob_parts = []
    offset = 0
    for name, arr in named_params:
        arr = np.asarray(arr, dtype=np.float64)
        manifest["params"].append({
            "name": name,
            "shape": list(arr.shape),
            "offset": offset,
            "dtype": "float64",
        })
        raw = arr.astype("<f8").tobytes()
        blob_parts.append(raw)
        offset += len(raw)
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join([CHECKPOINT_MAGIC, struct.pack("<I", FORMAT_VERSION),
                     struct.pack("<I", len(mbytes)), mbytes] + blob_parts)
    _atomic_write(path, body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20 or blob[:8] != CHECKPOINT_MAGIC:
        raise ContainerError(f"{path} is not a checkpoint")
    if zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise ChecksumError(f"{path}: checksum mismatch; refusing to load")
    version = struct.unpack("<I", blob[8:12])[0]
    if version != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported checkpoint version {version}")
    mlen = struct.unpack("<I", blob[12:16])[0]
    manifest = json.loads(blob[16:16 + mlen])
    base = 16 + mlen
    params = {}
    for entry in manifest["params"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        flat = np.frombuffer(blob, dtype="<f8", count=count,
                             offset=base + entry["offset"])
        params[entry["name"]] = flat.reshape(entry["shape"]).copy()
    return params, manifest.get("meta", {})


# ---------------------------------------------------------------------------
# JSON sidecars
# ---------------------------------------------------------------------------

def write_json(path: str, obj: dict) -> None:
    _atomic_write(path, (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode())


def read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def config_hash(config_dict: dict) -> str:
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
