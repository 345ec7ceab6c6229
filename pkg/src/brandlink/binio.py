"""Binary artifact container used by every serialized model.

Layout: magic, container version, payload length, SHA-256 of the payload,
then the payload itself.  The payload is a canonical JSON metadata block
followed by raw little-endian array blobs described by that metadata.
Writes are deterministic: identical inputs produce identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BLAF"
CONTAINER_VERSION = 1

_HEADER = struct.Struct("<4sIQ32s")

_ALLOWED_DTYPES = {"<f4", "<f8", "<i4", "<i8"}


class ArtifactError(Exception):
    """Base class for artifact file problems."""


class ArtifactFormatError(ArtifactError):
    """Not an artifact file, or an artifact of the wrong kind."""


class ArtifactVersionError(ArtifactError):
    """Container or kind version not supported by this reader."""


class ArtifactChecksumError(ArtifactError):
    """Payload bytes do not match the stored digest."""


class ArtifactTruncatedError(ArtifactError):
    """File ends before the declared payload does."""


def write_artifact(
    path: str | Path,
    kind: str,
    kind_version: int,
    meta: dict,
    blobs: dict[str, np.ndarray],
) -> None:
    """Write one artifact file.

    Args:
        path: Destination file path.
        kind: Artifact kind tag, e.g. ``"xmc-model"``.
        kind_version: Format version of this kind's payload.
        meta: JSON-serializable metadata (must not contain ``_container``).
        blobs: Named arrays stored after the metadata block.
    """
    directory = []
    chunks = []
    offset = 0
    for name in sorted(blobs):
        array = np.ascontiguousarray(blobs[name])
        dtype = array.dtype.newbyteorder("<").str
        if dtype not in _ALLOWED_DTYPES:
            raise ValueError(f"unsupported blob dtype {array.dtype} for {name!r}")
        raw = array.astype(dtype, copy=False).tobytes()
        directory.append(
            {
                "name": name,
                "dtype": dtype,
                "shape": list(array.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)

    document = {
        "_container": {
            "kind": kind,
            "kind_version": kind_version,
            "blobs": directory,
        },
        "meta": meta,
    }
    meta_bytes = json.dumps(
        document, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    payload = struct.pack("<I", len(meta_bytes)) + meta_bytes + b"".join(chunks)
    digest = hashlib.sha256(payload).digest()
    header = _HEADER.pack(MAGIC, CONTAINER_VERSION, len(payload), digest)
    with open(path, "wb") as handle:
        handle.write(header)
        handle.write(payload)


def read_artifact(
    path: str | Path,
    kind: str,
    kind_version: int,
) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and verify one artifact file.

    Returns:
        The stored metadata and the named blob arrays.

    Raises:
        ArtifactFormatError: Bad magic or mismatched kind.
        ArtifactVersionError: Unsupported container or kind version.
        ArtifactTruncatedError: File shorter than its declared payload.
        ArtifactChecksumError: Payload digest mismatch.
    """
    with open(path, "rb") as handle:
        header = handle.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ArtifactTruncatedError(f"{path}: truncated header")
        magic, container_version, payload_len, digest = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ArtifactFormatError(f"{path}: not an artifact file")
        if container_version != CONTAINER_VERSION:
            raise ArtifactVersionError(
                f"{path}: container version {container_version}, expected {CONTAINER_VERSION}"
            )
        payload = handle.read(payload_len)
        if len(payload) < payload_len or handle.read(1):
            raise ArtifactTruncatedError(f"{path}: payload length mismatch")
    if hashlib.sha256(payload).digest() != digest:
        raise ArtifactChecksumError(f"{path}: payload checksum mismatch")

    (meta_len,) = struct.unpack_from("<I", payload)
    if 4 + meta_len > len(payload):
        raise ArtifactTruncatedError(f"{path}: metadata block overruns payload")
    try:
        document = json.loads(payload[4 : 4 + meta_len].decode("utf-8"))
        container = document["_container"]
        stored_kind = container["kind"]
        stored_version = container["kind_version"]
        directory = container["blobs"]
        meta = document["meta"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ArtifactFormatError(f"{path}: malformed metadata block") from exc
    if stored_kind != kind:
        raise ArtifactFormatError(
            f"{path}: artifact kind {stored_kind!r}, expected {kind!r}"
        )
    if stored_version != kind_version:
        raise ArtifactVersionError(
            f"{path}: {kind} format version {stored_version}, expected {kind_version}"
        )

    body = payload[4 + meta_len :]
    blobs: dict[str, np.ndarray] = {}
    for entry in directory:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(body):
            raise ArtifactTruncatedError(f"{path}: blob {entry['name']!r} overruns payload")
        array = np.frombuffer(body[start : start + nbytes], dtype=entry["dtype"])
        blobs[entry["name"]] = array.reshape(entry["shape"])
    return meta, blobs
