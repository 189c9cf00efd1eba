"""Binary checkpoint container.

Layout (all little-endian):

    magic   4 bytes  b"MGF1"
    version u32      currently 1
    count   u32      number of sections
    then per section:
        name_len u16, name utf-8 bytes
        dtype    u8   (see _DTYPES)
        ndim     u8
        dims     ndim * u64
        payload  raw array bytes, C order, little-endian

Writes go through a temp file in the same directory followed by an atomic
rename, so a crash never leaves a half-written checkpoint behind.
"""

import os
import struct
import tempfile

import numpy as np

from .errors import CheckpointError

MAGIC = b"MGF1"
VERSION = 1

_DTYPES = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<i8"),
    3: np.dtype("u1"),
    4: np.dtype("<i4"),
}
def _code_for(arr):
    for code, want in _DTYPES.items():
        if arr.dtype.kind == want.kind and arr.dtype.itemsize == want.itemsize:
            return code
    raise CheckpointError(f"unsupported dtype {arr.dtype} for checkpointing")


def write_checkpoint(path, sections):
    """Write name->array sections; returns the byte size written."""
    names = list(sections)
    payload = []
    for name in names:
        arr = np.ascontiguousarray(sections[name])
        code = _code_for(arr)
        arr = arr.astype(_DTYPES[code], copy=False)
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise CheckpointError(f"section name too long: {name[:40]}...")
        head = struct.pack("<H", len(nb)) + nb + struct.pack("<BB", code, arr.ndim)
        head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        payload.append(head + arr.tobytes())
    blob = MAGIC + struct.pack("<II", VERSION, len(names)) + b"".join(payload)

    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return len(blob)


def read_checkpoint(path):
    """Read back a name->array dict; arrays are freshly allocated."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 12:
        raise CheckpointError(f"{path}: truncated header")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 12
    out = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + name_len].decode("utf-8")
            off += name_len
            code, ndim = struct.unpack_from("<BB", blob, off)
            off += 2
            dims = struct.unpack_from(f"<{ndim}Q", blob, off)
            off += 8 * ndim
            if code not in _DTYPES:
                raise CheckpointError(f"{path}: unknown dtype code {code}")
            dt = _DTYPES[code]
            n = int(np.prod(dims)) if ndim else 1
            nbytes = n * dt.itemsize
            if off + nbytes > len(blob):
                raise CheckpointError(f"{path}: truncated payload in section {name!r}")
            out[name] = np.frombuffer(blob, dtype=dt, count=n, offset=off).reshape(dims).copy()
            off += nbytes
        except struct.error as exc:
            raise CheckpointError(f"{path}: truncated section table") from exc
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    return out


def pack_string(s):
    return np.frombuffer(s.encode("utf-8"), dtype=np.uint8).copy()


def unpack_string(arr):
    return arr.tobytes().decode("utf-8")
