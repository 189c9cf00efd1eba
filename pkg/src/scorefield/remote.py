"""Wire protocol for serving a denoiser over a socket.

Request: little-endian header ``f64 t, i64 cond_id, i32 ndim, i32 dims[ndim]``
followed by the noisy image as raw little-endian f32.  Reply: raw f32 body of
identical shape (no header).  The condition id is resolved against a table
both ends share; id 0 is reserved for the null condition.
"""

import logging
import socket
import struct
import threading

import numpy as np

from .errors import ConfigError
from .guidance import ConditionSet, GuidanceModel

log = logging.getLogger(__name__)

_HEAD = struct.Struct("<dqi")
MAX_NDIM = 8
MAX_BODY_BYTES = 1 << 30


class ConditionTable:
    """Bidirectional map between conditions and wire ids (0 = null)."""

    def __init__(self, conditions=()):
        self._by_id = {0: ConditionSet.null()}
        self._by_cond = {self._key(self._by_id[0]): 0}
        for cond in conditions:
            self.add(cond)

    @staticmethod
    def _key(cond):
        return (cond.text, None if cond.image is None else np.asarray(cond.image).tobytes())

    def add(self, cond):
        key = self._key(cond)
        if key in self._by_cond:
            return self._by_cond[key]
        cid = len(self._by_id)
        self._by_id[cid] = cond
        self._by_cond[key] = cid
        return cid

    def id_of(self, cond):
        key = self._key(cond)
        if key not in self._by_cond:
            raise KeyError("condition not registered with the wire table")
        return self._by_cond[key]

    def cond_of(self, cid):
        if cid not in self._by_id:
            raise KeyError(f"unknown condition id {cid}")
        return self._by_id[cid]


def encode_request(x_t, cond_id, t):
    x = np.ascontiguousarray(x_t, dtype="<f4")
    if x.ndim > MAX_NDIM:
        raise ConfigError(f"array rank {x.ndim} exceeds protocol limit {MAX_NDIM}")
    head = _HEAD.pack(float(t), int(cond_id), x.ndim)
    dims = struct.pack(f"<{x.ndim}i", *x.shape)
    return head + dims + x.tobytes()


def decode_request(buf):
    if len(buf) < _HEAD.size:
        raise ConfigError(f"request shorter than its {_HEAD.size}-byte header")
    t, cond_id, ndim = _HEAD.unpack_from(buf, 0)
    if not 0 <= ndim <= MAX_NDIM:
        raise ConfigError(f"bad rank {ndim} in request header")
    off = _HEAD.size
    if len(buf) < off + 4 * ndim:
        raise ConfigError("request truncated inside the shape prefix")
    dims = struct.unpack_from(f"<{ndim}i", buf, off)
    off += 4 * ndim
    n = int(np.prod(dims)) if ndim else 1
    if len(buf) < off + 4 * n:
        raise ConfigError("request body shorter than its declared shape")
    x = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(dims)
    return x, cond_id, t


def encode_reply(eps_hat):
    return np.ascontiguousarray(eps_hat, dtype="<f4").tobytes()


def decode_reply(buf, shape):
    return np.frombuffer(buf, dtype="<f4").reshape(shape)


def request_size(buf):
    """Total byte length of the request whose prefix is in ``buf``, or None."""
    if len(buf) < _HEAD.size + 4:
        return None
    _, _, ndim = _HEAD.unpack_from(buf, 0)
    if not 0 <= ndim <= MAX_NDIM:
        raise ConfigError(f"bad rank {ndim} in request header")
    need = _HEAD.size + 4 * ndim
    if len(buf) < need:
        return None
    dims = struct.unpack_from(f"<{ndim}i", buf, _HEAD.size)
    if any(d < 0 for d in dims):
        raise ConfigError(f"negative dimension in request header: {dims}")
    n = int(np.prod(dims)) if ndim else 1
    if 4 * n > MAX_BODY_BYTES:
        raise ConfigError("request body exceeds protocol limit")
    return need + 4 * n


def _recv_exact(sock, n):
    chunks = []
    got = 0
    while got < n:
        part = sock.recv(min(1 << 20, n - got))
        if not part:
            raise ConnectionError("peer closed mid-message")
        chunks.append(part)
        got += len(part)
    return b"".join(chunks)


class RemoteGuidanceClient(GuidanceModel):
    """Client-side denoiser: ships x_t over the wire, returns the reply."""

    def __init__(self, address, table, schedule, resolution=None, timeout=30.0):
        self.address = address
        self.table = table
        self.schedule = schedule
        self.resolution = resolution
        self._sock = socket.create_connection(address, timeout=timeout)

    def denoise(self, x_t, cond, t):
        cid = self.table.id_of(cond)
        self._sock.sendall(encode_request(x_t, cid, t))
        body = _recv_exact(self._sock, 4 * int(np.prod(np.shape(x_t))))
        return decode_reply(body, np.shape(x_t)).astype(np.float64)

    def close(self):
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _serve_connection(conn, model, table):
    buf = b""
    while True:
        size = request_size(buf)
        while size is None or len(buf) < size:
            part = conn.recv(1 << 20)
            if not part:
                return
            buf += part
            size = request_size(buf)
        x_t, cid, t = decode_request(buf[:size])
        buf = buf[size:]
        eps_hat = model.denoise(x_t.astype(np.float64), table.cond_of(cid), t)
        conn.sendall(encode_reply(eps_hat))


class GuidanceServer:
    """Threaded single-connection-at-a-time server around a local model."""

    def __init__(self, model, table, host="127.0.0.1", port=0):
        self.model = model
        self.table = table
        self._listener = socket.create_server((host, port))
        self.port = self._listener.getsockname()[1]
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    def start(self):
        self._thread.start()
        return self

    def _run(self):
        self._listener.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            with conn:
                try:
                    _serve_connection(conn, self.model, self.table)
                except (ConnectionError, ConfigError, KeyError) as exc:
                    log.warning("guidance connection dropped: %s", exc)
        self._listener.close()

    def stop(self):
        self._stop.set()
        self._thread.join(timeout=5.0)
        try:
            self._listener.close()
        except OSError:
            pass

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
