"""Binary container for TT vectors and matrices.

Layout (all integers unsigned 64-bit little-endian)::

    b"TTN1" | kind (0 vector, 1 matrix) | N | sizes | N+1 ranks | cores

``sizes`` is ``K_1..K_N`` for a vector and ``I_1..I_N, J_1..J_N`` for a
matrix. Each core is stored first-index-fastest as little-endian float64.
"""

import io
import struct

import numpy as np

from .tt import TTMatrix, TTVector

MAGIC = b"TTN1"
_U64 = "<Q"


class ContainerError(ValueError):
    pass


def dumps(T):
    """Serialize a train to bytes (deterministic)."""
    if isinstance(T, TTMatrix):
        kind, sizes = 1, list(T.row_sizes) + list(T.col_sizes)
    elif isinstance(T, TTVector):
        kind, sizes = 0, list(T.mode_sizes)
    else:
        raise TypeError(f"cannot serialize {type(T).__name__}")
    buf = io.BytesIO()
    buf.write(MAGIC)
    header = [kind, T.order] + sizes + list(T.ranks)
    buf.write(struct.pack("<%dQ" % len(header), *header))
    for c in T.cores:
        buf.write(np.asarray(c, dtype="<f8").tobytes(order="F"))
    return buf.getvalue()


def loads(data):
    """Parse bytes produced by :func:`dumps`."""
    data = memoryview(bytes(data))
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise ContainerError("truncated TT container")
        out = data[pos:pos + n]
        pos += n
        return out

    def u64(count):
        return struct.unpack("<%dQ" % count, take(8 * count))

    if bytes(take(4)) != MAGIC:
        raise ContainerError("bad magic; not a TT container")
    kind, N = u64(2)
    if kind not in (0, 1):
        raise ContainerError(f"unknown container kind {kind}")
    if N < 1 or N > 4096:
        raise ContainerError(f"implausible order N={N}")
    sizes = u64(N * (1 + kind))
    ranks = u64(N + 1)
    cores = []
    for n in range(N):
        if kind == 1:
            mid = (sizes[n], sizes[N + n])
        else:
            mid = (sizes[n],)
        shape = (ranks[n],) + mid + (ranks[n + 1],)
        count = int(np.prod(shape))
        raw = np.frombuffer(take(8 * count), dtype="<f8")
        cores.append(raw.reshape(shape, order="F").astype(np.float64))
    if pos != len(data):
        raise ContainerError("trailing bytes after TT container")
    try:
        return (TTMatrix if kind == 1 else TTVector)(cores)
    except ValueError as exc:
        raise ContainerError(str(exc)) from exc


def save(path, T):
    with open(path, "wb") as fh:
        fh.write(dumps(T))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
