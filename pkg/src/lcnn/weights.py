"""Named parameter store, the LCNW binary format and seeded initialization.

File layout (all integers little-endian)::

    b"LCNW"  u32 version (=1)  u32 array_count
    per array:
        u16 name_len  name (utf-8)  u8 dtype (0 = f32)  u8 rank
        u32 dims[rank]  payload (prod(dims) little-endian f32)
"""

from __future__ import annotations

import math
import struct
from collections.abc import MutableMapping

import numpy as np

from .errors import FormatError, UsageError
from .graph import NetworkConfig, parameter_shapes
from .ssd import head_parameter_shapes

MAGIC = b"LCNW"
VERSION = 1
DTYPE_F32 = 0
_F32 = np.dtype("<f4")


class WeightStore(MutableMapping):
    """Insertion-ordered ``name -> float32 ndarray`` mapping.

    Arrays are copied to little-endian float32 and frozen on insertion, so a
    store can be shared across threads once built.
    """

    def __init__(self, items=()):
        self._arrays: dict[str, np.ndarray] = {}
        for name, arr in dict(items).items():
            self[name] = arr

    def __getitem__(self, name):
        return self._arrays[name]

    def __setitem__(self, name, arr):
        if not isinstance(name, str) or not name:
            raise UsageError("array names must be non-empty strings")
        if len(name.encode("utf-8")) > 0xFFFF:
            raise UsageError(f"array name too long: {name[:40]}...")
        a = np.array(arr, dtype=_F32, copy=True, order="C")
        if a.ndim > 255:
            raise UsageError(f"{name}: rank {a.ndim} exceeds the format limit")
        a.flags.writeable = False
        self._arrays[name] = a

    def __delitem__(self, name):
        del self._arrays[name]

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def __repr__(self):
        return f"WeightStore({len(self)} arrays, {self.num_values()} values)"

    def num_values(self) -> int:
        return sum(a.size for a in self._arrays.values())

    def identical(self, other: "WeightStore") -> bool:
        """Same names in the same order with bit-identical payloads."""
        if list(self) != list(other):
            return False
        return all(
            self[n].shape == other[n].shape and self[n].tobytes() == other[n].tobytes()
            for n in self
        )


def to_bytes(store: WeightStore) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(store))]
    for name, arr in store.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype(_F32, copy=False).tobytes())
    return b"".join(parts)


def save_weights(store: WeightStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(store))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int, what: str):
        if n > len(self.buf) - self.pos:
            raise FormatError(
                f"truncated file: {what} needs {n} bytes, only {len(self.buf) - self.pos} remain",
                self.pos,
            )
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def from_bytes(buf: bytes) -> WeightStore:
    """Parse an LCNW image; nothing is allocated until its length is checked."""
    r = _Reader(buf)
    magic = bytes(r.take(4, "magic"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (count,) = r.unpack("<I", "array count")
    arrays = {}
    for k in range(count):
        start = r.pos
        (name_len,) = r.unpack("<H", f"name length of array #{k}")
        try:
            name = bytes(r.take(name_len, f"name of array #{k}")).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"array #{k} name is not valid UTF-8", start + 2) from None
        if name in arrays:
            raise FormatError(f"duplicate array name {name!r}", start)
        dtype, rank = r.unpack("<BB", f"header of {name!r}")
        if dtype != DTYPE_F32:
            raise FormatError(f"array {name!r}: unknown dtype code {dtype}", r.pos - 2)
        dims = r.unpack(f"<{rank}I", f"dims of {name!r}")
        count_values = math.prod(dims)
        need = count_values * _F32.itemsize
        remaining = len(r.buf) - r.pos
        if need > remaining:
            raise FormatError(
                f"array {name!r} truncated: expected {count_values} values ({need} bytes), "
                f"found {remaining // _F32.itemsize} values ({remaining} bytes)",
                r.pos,
            )
        payload = r.take(need, f"payload of {name!r}")
        arrays[name] = np.frombuffer(payload, dtype=_F32).reshape(dims)
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes after last array", r.pos)
    return WeightStore(arrays)


def load_weights(path) -> WeightStore:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


# -- deterministic initialization ---------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Counter-based SplitMix64 generator, vectorized with numpy.

    The ``i``-th output (0-based) of a generator seeded with ``s`` is
    ``mix(s + (i + 1) * 0x9E3779B97F4A7C15)`` with the usual xor-shift-multiply
    finalizer, all modulo 2**64.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64)
            z = np.uint64(self.state) + steps * _GOLDEN
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * int(_GOLDEN)) & _MASK64
        return z

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in ``[0, 1)`` from the top 53 bits of each draw."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normal(self, n: int) -> np.ndarray:
        """Box-Muller pairs: ``r*cos(t)`` then ``r*sin(t)`` per two uniforms."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        t = 2.0 * np.pi * u[:, 1]
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=1).reshape(-1)[:n]


def fan_in(shape: tuple[int, ...]) -> int:
    """Inputs feeding one output: ``M*k*k`` (conv), ``k*k`` (depthwise), ``M`` (1x1)."""
    return math.prod(shape[1:])


def random_init(config: NetworkConfig, head=None, seed: int = 0) -> WeightStore:
    """He-scaled normal weights (std ``sqrt(2/fan_in)``) and zero biases.

    One generator stream is consumed in array order: backbone layers first,
    then the per-tap detection heads when ``head`` is given.
    """
    shapes = dict(parameter_shapes(config))
    if head is not None:
        shapes.update(head_parameter_shapes(config, head))
    rng = SplitMix64(seed)
    store = WeightStore()
    for name, shape in shapes.items():
        n = math.prod(shape)
        if name.endswith(".bias"):
            store[name] = np.zeros(shape, dtype=np.float32)
            continue
        std = math.sqrt(2.0 / fan_in(shape))
        store[name] = (rng.normal(n) * std).astype(np.float32).reshape(shape)
    return store


def zero_init(config: NetworkConfig, head=None) -> WeightStore:
    """All-zero weights with the full set of arrays; a handy fixture."""
    shapes = dict(parameter_shapes(config))
    if head is not None:
        shapes.update(head_parameter_shapes(config, head))
    return WeightStore({n: np.zeros(s, dtype=np.float32) for n, s in shapes.items()})
