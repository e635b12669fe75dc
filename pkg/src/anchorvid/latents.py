"""Latent matrices, conditioning vectors and splittable random streams.

A video latent is a plain ``(F, d)`` float64 array: ``F`` frames of
``d``-dimensional latent frames. An image latent is the ``F = 1`` case.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

LATENT_MAGIC = b"NVSDLAT1"

# substream ids used by the pipeline stages
ANCHOR = 1
NIVSDS = 2
REGEN = 3
SAMPLE = 4
TRAIN = 5
STUDY = 6
BASELINE = 7


class ShapeError(ValueError):
    pass


class LatentFormatError(ValueError):
    pass


def as_latent(x, name: str = "latent") -> np.ndarray:
    """Validate and return ``x`` as a finite ``(F, d)`` float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name}: expected an (F, d) matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: non-finite entries")
    return a


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "latents") -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


@dataclass(frozen=True, eq=False)
class Conditioning:
    """Opaque conditioning vector, optionally tied to a prior mode label."""

    embedding: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(emb)):
            raise ValueError("conditioning embedding must be finite")
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)

    @property
    def dim(self) -> int:
        return self.embedding.shape[0]


@dataclass(frozen=True)
class RandomStream:
    """Deterministic substream named by ``(master_seed, path)``.

    Streams are pure values. Calling :meth:`generator` twice returns two
    generators that produce the same sequence, and children with distinct
    paths are statistically independent (numpy ``SeedSequence`` spawn keys).
    """

    master_seed: int
    path: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "path", tuple(int(p) for p in self.path))

    def child(self, *path: int) -> "RandomStream":
        return RandomStream(self.master_seed, self.path + tuple(path))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))

    def normal(self, shape) -> np.ndarray:
        return self.generator().standard_normal(shape)


def sample_standard_noise(stream: RandomStream, F: int, d: int) -> np.ndarray:
    if F < 1 or d < 1:
        raise ShapeError(f"noise shape must be positive, got ({F}, {d})")
    return stream.normal((F, d))


def replicate_image(x, F: int) -> np.ndarray:
    """Copy a single-frame latent ``F`` times into a static video."""
    x = as_latent(x, "image")
    if x.shape[0] != 1:
        raise ShapeError(f"expected a single-frame image latent, got {x.shape[0]} frames")
    if F < 1:
        raise ValueError(f"frame count must be >= 1, got {F}")
    return np.repeat(x, F, axis=0)


# -- serialization ---------------------------------------------------------

def latent_to_bytes(v) -> bytes:
    v = as_latent(v)
    F, d = v.shape
    buf = io.BytesIO()
    buf.write(LATENT_MAGIC)
    buf.write(struct.pack("<QQ", F, d))
    buf.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    return buf.getvalue()


def latent_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < 24 or data[:8] != LATENT_MAGIC:
        raise LatentFormatError("not a latent file (bad magic)")
    F, d = struct.unpack("<QQ", data[8:24])
    if F < 1 or d < 1:
        raise LatentFormatError(f"invalid latent dimensions ({F}, {d})")
    payload = data[24:]
    if len(payload) != 8 * F * d:
        raise LatentFormatError(
            f"payload holds {len(payload)} bytes, expected {8 * F * d} for ({F}, {d})")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(F, d)


def write_atomic(path: Union[str, Path], data: Union[bytes, str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    tmp.replace(path)
    return path


def save_latent(path, v) -> Path:
    return write_atomic(path, latent_to_bytes(v))


def load_latent(path) -> np.ndarray:
    return latent_from_bytes(Path(path).read_bytes())


def latent_to_csv(v, header: Optional[Sequence[str]] = None) -> str:
    """One frame per row, comma separated."""
    v = as_latent(v)
    lines = []
    if header is None:
        header = ["frame"] + [f"c{j}" for j in range(v.shape[1])]
    lines.append(",".join(header))
    for f, row in enumerate(v):
        lines.append(",".join([str(f)] + [repr(float(x)) for x in row]))
    return "\n".join(lines) + "\n"
