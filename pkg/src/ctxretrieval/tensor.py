"""Dense feature-map tensors, rectangles, images, and the FMAP binary format.

FeatureMap is the currency passed between every stage of the retrieval
pipeline: convolutional forwarding, saliency, attention masking and
descriptor encoding all consume and produce it. The FMAP on-disk layout is
bit-exact so maps can be interchanged with external extractors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1

L2_EPS = 1e-12


class FormatError(Exception):
    """Malformed or truncated binary payload."""


@dataclass(frozen=True)
class Rect:
    """Half-open rectangle [x0, x1) x [y0, y1) in integer grid coordinates."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError(f"empty rect: {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, other: "Rect") -> bool:
        return (self.x0 <= other.x0 and other.x1 <= self.x1
                and self.y0 <= other.y0 and other.y1 <= self.y1)

    def translate(self, dx: int, dy: int) -> "Rect":
        return Rect(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)


@dataclass(frozen=True)
class FeatureMap:
    """W x H x K activation tensor, stored channel-major as (K, H, W).

    All values must be finite. Maps produced by a ReLU carry
    ``rectified=True`` and must be non-negative.
    """

    data: np.ndarray  # shape (K, H, W), float32
    rectified: bool = False

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be 3-D (K,H,W), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"degenerate feature map shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("feature map contains non-finite values")
        if self.rectified and (arr < 0).any():
            raise ValueError("rectified feature map has negative values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def spatial_rect(self) -> Rect:
        return Rect(0, 0, self.width, self.height)

    def value(self, x: int, y: int, k: int) -> float:
        return float(self.data[k, y, x])

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return (self.rectified == other.rectified
                and self.data.shape == other.data.shape
                and np.array_equal(self.data, other.data))


@dataclass(frozen=True)
class Image:
    """RGB image with real values in [0, 1], stored as (H, W, 3) float32."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image must be (H,W,3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("empty image")
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def write_fmap(fmap: FeatureMap, sink) -> None:
    """Serialize a feature map to a binary sink in the FMAP layout.

    Layout: b"FMAP" + version u32 + W u32 + H u32 + K u32 +
    W*H*K float32 values in (k, y, x) slowest-to-fastest order + flags u8
    (bit 0 = rectified). All fields little-endian.
    """
    sink.write(FMAP_MAGIC)
    sink.write(struct.pack("<IIII", FMAP_VERSION,
                           fmap.width, fmap.height, fmap.channels))
    # (K, H, W) memory layout is already (k, y, x) slowest-to-fastest.
    sink.write(fmap.data.astype("<f4", copy=False).tobytes())
    sink.write(struct.pack("<B", 1 if fmap.rectified else 0))


def read_fmap(source) -> FeatureMap:
    """Read a feature map from a binary source written by :func:`write_fmap`."""
    magic = source.read(4)
    if magic != FMAP_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {FMAP_MAGIC!r}")
    header = source.read(16)
    if len(header) != 16:
        raise FormatError("truncated FMAP header")
    version, w, h, k = struct.unpack("<IIII", header)
    if version != FMAP_VERSION:
        raise FormatError(f"unsupported FMAP version {version}")
    if w < 1 or h < 1 or k < 1:
        raise FormatError(f"invalid FMAP dims {(w, h, k)}")
    n = w * h * k
    payload = source.read(4 * n)
    if len(payload) != 4 * n:
        raise FormatError(
            f"truncated FMAP payload: expected {4 * n} bytes, got {len(payload)}")
    flags_raw = source.read(1)
    if len(flags_raw) != 1:
        raise FormatError("missing FMAP flags byte")
    values = np.frombuffer(payload, dtype="<f4").reshape(k, h, w)
    if not np.isfinite(values).all():
        raise FormatError("FMAP payload contains non-finite values")
    rectified = bool(flags_raw[0] & 1)
    return FeatureMap(data=values, rectified=rectified)


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale v to unit L2 norm; vectors with norm <= 1e-12 pass through as zero.

    An all-zero descriptor (image with no positive activations) must not
    turn into NaN, so degenerate inputs are returned unchanged.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= L2_EPS:
        return v.copy()
    return v / norm
