"""Saliency maps and the binary-map machinery behind database-side attention.

A saliency map is the max-normalized channel sum of a rectified feature
map. It drives both the per-region weights of weighted aggregation and the
attention masks; thresholding plus connected-component clustering turns it
into candidate ROIs on database images.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .tensor import FeatureMap, Rect


@dataclass(frozen=True)
class SaliencyMap:
    """2-D map of values in [0, 1]; max value is 1 unless identically zero."""

    data: np.ndarray  # (H, W) float64

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("saliency map must be 2-D")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class BinaryMap:
    data: np.ndarray  # (H, W) bool

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=bool)
        if arr.ndim != 2:
            raise ValueError("binary map must be 2-D")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def compute_saliency(fmap: FeatureMap) -> SaliencyMap:
    """Channel-sum saliency, max-normalized to [0, 1].

    Requires a rectified (post-ReLU) map: with mixed-sign activations the
    channel sum stops being an activity measure, so non-rectified input is
    an error rather than being clamped silently.
    """
    if not fmap.rectified:
        raise ValueError("saliency requires a rectified feature map")
    sums = fmap.data.sum(axis=0, dtype=np.float64)
    peak = sums.max()
    if peak <= 0.0:
        return SaliencyMap(np.zeros_like(sums))
    return SaliencyMap(sums / peak)


def region_weight(m: SaliencyMap, region: Rect) -> float:
    """Maximum saliency inside a region (the MAC of the saliency map)."""
    if not Rect(0, 0, m.width, m.height).contains(region):
        raise ValueError(f"region {region} outside {m.width}x{m.height} map")
    return float(m.data[region.y0:region.y1, region.x0:region.x1].max())


def binarize(m: SaliencyMap, tau: float) -> BinaryMap:
    """Strict threshold: cells with saliency > tau become true."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return BinaryMap(m.data > tau)


def resize_binary(b: BinaryMap, target_w: int, target_h: int) -> BinaryMap:
    """Nearest-neighbor resample: each target cell copies the source cell
    containing its center."""
    if target_w < 1 or target_h < 1:
        raise ValueError("target dims must be >= 1")
    sy = b.height / target_h
    sx = b.width / target_w
    rows = np.minimum(((np.arange(target_h) + 0.5) * sy).astype(int), b.height - 1)
    cols = np.minimum(((np.arange(target_w) + 0.5) * sx).astype(int), b.width - 1)
    return BinaryMap(b.data[np.ix_(rows, cols)])


def connected_components(b: BinaryMap, min_area: int = 1) -> list[Rect]:
    """Bounding boxes of 8-connected true regions.

    Ordered by decreasing component area, ties broken row-major by top-left
    corner. Components with fewer than min_area cells are dropped.
    """
    data = b.data
    h, w = data.shape
    labels = -np.ones((h, w), dtype=np.int32)
    boxes: list[tuple[int, Rect]] = []
    next_label = 0
    neighbors = [(-1, -1), (-1, 0), (-1, 1), (0, -1),
                 (0, 1), (1, -1), (1, 0), (1, 1)]
    for y in range(h):
        for x in range(w):
            if not data[y, x] or labels[y, x] >= 0:
                continue
            queue = deque([(y, x)])
            labels[y, x] = next_label
            cells = 0
            x0 = x1 = x
            y0 = y1 = y
            while queue:
                cy, cx = queue.popleft()
                cells += 1
                x0, x1 = min(x0, cx), max(x1, cx)
                y0, y1 = min(y0, cy), max(y1, cy)
                for dy, dx in neighbors:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and data[ny, nx] and labels[ny, nx] < 0:
                        labels[ny, nx] = next_label
                        queue.append((ny, nx))
            next_label += 1
            if cells >= min_area:
                boxes.append((cells, Rect(x0, y0, x1 + 1, y1 + 1)))
    boxes.sort(key=lambda t: (-t[1].area, t[1].y0, t[1].x0))
    return [rect for _, rect in boxes]
