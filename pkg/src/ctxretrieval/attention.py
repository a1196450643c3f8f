"""Spatial-attention masking of feature maps.

Activations whose receptive-field centers fall inside the query ROI keep
their values; everything outside is attenuated by a monotone function of
local saliency, so informative context survives (scaled down) while
clutter is suppressed toward the attenuation floor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .saliency import SaliencyMap
from .tensor import FeatureMap, Rect

DEFAULT_LAMBDA1 = 0.5
DEFAULT_LAMBDA2 = 0.4
DEFAULT_PHI = 4.0


@dataclass(frozen=True)
class AttentionParams:
    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2
    phi: float = DEFAULT_PHI

    def __post_init__(self):
        if not 0.0 < self.lambda1 < 1.0:
            raise ValueError("lambda1 must lie in (0, 1)")
        if not 0.0 < self.lambda2 < 1.0:
            raise ValueError("lambda2 must lie in (0, 1)")
        if self.lambda1 + self.lambda2 >= 1.0:
            raise ValueError("lambda1 + lambda2 must stay below 1")
        if self.phi <= 0.0:
            raise ValueError("phi must be positive")


@dataclass(frozen=True)
class AttentionMask:
    """Per-cell effective multipliers: exactly 1 inside the ROI rect,
    g(saliency) in [lambda1, lambda1+lambda2] outside."""

    data: np.ndarray  # (H, W) float64
    roi: Rect

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("mask must be 2-D")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def g(a: float | np.ndarray, params: AttentionParams) -> float | np.ndarray:
    """Attenuation gain lambda1 + lambda2 * a**phi for saliency a in [0, 1].

    Monotone non-decreasing, lower-bounded by lambda1 (the maximum
    attenuation) and always below 1.
    """
    arr = np.asarray(a, dtype=np.float64)
    if (arr < 0.0).any() or (arr > 1.0).any():
        raise ValueError("saliency argument must lie in [0, 1]")
    out = params.lambda1 + params.lambda2 * arr ** params.phi
    return float(out) if np.isscalar(a) or arr.ndim == 0 else out


def build_mask(m: SaliencyMap, roi_proj: Rect,
               params: AttentionParams | None = None) -> AttentionMask:
    """Effective multiplier map: 1 inside the projected ROI, g(M_p) outside.

    The gain is pre-applied outside the ROI so the mask can be broadcast
    across all channels without re-evaluating g.
    """
    params = params or AttentionParams()
    if not Rect(0, 0, m.width, m.height).contains(roi_proj):
        raise ValueError(f"roi {roi_proj} outside {m.width}x{m.height} saliency map")
    mask = np.asarray(g(m.data, params), dtype=np.float64)
    mask[roi_proj.y0:roi_proj.y1, roi_proj.x0:roi_proj.x1] = 1.0
    return AttentionMask(data=mask, roi=roi_proj)


def modulate(fmap: FeatureMap, mask: AttentionMask) -> FeatureMap:
    """Scale every channel of the map by the per-location mask.

    ROI cells are left bit-identical (multiplier 1 short-circuits the
    multiply); multipliers are non-negative so the rectified flag survives.
    """
    if (mask.height, mask.width) != (fmap.height, fmap.width):
        raise ValueError(f"mask {mask.width}x{mask.height} does not match "
                         f"map {fmap.width}x{fmap.height}")
    out = (fmap.data.astype(np.float64) * mask.data[None, :, :]).astype(np.float32)
    roi = mask.roi
    out[:, roi.y0:roi.y1, roi.x0:roi.x1] = fmap.data[:, roi.y0:roi.y1, roi.x0:roi.x1]
    return FeatureMap(data=out, rectified=fmap.rectified)
