"""Query encoding models, database encoding, and the descriptor index.

Four query models are supported:

* ``fq``  -- encode the full query image.
* ``rq``  -- crop the image to the ROI first, encode the crop.
* ``aq``  -- forward the full image, then encode only the activation
  rectangle whose receptive-field centers fall inside the ROI.
* ``sa``  -- modulate an intermediate feature map so activations outside
  the projected ROI are attenuated by a function of local saliency, then
  finish the forward pass and encode the whole map.

Database images are encoded with weighted aggregation, optionally with
database-side attention: salient blobs are discovered by thresholding and
connected components, each blob gets its own attention pass, and all
passes are summed with the plain first pass.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .attention import AttentionParams, build_mask, modulate
from .convnet import MIN_INPUT_SIDE, NetworkSpec, forward, project_roi
from .encoder import (DEFAULT_GRID_SCALES, DEFAULT_SCALES, PcaModel, encode,
                      multiscale_descriptor, rmac_grid)
from .saliency import binarize, compute_saliency, connected_components, resize_binary
from .tensor import FormatError, Image, Rect, l2_normalize

DIDX_MAGIC = b"DIDX"
DIDX_VERSION = 1

QUERY_MODELS = ("fq", "rq", "aq", "sa")

DEFAULT_TAU = 0.7
DEFAULT_ATTENTION_TAP = "mid"


@dataclass(frozen=True)
class PipelineConfig:
    scales: tuple[int, ...] = DEFAULT_SCALES
    n_grid_scales: int = DEFAULT_GRID_SCALES
    weighted: bool = False
    attention: AttentionParams = field(default_factory=AttentionParams)
    attention_tap: str = DEFAULT_ATTENTION_TAP
    tau: float = DEFAULT_TAU
    min_area: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        if not self.scales or any(s < 1 for s in self.scales):
            raise ValueError("scales must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.min_area < 1:
            raise ValueError("min_area must be >= 1")


@dataclass(frozen=True)
class QuerySpec:
    image: Image
    roi: Rect
    model: str
    attention_tap: str | None = None

    def __post_init__(self):
        if self.model not in QUERY_MODELS:
            raise ValueError(f"unknown query model {self.model!r}; "
                             f"choose from {QUERY_MODELS}")
        full = Rect(0, 0, self.image.width, self.image.height)
        if not full.contains(self.roi):
            raise ValueError(f"roi {self.roi} outside image "
                             f"{self.image.width}x{self.image.height}")


def crop_image(img: Image, roi: Rect) -> Image:
    if not Rect(0, 0, img.width, img.height).contains(roi):
        raise ValueError(f"roi {roi} outside image")
    return Image(img.data[roi.y0:roi.y1, roi.x0:roi.x1])


def scale_roi(roi: Rect, factor: float, width: int, height: int) -> Rect:
    """Rescale a pixel ROI by the per-scale resize factor, clamped to the
    resized image and kept non-empty."""
    x0 = max(0, min(width - 1, math.floor(roi.x0 * factor)))
    y0 = max(0, min(height - 1, math.floor(roi.y0 * factor)))
    x1 = max(x0 + 1, min(width, math.ceil(roi.x1 * factor)))
    y1 = max(y0 + 1, min(height, math.ceil(roi.y1 * factor)))
    return Rect(x0, y0, x1, y1)


def _check_min_size(img: Image) -> Image:
    if min(img.width, img.height) < MIN_INPUT_SIDE:
        raise ValueError(f"image {img.width}x{img.height} below network "
                         f"minimum side {MIN_INPUT_SIDE}")
    return img


def _encode_final(img: Image, net: NetworkSpec, pca: PcaModel,
                  config: PipelineConfig) -> np.ndarray:
    fmap = forward(_check_min_size(img), net, 1, net.tap_index("final"))
    return encode(fmap, pca, weighted=config.weighted,
                  n_grid_scales=config.n_grid_scales)


def encode_query(q: QuerySpec, net: NetworkSpec, pca: PcaModel,
                 config: PipelineConfig) -> np.ndarray:
    """Encode a query per its model, multi-scale, unit norm."""
    if q.model == "rq":
        crop = crop_image(q.image, q.roi)
        return multiscale_descriptor(
            crop, config.scales,
            lambda img, _f: _encode_final(img, net, pca, config))

    if q.model == "fq":
        return multiscale_descriptor(
            q.image, config.scales,
            lambda img, _f: _encode_final(img, net, pca, config))

    if q.model == "aq":
        final = net.tap_index("final")

        def per_scale(img: Image, factor: float) -> np.ndarray:
            fmap = forward(_check_min_size(img), net, 1, final)
            roi = scale_roi(q.roi, factor, img.width, img.height)
            rect = project_roi(net, roi, final, img.width, img.height)
            grid = rmac_grid(rect.width, rect.height,
                             config.n_grid_scales).translate(rect.x0, rect.y0)
            return encode(fmap, pca, weighted=config.weighted, grid=grid)

        return multiscale_descriptor(q.image, config.scales, per_scale)

    # sa
    tap_name = q.attention_tap or config.attention_tap
    tap = net.tap_index(tap_name)
    final = net.tap_index("final")

    def per_scale(img: Image, factor: float) -> np.ndarray:
        fmap_tap = forward(_check_min_size(img), net, 1, tap)
        sal = compute_saliency(fmap_tap)
        roi = scale_roi(q.roi, factor, img.width, img.height)
        roi_act = project_roi(net, roi, tap, img.width, img.height)
        mask = build_mask(sal, roi_act, config.attention)
        modulated = modulate(fmap_tap, mask)
        fmap_final = (modulated if tap == final
                      else forward(modulated, net, tap + 1, final))
        return encode(fmap_final, pca, weighted=config.weighted,
                      n_grid_scales=config.n_grid_scales)

    return multiscale_descriptor(q.image, config.scales, per_scale)


def encode_database_plain(image: Image, net: NetworkSpec, pca: PcaModel,
                          config: PipelineConfig) -> np.ndarray:
    """Weighted multi-scale descriptor of a database image."""
    cfg = replace(config, weighted=True)
    return multiscale_descriptor(
        image, cfg.scales, lambda img, _f: _encode_final(img, net, pca, cfg))


def encode_database_sa(image: Image, net: NetworkSpec, pca: PcaModel,
                       config: PipelineConfig) -> np.ndarray:
    """Database descriptor with self-discovered attention regions.

    Per scale: a plain weighted pass is always kept; the final-tap saliency
    map is thresholded at tau, resized to the attention tap's resolution,
    and each connected component becomes an ROI for one attention pass.
    All passes are summed. No component above threshold means the plain
    pass alone survives, so weak images are never degraded.
    """
    cfg = replace(config, weighted=True)
    tap = net.tap_index(cfg.attention_tap)
    final = net.tap_index("final")

    def per_scale(img: Image, _factor: float) -> np.ndarray:
        fmap_tap = forward(_check_min_size(img), net, 1, tap)
        fmap_final = (fmap_tap if tap == final
                      else forward(fmap_tap, net, tap + 1, final))
        first_pass = encode(fmap_final, pca, weighted=True,
                            n_grid_scales=cfg.n_grid_scales)
        sal_final = compute_saliency(fmap_final)
        binary = binarize(sal_final, cfg.tau)
        binary = resize_binary(binary, fmap_tap.width, fmap_tap.height)
        boxes = connected_components(binary, min_area=cfg.min_area)
        if not boxes:
            return first_pass
        sal_tap = compute_saliency(fmap_tap)
        total = first_pass
        for box in boxes:
            mask = build_mask(sal_tap, box, cfg.attention)
            modulated = modulate(fmap_tap, mask)
            roi_final = (modulated if tap == final
                         else forward(modulated, net, tap + 1, final))
            total = total + encode(roi_final, pca, weighted=True,
                                   n_grid_scales=cfg.n_grid_scales)
        return total

    return multiscale_descriptor(image, cfg.scales, per_scale)


@dataclass(frozen=True)
class DescriptorIndex:
    ids: tuple[str, ...]
    vectors: np.ndarray  # (N, K') float32

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        vecs = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if vecs.ndim != 2 or vecs.shape[0] != len(self.ids):
            raise ValueError("one vector per id required")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate ids in index")
        vecs.flags.writeable = False
        object.__setattr__(self, "vectors", vecs)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)


def save_index(index: DescriptorIndex, path: str | Path) -> None:
    """DIDX layout: magic + version u32 + count u32 + K' u32 + per entry
    (id-length u32, utf-8 id, K' float32). Little-endian throughout."""
    with open(path, "wb") as f:
        f.write(DIDX_MAGIC)
        f.write(struct.pack("<III", DIDX_VERSION, len(index), index.dim))
        for name, vec in zip(index.ids, index.vectors):
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(vec.astype("<f4").tobytes())


def load_index(path: str | Path) -> DescriptorIndex:
    blob = Path(path).read_bytes()
    if blob[:4] != DIDX_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {DIDX_MAGIC!r}")
    version, count, dim = struct.unpack("<III", blob[4:16])
    if version != DIDX_VERSION:
        raise FormatError(f"unsupported DIDX version {version}")
    pos = 16
    ids = []
    vectors = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        if pos + 4 > len(blob):
            raise FormatError("truncated DIDX entry header")
        (id_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + id_len + 4 * dim > len(blob):
            raise FormatError("truncated DIDX entry")
        ids.append(blob[pos:pos + id_len].decode("utf-8"))
        pos += id_len
        vectors[i] = np.frombuffer(blob, dtype="<f4", count=dim, offset=pos)
        pos += 4 * dim
    if pos != len(blob):
        raise FormatError("trailing bytes after DIDX entries")
    return DescriptorIndex(ids=tuple(ids), vectors=vectors)


def search(index: DescriptorIndex, query: np.ndarray,
           k: int) -> list[tuple[str, float]]:
    """Top-k index entries by descending dot product, ties by ascending id."""
    if len(index) == 0:
        raise ValueError("empty index")
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ValueError(f"query dim {q.shape} != index dim {index.dim}")
    if k < 1:
        raise ValueError("k must be >= 1")
    sims = index.vectors.astype(np.float64) @ q
    order = sorted(range(len(index)), key=lambda i: (-sims[i], index.ids[i]))
    return [(index.ids[i], float(sims[i])) for i in order[:k]]
