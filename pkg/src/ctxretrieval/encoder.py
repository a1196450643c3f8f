"""Regional max-pooling descriptors: grid generation, PCA whitening,
plain and saliency-weighted aggregation, multi-scale assembly.

Per-region pipeline: spatial max per channel -> l2 -> whiten -> l2, then a
(weighted) sum over regions followed by a final l2 normalization, so a dot
product compares images directly.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .saliency import SaliencyMap, compute_saliency, region_weight
from .tensor import FeatureMap, FormatError, Image, Rect, l2_normalize

PCAW_MAGIC = b"PCAW"
PCAW_VERSION = 1

EIGENVALUE_FLOOR = 1e-8
OVERLAP_FRACTION = 0.4

DEFAULT_SCALES = (550, 800, 1050)
DEFAULT_GRID_SCALES = 3


@dataclass(frozen=True)
class RegionGrid:
    regions: tuple[Rect, ...]
    n_scales: int

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if not self.regions:
            raise ValueError("region grid must contain at least one region")

    def translate(self, dx: int, dy: int) -> "RegionGrid":
        return RegionGrid(tuple(r.translate(dx, dy) for r in self.regions),
                          self.n_scales)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray         # (K,)
    basis: np.ndarray        # (K', K), rows scaled by 1/sqrt(eig + floor)
    eigenvalues: np.ndarray  # (K',)
    corpus_digest: bytes = b"\x00" * 32

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        basis = np.ascontiguousarray(self.basis, dtype=np.float64)
        eig = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        if basis.ndim != 2 or mean.ndim != 1 or basis.shape[1] != mean.shape[0]:
            raise ValueError("inconsistent PCA model shapes")
        if eig.shape != (basis.shape[0],):
            raise ValueError("eigenvalue count must match output dim")
        if (eig <= 0).any():
            raise ValueError("eigenvalues must be strictly positive")
        for arr in (mean, basis, eig):
            arr.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def in_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[0]


def identity_pca(dim: int) -> PcaModel:
    """Pass-through model: zero mean, identity basis, unit eigenvalues."""
    return PcaModel(mean=np.zeros(dim), basis=np.eye(dim),
                    eigenvalues=np.ones(dim))


def _axis_positions(length: int, extent: int) -> list[int] | None:
    """Left edges of `extent`-wide windows spanning [0, length).

    Consecutive windows must overlap by at least OVERLAP_FRACTION of their
    width; the count is the smallest that satisfies this. Returns None when
    no distinct integer placement can honor the overlap (tiny windows on a
    longer axis).
    """
    if extent >= length:
        return [0]
    max_step = (1.0 - OVERLAP_FRACTION) * extent
    n = max(2, math.ceil((length - extent) / max_step) + 1)
    step = (length - extent) / (n - 1)
    positions = sorted({int(round(j * step)) for j in range(n)})
    if len(positions) < n:
        return None
    return positions


def rmac_grid(w: int, h: int, n_scales: int = DEFAULT_GRID_SCALES) -> RegionGrid:
    """Fixed multi-scale grid of square regions over a W x H activation grid.

    At scale s (1-based) the window side is ceil(2*min(W,H)/(s+1));
    windows are placed uniformly per axis with >= 40% overlap between
    neighbors. When the overlap rule admits no distinct placements on an
    axis, that axis degrades to a single full-extent window so the grid
    still covers everything. Duplicate rects are removed, order preserved.
    """
    if w < 1 or h < 1 or n_scales < 1:
        raise ValueError("grid dims and n_scales must be >= 1")
    regions: list[Rect] = []
    seen: set[tuple[int, int, int, int]] = set()
    for s in range(1, n_scales + 1):
        side = math.ceil(2 * min(w, h) / (s + 1))
        xw, yw = side, side
        xs = _axis_positions(w, side)
        ys = _axis_positions(h, side)
        if xs is None:
            xs, xw = [0], w
        if ys is None:
            ys, yw = [0], h
        for y in ys:
            for x in xs:
                rect = (x, y, min(x + xw, w), min(y + yw, h))
                if rect not in seen:
                    seen.add(rect)
                    regions.append(Rect(*rect))
    return RegionGrid(tuple(regions), n_scales)


def mac(fmap: FeatureMap, region: Rect) -> np.ndarray:
    """Per-channel spatial maximum over the region (K-vector, float64)."""
    if not fmap.spatial_rect.contains(region):
        raise ValueError(f"region {region} outside {fmap.width}x{fmap.height} map")
    window = fmap.data[:, region.y0:region.y1, region.x0:region.x1]
    return window.max(axis=(1, 2)).astype(np.float64)


def fit_pca(samples: Sequence[np.ndarray] | np.ndarray, out_dim: int,
            corpus_digest: bytes | None = None) -> PcaModel:
    """Fit a whitening transform on sample vectors.

    Mean-centered eigendecomposition of the sample covariance; each
    retained component is scaled by 1/sqrt(eigenvalue + floor). Errors out
    when samples are too few or the covariance rank falls below out_dim.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must form an (N, K) matrix")
    n, k = x.shape
    if out_dim < 1 or out_dim > k:
        raise ValueError(f"out_dim must lie in [1, {k}], got {out_dim}")
    if n <= out_dim:
        raise ValueError(f"need more than {out_dim} samples, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    rank_tol = max(eigvals[0], 0.0) * k * np.finfo(float).eps
    rank = int((eigvals > rank_tol).sum())
    if rank < out_dim:
        raise ValueError(f"sample covariance rank {rank} below requested "
                         f"dimension {out_dim}")
    eigvals = np.maximum(eigvals[:out_dim], 0.0)
    basis = eigvecs[:, :out_dim].T / np.sqrt(eigvals + EIGENVALUE_FLOOR)[:, None]
    if corpus_digest is None:
        corpus_digest = hashlib.sha256(
            np.ascontiguousarray(x, dtype="<f8").tobytes()).digest()
    return PcaModel(mean=mean, basis=basis,
                    eigenvalues=eigvals + EIGENVALUE_FLOOR,
                    corpus_digest=corpus_digest)


def whiten(v: np.ndarray, model: PcaModel) -> np.ndarray:
    """Apply the fitted whitening transform: basis @ (v - mean)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (model.in_dim,):
        raise ValueError(f"vector length {v.shape} != model dim {model.in_dim}")
    return model.basis @ (v - model.mean)


def save_pca(model: PcaModel, path: str | Path) -> None:
    """PCAW layout: magic + version u32 + K u32 + K' u32 + mean (K f32) +
    basis (K'*K f32 row-major) + eigenvalues (K' f32) + 32-byte corpus
    digest. Little-endian throughout."""
    with open(path, "wb") as f:
        f.write(PCAW_MAGIC)
        f.write(struct.pack("<III", PCAW_VERSION, model.in_dim, model.out_dim))
        f.write(model.mean.astype("<f4").tobytes())
        f.write(model.basis.astype("<f4").tobytes())
        f.write(model.eigenvalues.astype("<f4").tobytes())
        f.write(model.corpus_digest[:32].ljust(32, b"\x00"))


def load_pca(path: str | Path) -> PcaModel:
    blob = Path(path).read_bytes()
    if blob[:4] != PCAW_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {PCAW_MAGIC!r}")
    version, k, kp = struct.unpack("<III", blob[4:16])
    if version != PCAW_VERSION:
        raise FormatError(f"unsupported PCAW version {version}")
    expected = 16 + 4 * (k + kp * k + kp) + 32
    if len(blob) != expected:
        raise FormatError(f"PCAW size {len(blob)} != expected {expected}")
    pos = 16
    mean = np.frombuffer(blob, dtype="<f4", count=k, offset=pos).astype(np.float64)
    pos += 4 * k
    basis = np.frombuffer(blob, dtype="<f4", count=kp * k, offset=pos)
    basis = basis.astype(np.float64).reshape(kp, k)
    pos += 4 * kp * k
    eig = np.frombuffer(blob, dtype="<f4", count=kp, offset=pos).astype(np.float64)
    pos += 4 * kp
    return PcaModel(mean=mean, basis=basis, eigenvalues=eig,
                    corpus_digest=blob[pos:pos + 32])


def aggregate(region_vectors: Sequence[np.ndarray],
              weights: Sequence[float]) -> np.ndarray:
    """Weighted sum of region vectors followed by a final l2 normalization."""
    if len(region_vectors) != len(weights):
        raise ValueError("one weight per region vector required")
    if len(region_vectors) == 0:
        raise ValueError("nothing to aggregate")
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any():
        raise ValueError("negative region weight")
    stacked = np.asarray(region_vectors, dtype=np.float64)
    return l2_normalize(w @ stacked)


def region_vectors(fmap: FeatureMap, pca: PcaModel,
                   grid: RegionGrid) -> list[np.ndarray]:
    """Per-region l2 -> whiten -> l2 vectors.

    Regions with no activation at all (zero max vector) contribute a zero
    vector rather than the whitened negative mean: silence is not evidence.
    """
    out = []
    for region in grid.regions:
        v = mac(fmap, region)
        normed = l2_normalize(v)
        if not normed.any():
            out.append(np.zeros(pca.out_dim))
            continue
        out.append(l2_normalize(whiten(normed, pca)))
    return out


def encode(fmap: FeatureMap, pca: PcaModel, weighted: bool = False,
           grid: RegionGrid | None = None,
           n_grid_scales: int = DEFAULT_GRID_SCALES) -> np.ndarray:
    """Full regional descriptor of one feature map (unit norm or zero).

    When weighted, each region is scaled by the maximum of the map's own
    normalized saliency inside that region before aggregation.
    """
    if not fmap.rectified:
        raise ValueError("encoder expects a rectified feature map")
    if grid is None:
        grid = rmac_grid(fmap.width, fmap.height, n_grid_scales)
    vectors = region_vectors(fmap, pca, grid)
    if weighted:
        sal = compute_saliency(fmap)
        weights = [region_weight(sal, r) for r in grid.regions]
    else:
        weights = [1.0] * len(grid.regions)
    return aggregate(vectors, weights)


def resize_image(img: Image, target_w: int, target_h: int) -> Image:
    """Bilinear resize with the half-pixel-center convention."""
    if target_w < 1 or target_h < 1:
        raise ValueError("target dims must be >= 1")
    src = img.data.astype(np.float64)
    h, w = src.shape[:2]
    if (target_w, target_h) == (w, h):
        return img
    xs = np.clip((np.arange(target_w) + 0.5) * (w / target_w) - 0.5, 0, w - 1)
    ys = np.clip((np.arange(target_h) + 0.5) * (h / target_h) - 0.5, 0, h - 1)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bot * fy
    return Image(np.clip(out, 0.0, 1.0).astype(np.float32))


def resize_to_long_side(img: Image, long_side: int) -> Image:
    """Aspect-preserving resize so the larger dimension equals long_side."""
    if img.width >= img.height:
        tw = long_side
        th = max(1, round(img.height * long_side / img.width))
    else:
        th = long_side
        tw = max(1, round(img.width * long_side / img.height))
    return resize_image(img, tw, th)


def multiscale_descriptor(image: Image, scales: Sequence[int],
                          per_scale: Callable[[Image, float], np.ndarray]) -> np.ndarray:
    """Sum per-scale descriptors over the scale list, then l2 normalize.

    per_scale receives the resized image and the pixel scale factor
    (resized long side / original long side) so callers can rescale ROI
    coordinates.
    """
    if not scales:
        raise ValueError("at least one scale required")
    total = None
    long_side = max(image.width, image.height)
    for s in scales:
        if s < 1:
            raise ValueError(f"invalid scale {s}")
        resized = resize_to_long_side(image, int(s))
        d = per_scale(resized, int(s) / long_side)
        total = d if total is None else total + d
    return l2_normalize(total)


def encode_multiscale(image: Image, net, pca: PcaModel,
                      scales: Sequence[int] = DEFAULT_SCALES,
                      weighted: bool = False,
                      n_grid_scales: int = DEFAULT_GRID_SCALES) -> np.ndarray:
    """Descriptor of a whole image: per-scale forward to the final tap,
    encode, sum over scales, l2 normalize."""
    from .convnet import MIN_INPUT_SIDE, forward

    def per_scale(img: Image, _factor: float) -> np.ndarray:
        if min(img.width, img.height) < MIN_INPUT_SIDE:
            raise ValueError(f"scaled image {img.width}x{img.height} below "
                             f"network minimum {MIN_INPUT_SIDE}")
        fmap = forward(img, net, 1, net.tap_index("final"))
        return encode(fmap, pca, weighted=weighted, n_grid_scales=n_grid_scales)

    return multiscale_descriptor(image, scales, per_scale)
