"""Retrieval evaluation: average precision, dataset manifests, and a
synthetic desk-scale benchmark generator.

The generator renders "landmark" patterns on cluttered backgrounds.
Context is facilitatory by construction: every true landmark instance has
a class-specific companion pattern placed next to it, while look-alike
distractors carry the same landmark patch with a wrong companion. A
ROI-only encoder cannot tell positives from look-alikes; one that encodes
(attenuated) context can.
"""

from __future__ import annotations

import colorsys
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .tensor import Image, Rect


@dataclass(frozen=True)
class QueryEntry:
    id: str
    image: str
    roi: Rect
    positive: frozenset[str]
    junk: frozenset[str]

    def __post_init__(self):
        if self.positive & self.junk:
            raise ValueError(f"query {self.id}: positive and junk sets overlap")


@dataclass(frozen=True)
class ImageEntry:
    id: str
    path: str
    width: int
    height: int


@dataclass(frozen=True)
class DatasetManifest:
    images: tuple[ImageEntry, ...]
    queries: tuple[QueryEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "queries", tuple(self.queries))
        ids = {e.id for e in self.images}
        if len(ids) != len(self.images):
            raise ValueError("duplicate image ids")
        for q in self.queries:
            if q.image not in ids:
                raise ValueError(f"query {q.id} references unknown image {q.image}")
            for ref in q.positive | q.junk:
                if ref not in ids:
                    raise ValueError(f"query {q.id} references unknown id {ref}")

    def image_ids(self) -> list[str]:
        return [e.id for e in self.images]


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "images": [{"id": e.id, "path": e.path, "w": e.width, "h": e.height}
                   for e in manifest.images],
        "queries": [{"id": q.id, "image": q.image,
                     "roi": [q.roi.x0, q.roi.y0, q.roi.x1, q.roi.y1],
                     "positive": sorted(q.positive),
                     "junk": sorted(q.junk)}
                    for q in manifest.queries],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    with open(path) as f:
        doc = json.load(f)
    images = tuple(ImageEntry(id=e["id"], path=e["path"], width=e["w"], height=e["h"])
                   for e in doc["images"])
    queries = tuple(QueryEntry(id=q["id"], image=q["image"],
                               roi=Rect(*q["roi"]),
                               positive=frozenset(q["positive"]),
                               junk=frozenset(q["junk"]))
                    for q in doc["queries"])
    return DatasetManifest(images=images, queries=queries)


def average_precision(ranking: list[str], positive: set[str] | frozenset[str],
                      junk: set[str] | frozenset[str] = frozenset()) -> float:
    """Oxford-protocol AP: junk ids are deleted from the ranking (neither
    reward nor penalty), then precision is averaged at each positive's rank.

    A query with no positives yields 0 with a warning.
    """
    if len(set(ranking)) != len(ranking):
        raise ValueError("duplicate ids in ranking")
    kept = [r for r in ranking if r not in junk]
    n_pos = len(set(positive) - set(junk))
    if n_pos == 0:
        warnings.warn("query has no positive images; AP defined as 0")
        return 0.0
    hits = 0
    total = 0.0
    for rank, item in enumerate(kept, start=1):
        if item in positive:
            hits += 1
            total += hits / rank
    return total / n_pos


def mean_average_precision(rankings: dict[str, list[str]],
                           queries: tuple[QueryEntry, ...] | list[QueryEntry]) -> float:
    """Arithmetic mean of per-query APs; every query must have a ranking."""
    if not queries:
        raise ValueError("no queries")
    aps = []
    for q in queries:
        if q.id not in rankings:
            raise ValueError(f"missing ranking for query {q.id}")
        aps.append(average_precision(rankings[q.id], q.positive, q.junk))
    return float(np.mean(aps))


def save_image_png(img: Image, path: str | Path) -> None:
    arr = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_image_png(path: str | Path) -> Image:
    with PILImage.open(path) as pil:
        arr = np.asarray(pil.convert("RGB"), dtype=np.float32) / 255.0
    return Image(arr)


@dataclass(frozen=True)
class SyntheticConfig:
    n_images: int = 200
    n_queries: int = 10
    image_size: int = 64
    landmark_size: int = 16
    positives_per_class: int = 5
    lookalikes_per_class: int = 8
    facilitatory: bool = True

    def __post_init__(self):
        if self.n_images < 20:
            raise ValueError("n_images must be >= 20")
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")
        per_class = 1 + self.positives_per_class + self.lookalikes_per_class
        if self.n_queries * per_class > self.n_images:
            raise ValueError(
                f"{self.n_images} images cannot host {self.n_queries} classes "
                f"of {per_class} images each")
        if self.landmark_size * 2 + 4 > self.image_size:
            raise ValueError("landmark too large for image size")


def _hue_patch(rng: np.random.Generator, size: int, hue: float) -> np.ndarray:
    """Bright textured patch with a fixed hue (fully saturated)."""
    color = np.array(colorsys.hsv_to_rgb(hue % 1.0, 1.0, 1.0))
    texture = rng.uniform(0.6, 1.0, size=(size, size, 1))
    return np.clip(color[None, None, :] * texture, 0.0, 1.0).astype(np.float32)


def _place(rng: np.random.Generator, canvas: np.ndarray, patch: np.ndarray,
           x: int, y: int) -> None:
    ph, pw = patch.shape[:2]
    canvas[y:y + ph, x:x + pw] = patch


def generate_synthetic(seed: int, out_dir: str | Path,
                       config: SyntheticConfig | None = None) -> DatasetManifest:
    """Render the synthetic benchmark into out_dir and write manifest.json.

    Per landmark class: one query image (ROI on the landmark), several
    positives (landmark + its companion pattern), and several look-alikes
    (same landmark patch next to a wrong companion, labeled negative).
    Remaining images are pure clutter. Deterministic for a fixed seed.
    """
    config = config or SyntheticConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    size = config.image_size
    lm = config.landmark_size

    # evenly spaced hues keep classes separable; companions sit half a
    # step off the landmark hues, decoys in the remaining gaps
    n = config.n_queries
    landmark_patches = [_hue_patch(rng, lm, c / n) for c in range(n)]
    companion_patches = [_hue_patch(rng, lm, (c + 0.5) / n) for c in range(n)]
    decoy_patches = [_hue_patch(rng, lm, (j + 0.25) / 4) for j in range(4)]

    images: list[ImageEntry] = []
    queries: list[QueryEntry] = []
    membership: dict[str, tuple[int, str]] = {}  # id -> (class, kind)

    def render(landmark: np.ndarray | None, companion: np.ndarray | None,
               jitter: float) -> tuple[np.ndarray, Rect | None]:
        canvas = rng.uniform(0.0, 0.15, size=(size, size, 3)).astype(np.float32)
        # sprinkle dim clutter blobs so backgrounds are not uniform noise
        for _ in range(5):
            bw = int(rng.integers(4, 10))
            bx = int(rng.integers(0, size - bw))
            by = int(rng.integers(0, size - bw))
            canvas[by:by + bw, bx:bx + bw] = rng.uniform(0.05, 0.3, size=3)
        roi = None
        if landmark is not None:
            x = int(rng.integers(1, size - 2 * lm - 2))
            y = int(rng.integers(1, size - lm - 1))
            noisy = np.clip(landmark + rng.normal(0.0, jitter, landmark.shape), 0, 1)
            _place(rng, canvas, noisy.astype(np.float32), x, y)
            roi = Rect(x, y, x + lm, y + lm)
            if companion is not None:
                _place(rng, canvas, companion, x + lm + 1, y)
        return np.clip(canvas, 0.0, 1.0), roi

    def emit(idx: int, canvas: np.ndarray) -> str:
        img_id = f"img{idx:04d}"
        path = f"{img_id}.png"
        save_image_png(Image(canvas), out_dir / path)
        images.append(ImageEntry(id=img_id, path=path, width=size, height=size))
        return img_id

    idx = 0
    query_rois: dict[int, tuple[str, Rect]] = {}
    for c in range(config.n_queries):
        companion = companion_patches[c] if config.facilitatory else None
        canvas, roi = render(landmark_patches[c], companion, jitter=0.0)
        qid = emit(idx, canvas)
        idx += 1
        membership[qid] = (c, "query")
        query_rois[c] = (qid, roi)
        for _ in range(config.positives_per_class):
            canvas, _ = render(landmark_patches[c], companion, jitter=0.02)
            img_id = emit(idx, canvas)
            idx += 1
            membership[img_id] = (c, "positive")
        for _ in range(config.lookalikes_per_class):
            wrong = decoy_patches[int(rng.integers(0, len(decoy_patches)))]
            canvas, _ = render(landmark_patches[c],
                               wrong if config.facilitatory else None,
                               jitter=0.02)
            img_id = emit(idx, canvas)
            idx += 1
            membership[img_id] = (c, "lookalike")
    while idx < config.n_images:
        canvas, _ = render(None, None, jitter=0.0)
        img_id = emit(idx, canvas)
        idx += 1
        membership[img_id] = (-1, "clutter")

    for c in range(config.n_queries):
        qid, roi = query_rois[c]
        positives = frozenset(i for i, (cc, kind) in membership.items()
                              if cc == c and kind == "positive")
        queries.append(QueryEntry(id=f"q{c:02d}", image=qid, roi=roi,
                                  positive=positives, junk=frozenset({qid})))

    manifest = DatasetManifest(images=tuple(images), queries=tuple(queries))
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
