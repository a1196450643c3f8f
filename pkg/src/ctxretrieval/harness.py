"""End-to-end evaluation workflows: PCA harvesting, index building, and
the query-model x encoder mAP grid."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .convnet import NetworkSpec, forward
from .encoder import (PcaModel, encode_multiscale, fit_pca, mac, region_vectors,
                      resize_to_long_side, rmac_grid)
from .evaluation import (DatasetManifest, average_precision, load_image_png,
                         mean_average_precision)
from .pipeline import (DescriptorIndex, PipelineConfig, QuerySpec,
                       encode_database_plain, encode_database_sa, encode_query,
                       search)
from .tensor import Image, l2_normalize

ENCODER_VARIANTS = ("rmac", "wrmac")


def load_dataset_images(manifest: DatasetManifest,
                        root: str | Path) -> dict[str, Image]:
    root = Path(root)
    return {e.id: load_image_png(root / e.path) for e in manifest.images}


def harvest_region_samples(images: Sequence[Image], net: NetworkSpec,
                           scales: Sequence[int],
                           n_grid_scales: int) -> np.ndarray:
    """Collect l2-normalized per-region max vectors at the final tap across
    all images and scales, as PCA training samples."""
    final = net.tap_index("final")
    samples = []
    for img in images:
        for s in scales:
            resized = resize_to_long_side(img, int(s))
            fmap = forward(resized, net, 1, final)
            grid = rmac_grid(fmap.width, fmap.height, n_grid_scales)
            for region in grid.regions:
                v = l2_normalize(mac(fmap, region))
                if v.any():
                    samples.append(v)
    if not samples:
        raise ValueError("no non-zero region vectors harvested")
    return np.asarray(samples)


def fit_dataset_pca(manifest: DatasetManifest, root: str | Path,
                    net: NetworkSpec, config: PipelineConfig,
                    out_dim: int) -> PcaModel:
    images = load_dataset_images(manifest, root)
    samples = harvest_region_samples(list(images.values()), net,
                                     config.scales, config.n_grid_scales)
    return fit_pca(samples, out_dim)


def build_index(manifest: DatasetManifest, root: str | Path, net: NetworkSpec,
                pca: PcaModel, config: PipelineConfig, weighted: bool,
                db_sa: bool = False) -> DescriptorIndex:
    """Encode every database image. Without db_sa the encoder variant
    (plain vs weighted) follows ``weighted``; with db_sa the database side
    runs the attention-region procedure, which is weighted by design."""
    images = load_dataset_images(manifest, root)
    ids = sorted(images)
    vectors = []
    for img_id in ids:
        img = images[img_id]
        if db_sa:
            d = encode_database_sa(img, net, pca, config)
        elif weighted:
            d = encode_database_plain(img, net, pca, config)
        else:
            d = encode_multiscale(img, net, pca, scales=config.scales,
                                  weighted=False,
                                  n_grid_scales=config.n_grid_scales)
        vectors.append(d)
    return DescriptorIndex(ids=tuple(ids), vectors=np.asarray(vectors))


def evaluate_grid(manifest: DatasetManifest, root: str | Path,
                  net: NetworkSpec, pca: PcaModel, config: PipelineConfig,
                  models: Sequence[str] = ("fq", "rq", "aq", "sa"),
                  encoders: Sequence[str] = ENCODER_VARIANTS,
                  db_sa: bool = False) -> dict:
    """mAP for each (query model, encoder variant) cell.

    The encoder variant applies to both sides: it selects weighted or
    plain aggregation for query and database descriptors alike.
    """
    images = load_dataset_images(manifest, root)
    report: dict = {"db_sa": db_sa, "cells": []}
    for enc in encoders:
        if enc not in ENCODER_VARIANTS:
            raise ValueError(f"unknown encoder variant {enc!r}")
        weighted = enc == "wrmac"
        cfg = replace(config, weighted=weighted)
        index = build_index(manifest, root, net, pca, cfg,
                            weighted=weighted, db_sa=db_sa)
        for model in models:
            rankings = {}
            for q in manifest.queries:
                spec = QuerySpec(image=images[q.image], roi=q.roi, model=model)
                desc = encode_query(spec, net, pca, cfg)
                ranked = search(index, desc, k=len(index))
                rankings[q.id] = [name for name, _ in ranked]
            per_query = {q.id: average_precision(rankings[q.id], q.positive, q.junk)
                         for q in manifest.queries}
            cell_map = mean_average_precision(rankings, manifest.queries)
            report["cells"].append({"model": model, "encoder": enc,
                                    "map": cell_map, "ap_per_query": per_query})
    return report


def report_cell(report: dict, model: str, encoder: str) -> float:
    for cell in report["cells"]:
        if cell["model"] == model and cell["encoder"] == encoder:
            return cell["map"]
    raise KeyError(f"no cell ({model}, {encoder}) in report")


def format_report(report: dict) -> str:
    """Fixed-width mAP table, query models as rows, encoders as columns."""
    models = []
    encoders = []
    for cell in report["cells"]:
        if cell["model"] not in models:
            models.append(cell["model"])
        if cell["encoder"] not in encoders:
            encoders.append(cell["encoder"])
    lines = ["model  " + "".join(f"{e:>10}" for e in encoders)]
    for m in models:
        row = f"{m:<7}"
        for e in encoders:
            try:
                row += f"{report_cell(report, m, e):>10.4f}"
            except KeyError:
                row += f"{'-':>10}"
        lines.append(row)
    if report.get("db_sa"):
        lines.append("(database-side attention enabled)")
    return "\n".join(lines)


def save_report(report: dict, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
