"""Command-line frontend.

Subcommands wire the library into the benchmark workflow:

    gen-synthetic  render a synthetic dataset + manifest
    fit-pca        harvest region vectors and fit the whitening model
    index          encode every database image into a DIDX file
    query          encode one query and print the ranked results
    eval           run the (query model x encoder) mAP grid
    project-roi    debug: project a pixel ROI onto a layer's grid

Exit codes: 0 success, 1 usage error, 2 data/format error. A JSON config
file (--config) may supply any flag value; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import convnet, encoder, evaluation, harness, pipeline
from .attention import AttentionParams
from .pipeline import PipelineConfig
from .tensor import FormatError, Rect


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _parse_scales(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad scales list {text!r}")


def _parse_roi(text: str) -> Rect:
    try:
        x0, y0, x1, y1 = (int(v) for v in text.split(","))
        return Rect(x0, y0, x1, y1)
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"bad roi {text!r}, expected x0,y0,x1,y1")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file; flags override it")
    p.add_argument("--network", type=Path, help="network-spec JSON file")
    p.add_argument("--net-seed", type=int, default=0,
                   help="toy-network seed when no --network is given")
    p.add_argument("--scales", type=_parse_scales, default=None,
                   help="comma list of image long sides (default 550,800,1050)")
    p.add_argument("--n-grid-scales", type=int, default=None)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--phi", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--min-area", type=int, default=None)
    p.add_argument("--tap", default=None, help="attention tap name (default mid)")


def _merge_config(args: argparse.Namespace) -> dict:
    """File values first, explicit flags on top."""
    merged: dict = {}
    if args.config:
        with open(args.config) as f:
            merged.update(json.load(f))
    for key in ("network", "net_seed", "scales", "n_grid_scales", "lambda1",
                "lambda2", "phi", "tau", "min_area", "tap"):
        val = getattr(args, key, None)
        if val is not None and not (key == "net_seed" and val == 0 and "net_seed" in merged):
            merged[key] = val
    return merged


def _pipeline_config(cfg: dict, weighted: bool = False) -> PipelineConfig:
    attention = AttentionParams(
        lambda1=cfg.get("lambda1", 0.5),
        lambda2=cfg.get("lambda2", 0.4),
        phi=cfg.get("phi", 4.0))
    return PipelineConfig(
        scales=tuple(cfg.get("scales", encoder.DEFAULT_SCALES)),
        n_grid_scales=int(cfg.get("n_grid_scales", encoder.DEFAULT_GRID_SCALES)),
        weighted=weighted,
        attention=attention,
        attention_tap=cfg.get("tap", pipeline.DEFAULT_ATTENTION_TAP),
        tau=float(cfg.get("tau", pipeline.DEFAULT_TAU)),
        min_area=int(cfg.get("min_area", 1)))


def _load_network(cfg: dict) -> convnet.NetworkSpec:
    if cfg.get("network"):
        return convnet.load_network(cfg["network"])
    return convnet.toy_network(int(cfg.get("net_seed", 0)))


def cmd_gen_synthetic(args) -> int:
    config = evaluation.SyntheticConfig(
        n_images=args.n_images, n_queries=args.n_queries,
        image_size=args.image_size, facilitatory=not args.no_facilitatory)
    manifest = evaluation.generate_synthetic(args.seed, args.out, config)
    print(f"wrote {len(manifest.images)} images, {len(manifest.queries)} queries "
          f"to {args.out}")
    return 0


def cmd_fit_pca(args) -> int:
    cfg = _merge_config(args)
    net = _load_network(cfg)
    pcfg = _pipeline_config(cfg)
    manifest = evaluation.load_manifest(args.manifest)
    model = harness.fit_dataset_pca(manifest, Path(args.manifest).parent, net,
                                    pcfg, args.out_dim)
    encoder.save_pca(model, args.out)
    print(f"fit PCA {model.in_dim} -> {model.out_dim} on dataset regions; "
          f"wrote {args.out}")
    return 0


def cmd_index(args) -> int:
    cfg = _merge_config(args)
    net = _load_network(cfg)
    weighted = args.encoder == "wrmac"
    pcfg = _pipeline_config(cfg, weighted=weighted)
    manifest = evaluation.load_manifest(args.manifest)
    pca = encoder.load_pca(args.pca)
    index = harness.build_index(manifest, Path(args.manifest).parent, net, pca,
                                pcfg, weighted=weighted, db_sa=args.db_sa)
    pipeline.save_index(index, args.out)
    print(f"indexed {len(index)} images (dim {index.dim}) to {args.out}")
    return 0


def cmd_query(args) -> int:
    cfg = _merge_config(args)
    net = _load_network(cfg)
    pcfg = _pipeline_config(cfg, weighted=args.encoder == "wrmac")
    pca = encoder.load_pca(args.pca)
    index = pipeline.load_index(args.index)
    img = evaluation.load_image_png(args.image)
    spec = pipeline.QuerySpec(image=img, roi=args.roi, model=args.model,
                              attention_tap=args.tap)
    desc = pipeline.encode_query(spec, net, pca, pcfg)
    for name, sim in pipeline.search(index, desc, k=args.k):
        print(f"{name}\t{sim:.6f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _merge_config(args)
    net = _load_network(cfg)
    pcfg = _pipeline_config(cfg)
    manifest = evaluation.load_manifest(args.manifest)
    pca = encoder.load_pca(args.pca)
    report = harness.evaluate_grid(
        manifest, Path(args.manifest).parent, net, pca, pcfg,
        models=args.models.split(","), encoders=args.encoders.split(","),
        db_sa=args.db_sa)
    print(harness.format_report(report))
    if args.report:
        harness.save_report(report, args.report)
        print(f"report written to {args.report}")
    return 0


def cmd_project_roi(args) -> int:
    cfg = _merge_config(args)
    net = _load_network(cfg)
    layer = args.layer if args.layer else net.tap_index(cfg.get("tap", "final"))
    rect = convnet.project_roi(net, args.roi, layer,
                               args.image_width, args.image_height)
    rf = convnet.rf_params(net, layer)
    print(f"layer {layer}: stride {rf.stride}, rf {rf.size}, offset {rf.offset}")
    print(f"activation rect: {rect.x0},{rect.y0},{rect.x1},{rect.y1}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ctxretrieval",
                     description="context-aware particular-object retrieval")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", parents=[], help="render synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-images", type=int, default=200)
    p.add_argument("--n-queries", type=int, default=10)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--no-facilitatory", action="store_true")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("fit-pca", help="fit the whitening model")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--out-dim", type=int, default=32)
    p.set_defaults(func=cmd_fit_pca)

    p = sub.add_parser("index", help="encode database images")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--pca", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--encoder", choices=harness.ENCODER_VARIANTS, default="wrmac")
    p.add_argument("--db-sa", action="store_true",
                   help="database-side attention regions")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="rank database images for one query")
    _add_common(p)
    p.add_argument("--index", type=Path, required=True)
    p.add_argument("--pca", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--roi", type=_parse_roi, required=True)
    p.add_argument("--model", choices=pipeline.QUERY_MODELS, default="sa")
    p.add_argument("--encoder", choices=harness.ENCODER_VARIANTS, default="wrmac")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="mAP grid over query models and encoders")
    _add_common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--pca", type=Path, required=True)
    p.add_argument("--models", default="rq,aq,fq,sa")
    p.add_argument("--encoders", default="rmac,wrmac")
    p.add_argument("--db-sa", action="store_true")
    p.add_argument("--report", type=Path, help="write machine-readable JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("project-roi", help="debug ROI projection")
    _add_common(p)
    p.add_argument("--roi", type=_parse_roi, required=True)
    p.add_argument("--image-width", type=int, required=True)
    p.add_argument("--image-height", type=int, required=True)
    p.add_argument("--layer", type=int, default=0)
    p.set_defaults(func=cmd_project_roi)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, FileNotFoundError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
