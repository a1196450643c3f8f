"""Deterministic layered convolutional forward engine.

Supports forwarding from any layer to any later layer (needed when
attention modulates an intermediate map and the remaining layers must be
re-run), exact receptive-field arithmetic per layer, and projection of a
pixel ROI onto any layer's activation grid.

Layer indices are 1-based: ``forward(img, 1, L)`` runs the whole network.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import FeatureMap, Image, Rect

CONV = "convolution"
RELU = "relu"
MAXPOOL = "maxpool"

# Smallest input side the toy architecture accepts (two stride-2 pools).
MIN_INPUT_SIDE = 8


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    in_channels: int = 0
    out_channels: int = 0
    weights: np.ndarray | None = None  # (out, in, k, k) for conv
    bias: np.ndarray | None = None     # (out,) for conv

    def __post_init__(self):
        if self.kind not in (CONV, RELU, MAXPOOL):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")
        if self.kind == CONV:
            if self.kernel % 2 != 1:
                raise ValueError("conv kernel size must be odd")
            w = np.ascontiguousarray(self.weights, dtype=np.float32)
            expected = (self.out_channels, self.in_channels, self.kernel, self.kernel)
            if w.shape != expected:
                raise ValueError(f"conv weights shape {w.shape}, expected {expected}")
            b = (np.zeros(self.out_channels, dtype=np.float32)
                 if self.bias is None
                 else np.ascontiguousarray(self.bias, dtype=np.float32))
            if b.shape != (self.out_channels,):
                raise ValueError("bias length must equal out_channels")
            w.flags.writeable = False
            b.flags.writeable = False
            object.__setattr__(self, "weights", w)
            object.__setattr__(self, "bias", b)
        elif self.kind == RELU:
            if self.kernel != 1 or self.stride != 1 or self.padding != 0:
                raise ValueError("relu takes no parameters")
        elif self.kind == MAXPOOL:
            if self.kernel < 1:
                raise ValueError("pool kernel must be >= 1")

    @property
    def rf_kernel(self) -> int:
        """Kernel size as seen by receptive-field arithmetic (relu = 1x1)."""
        return 1 if self.kind == RELU else self.kernel


@dataclass(frozen=True)
class RFParams:
    """Cumulative receptive-field geometry of one layer's activations.

    Activation index i (0-based, per axis) has its receptive-field center at
    input pixel coordinate ``i * stride + offset`` and covers
    ``size`` input pixels.
    """

    stride: int
    size: int
    offset: float


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    taps: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("network must have at least one layer")
        # channel chaining across conv layers
        ch = None
        for i, layer in enumerate(self.layers, start=1):
            if layer.kind == CONV:
                if ch is not None and layer.in_channels != ch:
                    raise ValueError(
                        f"layer {i}: in_channels {layer.in_channels} != upstream {ch}")
                ch = layer.out_channels
        if "final" not in self.taps:
            raise ValueError('network must define a "final" tap')
        if self.taps["final"] != len(self.layers):
            raise ValueError('"final" tap must point at the last layer')
        for name, idx in self.taps.items():
            if not 1 <= idx <= len(self.layers):
                raise ValueError(f"tap {name!r} index {idx} out of range")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def tap_index(self, name: str) -> int:
        if name not in self.taps:
            raise KeyError(f"no tap named {name!r}; have {sorted(self.taps)}")
        return self.taps[name]


def _conv2d(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Zero-padded strided cross-correlation, x shape (Cin, H, W)."""
    k, s, p = layer.kernel, layer.stride, layer.padding
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p)))
    _, h, w = x.shape
    if h < k or w < k:
        raise ValueError(f"spatial size {h}x{w} smaller than kernel {k} after padding")
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    windows = windows[:, ::s, ::s]  # (Cin, Hout, Wout, k, k)
    out = np.tensordot(layer.weights, windows, axes=([1, 2, 3], [0, 3, 4]))
    out += layer.bias[:, None, None]
    return out.astype(np.float32)


def _maxpool2d(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    k, s, p = layer.kernel, layer.stride, layer.padding
    if p:
        pad_val = np.float32(-np.inf)
        x = np.pad(x, ((0, 0), (p, p), (p, p)), constant_values=pad_val)
    _, h, w = x.shape
    if h < k or w < k:
        raise ValueError(f"spatial size {h}x{w} smaller than pool window {k}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    return windows[:, ::s, ::s].max(axis=(3, 4)).astype(np.float32)


def forward(x: Image | FeatureMap, net: NetworkSpec,
            from_layer: int, to_layer: int) -> FeatureMap:
    """Run layers from_layer..to_layer (inclusive, 1-based) over x.

    An Image input is only valid when from_layer == 1. The output carries
    the rectified flag iff to_layer is a relu.
    """
    if not 1 <= from_layer <= to_layer <= net.depth:
        raise ValueError(f"layer range [{from_layer}, {to_layer}] invalid "
                         f"for depth {net.depth}")
    if isinstance(x, Image):
        if from_layer != 1:
            raise ValueError("raw image input must enter at layer 1")
        data = np.ascontiguousarray(x.data.transpose(2, 0, 1))  # (3, H, W)
    else:
        data = x.data
    first = net.layers[from_layer - 1]
    expected_in = first.in_channels if first.kind == CONV else data.shape[0]
    if first.kind == CONV and data.shape[0] != expected_in:
        raise ValueError(f"layer {from_layer} expects {expected_in} channels, "
                         f"got {data.shape[0]}")
    for idx in range(from_layer, to_layer + 1):
        layer = net.layers[idx - 1]
        if layer.kind == CONV:
            if data.shape[0] != layer.in_channels:
                raise ValueError(f"layer {idx} expects {layer.in_channels} channels, "
                                 f"got {data.shape[0]}")
            data = _conv2d(data, layer)
        elif layer.kind == RELU:
            data = np.maximum(data, 0.0, dtype=np.float32)
        else:
            data = _maxpool2d(data, layer)
    rectified = net.layers[to_layer - 1].kind == RELU
    return FeatureMap(data=data, rectified=rectified)


def rf_params(net: NetworkSpec, layer: int) -> RFParams:
    """Cumulative stride, receptive-field size, and center offset of a layer.

    Composition over layers j = 1..layer with kernel k_j, stride s_j,
    padding p_j (relu counts as a 1x1/1/0 layer):

        S = prod s_j
        R = 1 + sum (k_j - 1) * prod_{i<j} s_i
        O = sum ((k_j - 1)/2 - p_j) * prod_{i<j} s_i
    """
    if not 1 <= layer <= net.depth:
        raise ValueError(f"layer {layer} out of range")
    stride = 1
    size = 1
    offset = 0.0
    for spec in net.layers[:layer]:
        k = spec.rf_kernel
        s = spec.stride if spec.kind != RELU else 1
        p = spec.padding if spec.kind != RELU else 0
        size += (k - 1) * stride
        offset += ((k - 1) / 2.0 - p) * stride
        stride *= s
    return RFParams(stride=stride, size=size, offset=offset)


def output_grid_size(net: NetworkSpec, layer: int, width: int, height: int) -> tuple[int, int]:
    """Spatial (W, H) of the given layer's output for a width x height input."""
    w, h = width, height
    for spec in net.layers[:layer]:
        if spec.kind == RELU:
            continue
        k, s, p = spec.kernel, spec.stride, spec.padding
        w = (w + 2 * p - k) // s + 1
        h = (h + 2 * p - k) // s + 1
        if w < 1 or h < 1:
            raise ValueError("input too small for network")
    return w, h


def _axis_projection(lo: float, hi: float, n: int, rf: RFParams) -> tuple[int, int]:
    """Activation index range [i0, i1) whose centers fall in [lo, hi)."""
    centers = np.arange(n) * rf.stride + rf.offset
    inside = np.nonzero((centers >= lo) & (centers < hi))[0]
    if inside.size == 0:
        return -1, -1
    return int(inside[0]), int(inside[-1]) + 1


def project_roi(net: NetworkSpec, roi: Rect, layer: int,
                image_w: int, image_h: int) -> Rect:
    """Project a pixel ROI onto a layer's activation grid.

    Returns the bounding rectangle of activations whose receptive-field
    centers fall inside the half-open pixel ROI. When no center lands
    inside (tiny ROI at a coarse layer), falls back to the 1x1 rect of the
    activation whose center is nearest the ROI center: a query must always
    yield a non-empty descriptor.
    """
    if not (0 <= roi.x0 and roi.x1 <= image_w and 0 <= roi.y0 and roi.y1 <= image_h):
        raise ValueError(f"roi {roi} outside {image_w}x{image_h} image")
    rf = rf_params(net, layer)
    gw, gh = output_grid_size(net, layer, image_w, image_h)
    x0, x1 = _axis_projection(roi.x0, roi.x1, gw, rf)
    y0, y1 = _axis_projection(roi.y0, roi.y1, gh, rf)
    if x0 < 0 or y0 < 0:
        cx = (roi.x0 + roi.x1) / 2.0
        cy = (roi.y0 + roi.y1) / 2.0
        ix = int(np.argmin(np.abs(np.arange(gw) * rf.stride + rf.offset - cx)))
        iy = int(np.argmin(np.abs(np.arange(gh) * rf.stride + rf.offset - cy)))
        return Rect(ix, iy, ix + 1, iy + 1)
    return Rect(x0, y0, x1, y1)


def toy_network(seed: int) -> NetworkSpec:
    """Fixed 8-layer toy architecture with seeded uniform weights.

    conv(3->8, k3, s1, p1) + relu / maxpool(2,2) /
    conv(8->16, k3, s1, p1) + relu / maxpool(2,2) /
    conv(16->32, k3, s1, p1) + relu

    Weights are drawn uniformly from [-0.1, 0.1] by numpy's PCG64
    generator seeded with ``seed``; biases uniformly from [0, 0.05] so no
    channel is silenced everywhere by the ReLUs. Taps: low=2, mid=5,
    final=8 (the three relu outputs).
    """
    rng = np.random.default_rng(seed)

    def conv(cin, cout):
        w = rng.uniform(-0.1, 0.1, size=(cout, cin, 3, 3)).astype(np.float32)
        b = rng.uniform(0.0, 0.05, size=cout).astype(np.float32)
        return LayerSpec(kind=CONV, kernel=3, stride=1, padding=1,
                         in_channels=cin, out_channels=cout, weights=w, bias=b)

    layers = (
        conv(3, 8),
        LayerSpec(kind=RELU),
        LayerSpec(kind=MAXPOOL, kernel=2, stride=2, padding=0),
        conv(8, 16),
        LayerSpec(kind=RELU),
        LayerSpec(kind=MAXPOOL, kernel=2, stride=2, padding=0),
        conv(16, 32),
        LayerSpec(kind=RELU),
    )
    return NetworkSpec(layers=layers, taps={"low": 2, "mid": 5, "final": 8})


def save_network(net: NetworkSpec, json_path: str | Path,
                 seed: int | None = None) -> None:
    """Write a network-spec JSON file, with a weights blob beside it.

    When ``seed`` is given the JSON records the seed instead of a blob and
    the loader regenerates the toy network.
    """
    json_path = Path(json_path)
    doc: dict = {"taps": dict(net.taps)}
    layers_doc = []
    for layer in net.layers:
        entry = {"kind": layer.kind, "kernel": layer.kernel,
                 "stride": layer.stride, "padding": layer.padding}
        if layer.kind == CONV:
            entry["in_channels"] = layer.in_channels
            entry["out_channels"] = layer.out_channels
        layers_doc.append(entry)
    doc["layers"] = layers_doc
    if seed is not None:
        doc["seed"] = seed
    else:
        blob_path = json_path.with_suffix(".weights")
        with open(blob_path, "wb") as f:
            for layer in net.layers:
                if layer.kind == CONV:
                    # output-channel-major (out, in, ky, kx), float32 LE
                    f.write(layer.weights.astype("<f4").tobytes())
                    f.write(layer.bias.astype("<f4").tobytes())
        doc["weights"] = blob_path.name
    with open(json_path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_network(json_path: str | Path) -> NetworkSpec:
    """Load a network-spec JSON file written by :func:`save_network`."""
    json_path = Path(json_path)
    with open(json_path) as f:
        doc = json.load(f)
    if "seed" in doc:
        return toy_network(int(doc["seed"]))
    blob = (json_path.parent / doc["weights"]).read_bytes()
    pos = 0
    layers = []
    for entry in doc["layers"]:
        kind = entry["kind"]
        if kind == CONV:
            cin, cout, k = entry["in_channels"], entry["out_channels"], entry["kernel"]
            nw = cout * cin * k * k
            w = np.frombuffer(blob, dtype="<f4", count=nw, offset=pos)
            pos += 4 * nw
            b = np.frombuffer(blob, dtype="<f4", count=cout, offset=pos)
            pos += 4 * cout
            layers.append(LayerSpec(kind=CONV, kernel=k, stride=entry["stride"],
                                    padding=entry["padding"], in_channels=cin,
                                    out_channels=cout,
                                    weights=w.reshape(cout, cin, k, k), bias=b))
        else:
            layers.append(LayerSpec(kind=kind, kernel=entry.get("kernel", 1) if kind == MAXPOOL else 1,
                                    stride=entry.get("stride", 1) if kind == MAXPOOL else 1,
                                    padding=entry.get("padding", 0) if kind == MAXPOOL else 0))
    if pos != len(blob):
        raise ValueError(f"weights blob size mismatch: used {pos} of {len(blob)} bytes")
    return NetworkSpec(layers=tuple(layers), taps={k: int(v) for k, v in doc["taps"].items()})
