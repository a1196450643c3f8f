"""Walk a rectangle from pixel space to activation space and back.

Every layer of a conv stack sees the input through a receptive field
characterized by three numbers: cumulative stride, size, and center
offset. This script prints them for each layer of the toy network, then
projects a pixel ROI to the final tap and shows which activation columns
made the cut.

Run: python3 demos/roi_projection_walkthrough.py
"""

import numpy as np

from ctxretrieval import (Rect, forward, project_roi, rf_params, toy_network)
from ctxretrieval.tensor import Image

net = toy_network(seed=0)

print("layer-by-layer receptive-field arithmetic")
print(f"{'layer':>5}  {'kind':<12} {'stride':>6} {'rf size':>7} {'offset':>7}")
for i, layer in enumerate(net.layers, start=1):
    rf = rf_params(net, i)
    print(f"{i:>5}  {layer.kind:<12} {rf.stride:>6} {rf.size:>7} {rf.offset:>7.1f}")

W = H = 64
roi = Rect(16, 16, 40, 48)
final = net.tap_index("final")
rect = project_roi(net, roi, final, W, H)
rf = rf_params(net, final)

print(f"\npixel ROI {roi.x0},{roi.y0}..{roi.x1},{roi.y1} on a {W}x{H} image")
print(f"projected to layer {final}: activation rect "
      f"{rect.x0},{rect.y0}..{rect.x1},{rect.y1}")

print("\nactivation centers along x (kept columns marked *):")
fmap = forward(Image(np.zeros((H, W, 3), np.float32)), net, 1, final)
for col in range(fmap.width):
    center = col * rf.stride + rf.offset
    kept = "*" if rect.x0 <= col < rect.x1 else " "
    print(f"  col {col}: center at pixel {center:5.1f} {kept}")

print("\nA tiny ROI projects to an empty set of centers; the projection")
print("falls back to the single nearest activation so downstream code")
print("always has at least one cell to work with:")
tiny = Rect(1, 1, 3, 3)
print(f"  {tiny} -> {project_roi(net, tiny, final, W, H)}")
