"""Show what the spatial-attention mask actually does to a feature map.

The mask multiplies every activation column outside the projected ROI by
g(saliency) = l1 + l2 * saliency^phi, which with the default constants
lands in [0.5, 0.9]: context is attenuated, never erased, and salient
context is kept more alive than flat background. Inside the ROI the
multiplier is exactly 1.

Run: python3 demos/attention_mask_anatomy.py
"""

import numpy as np

from ctxretrieval import (AttentionParams, Rect, build_mask, compute_saliency,
                          forward, g, modulate, toy_network)
from ctxretrieval.tensor import Image

params = AttentionParams()
print("the attenuation curve g(saliency):")
for a in (0.0, 0.25, 0.5, 0.75, 1.0):
    print(f"  g({a:4.2f}) = {g(a, params):.4f}")

# A dark scene with one bright square: the square dominates the saliency map.
rng = np.random.default_rng(0)
scene = rng.uniform(0.0, 0.1, (32, 32, 3)).astype(np.float32)
scene[20:30, 20:30] = 0.95

net = toy_network(seed=0)
tap = net.tap_index("mid")
fmap = forward(Image(scene), net, 1, tap)
saliency = compute_saliency(forward(fmap, net, tap + 1, net.tap_index("final")))

roi = Rect(0, 0, 3, 3)  # pretend the query object sits top-left
# saliency lives at the final tap; build the mask there and inspect it
mask = build_mask(saliency, roi, params)

print(f"\nsaliency map ({saliency.width}x{saliency.height}), bright square "
      f"bottom-right:")
for row in saliency.data:
    print("  " + " ".join(f"{v:4.2f}" for v in row))

print(f"\nmask multipliers (1.00 inside the ROI {roi}, g(saliency) outside):")
for row in mask.data:
    print("  " + " ".join(f"{v:4.2f}" for v in row))

final_map = forward(fmap, net, tap + 1, net.tap_index("final"))
modulated = modulate(final_map, mask)
ratio = modulated.data.sum(axis=0) / np.maximum(final_map.data.sum(axis=0), 1e-12)
print("\nper-column energy kept after modulation:")
for row in ratio:
    print("  " + " ".join(f"{v:4.2f}" for v in row))
