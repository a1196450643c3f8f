/**
 * The stand-in backbone.
 *
 * Real pretrained weights are not always obtainable (and never are in an
 * offline environment), so the bridge ships one deterministic convnet:
 * seeded weights, fixed architecture, three named taps. Its geometry
 * (kernels, strides, paddings) is real, so downstream receptive-field
 * arithmetic is exercised exactly as it would be with a production
 * backbone; only the learned filter values are placeholders.
 */

import { FeatureMap, featureMap } from './fmap.js';
import { RgbImage } from './ppm.js';

export type LayerKind = 'convolution' | 'relu' | 'maxpool';

export interface Layer {
  kind: LayerKind;
  kernel: number;
  stride: number;
  padding: number;
  inChannels: number;
  outChannels: number;
  /** conv only: (out, in, ky, kx) flattened, output-channel-major */
  weights?: Float32Array;
  bias?: Float32Array;
}

export interface Backbone {
  id: string;
  layers: Layer[];
  /** tap name -> 1-based layer index */
  taps: Record<string, number>;
}

/** splitmix64-flavored PRNG; good enough for placeholder filters. */
export function seededRng(seed: number): () => number {
  let state = BigInt(seed) & 0xffffffffffffffffn;
  return () => {
    state = (state + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
    let z = state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
    z = z ^ (z >> 31n);
    return Number(z >> 11n) / 2 ** 53;
  };
}

function conv(rng: () => number, cin: number, cout: number): Layer {
  const weights = new Float32Array(cout * cin * 9);
  for (let i = 0; i < weights.length; i++) weights[i] = rng() * 0.2 - 0.1;
  const bias = new Float32Array(cout);
  for (let i = 0; i < cout; i++) bias[i] = rng() * 0.05;
  return {
    kind: 'convolution', kernel: 3, stride: 1, padding: 1,
    inChannels: cin, outChannels: cout, weights, bias,
  };
}

export function standInBackbone(seed: number): Backbone {
  const rng = seededRng(seed);
  const relu: Layer = {
    kind: 'relu', kernel: 1, stride: 1, padding: 0, inChannels: 0, outChannels: 0,
  };
  const pool: Layer = {
    kind: 'maxpool', kernel: 2, stride: 2, padding: 0, inChannels: 0, outChannels: 0,
  };
  return {
    id: `standin-${seed}`,
    layers: [conv(rng, 3, 8), relu, pool, conv(rng, 8, 16), relu, pool,
             conv(rng, 16, 32), relu],
    taps: { low: 2, mid: 5, final: 8 },
  };
}

export function loadBackbone(id: string): Backbone {
  const m = /^standin-(\d+)$/.exec(id);
  if (!m) {
    throw new Error(
      `unknown backbone ${JSON.stringify(id)}; available: standin-<seed>`,
    );
  }
  return standInBackbone(Number(m[1]));
}

export interface RfParams {
  stride: number;
  size: number;
  offset: number;
}

/** Cumulative receptive-field arithmetic up to and including layer `n` (1-based). */
export function rfParams(backbone: Backbone, n: number): RfParams {
  let stride = 1;
  let size = 1;
  let offset = 0;
  for (const layer of backbone.layers.slice(0, n)) {
    const k = layer.kind === 'relu' ? 1 : layer.kernel;
    const s = layer.kind === 'relu' ? 1 : layer.stride;
    const p = layer.kind === 'relu' ? 0 : layer.padding;
    size += (k - 1) * stride;
    offset += ((k - 1) / 2 - p) * stride;
    stride *= s;
  }
  return { stride, size, offset };
}

function imageToMap(img: RgbImage): FeatureMap {
  const { width: w, height: h } = img;
  const data = new Float32Array(3 * h * w);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      for (let c = 0; c < 3; c++) {
        data[(c * h + y) * w + x] = img.data[(y * w + x) * 3 + c];
      }
    }
  }
  return featureMap(3, h, w, data, false);
}

function convForward(x: FeatureMap, layer: Layer): FeatureMap {
  const { kernel: k, stride: s, padding: p } = layer;
  const outH = Math.floor((x.height + 2 * p - k) / s) + 1;
  const outW = Math.floor((x.width + 2 * p - k) / s) + 1;
  const cout = layer.outChannels;
  const cin = layer.inChannels;
  const out = new Float32Array(cout * outH * outW);
  const w = layer.weights!;
  const b = layer.bias!;
  for (let oc = 0; oc < cout; oc++) {
    for (let oy = 0; oy < outH; oy++) {
      for (let ox = 0; ox < outW; ox++) {
        let acc = b[oc];
        for (let ic = 0; ic < cin; ic++) {
          for (let ky = 0; ky < k; ky++) {
            const iy = oy * s + ky - p;
            if (iy < 0 || iy >= x.height) continue;
            for (let kx = 0; kx < k; kx++) {
              const ix = ox * s + kx - p;
              if (ix < 0 || ix >= x.width) continue;
              acc += w[((oc * cin + ic) * k + ky) * k + kx] *
                     x.data[(ic * x.height + iy) * x.width + ix];
            }
          }
        }
        out[(oc * outH + oy) * outW + ox] = Math.fround(acc);
      }
    }
  }
  return featureMap(cout, outH, outW, out, false);
}

function reluForward(x: FeatureMap): FeatureMap {
  const out = new Float32Array(x.data.length);
  for (let i = 0; i < out.length; i++) out[i] = Math.max(0, x.data[i]);
  return featureMap(x.channels, x.height, x.width, out, true);
}

function maxpoolForward(x: FeatureMap, layer: Layer): FeatureMap {
  const { kernel: k, stride: s } = layer;
  const outH = Math.floor((x.height - k) / s) + 1;
  const outW = Math.floor((x.width - k) / s) + 1;
  const out = new Float32Array(x.channels * outH * outW);
  for (let c = 0; c < x.channels; c++) {
    for (let oy = 0; oy < outH; oy++) {
      for (let ox = 0; ox < outW; ox++) {
        let best = -Infinity;
        for (let ky = 0; ky < k; ky++) {
          for (let kx = 0; kx < k; kx++) {
            const v = x.data[(c * x.height + oy * s + ky) * x.width + ox * s + kx];
            if (v > best) best = v;
          }
        }
        out[(c * outH + oy) * outW + ox] = best;
      }
    }
  }
  return featureMap(x.channels, outH, outW, out, x.rectified);
}

/** Forward an image through layers 1..n (1-based, inclusive). */
export function forwardToLayer(
  img: RgbImage,
  backbone: Backbone,
  n: number,
): FeatureMap {
  if (n < 1 || n > backbone.layers.length) {
    throw new Error(`layer index ${n} out of range`);
  }
  let x = imageToMap(img);
  for (const layer of backbone.layers.slice(0, n)) {
    if (layer.kind === 'convolution') x = convForward(x, layer);
    else if (layer.kind === 'relu') x = reluForward(x);
    else x = maxpoolForward(x, layer);
  }
  return x;
}
