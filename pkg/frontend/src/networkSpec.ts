/**
 * Network-spec metadata emitter. The JSON lists every layer's geometry
 * (kind/kernel/stride/padding, channel counts for convs) plus the tap
 * table, and points at a float32-LE weights blob: conv weights in
 * (out, in, ky, kx) order followed by the bias, layer by layer. This is
 * the exact layout the retrieval pipeline's loader expects, so the
 * emitted backbone can be forwarded from any tap on the other side.
 */

import { Backbone } from './backbone.js';

export interface NetworkSpecFiles {
  /** JSON document (pretty-printed, sorted keys) */
  json: string;
  /** weights blob referenced by the JSON */
  weights: Buffer;
  weightsName: string;
}

function sortedJson(value: unknown, indent: number): string {
  // stable key order so re-exports are byte-identical
  const normalize = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(normalize);
    if (v !== null && typeof v === 'object') {
      return Object.fromEntries(
        Object.keys(v as Record<string, unknown>).sort()
          .map((k) => [k, normalize((v as Record<string, unknown>)[k])]),
      );
    }
    return v;
  };
  return JSON.stringify(normalize(value), null, indent) + '\n';
}

export function emitNetworkSpec(
  backbone: Backbone,
  baseName: string,
): NetworkSpecFiles {
  const layers = backbone.layers.map((layer) => {
    const entry: Record<string, unknown> = {
      kind: layer.kind,
      kernel: layer.kernel,
      stride: layer.stride,
      padding: layer.padding,
    };
    if (layer.kind === 'convolution') {
      entry.in_channels = layer.inChannels;
      entry.out_channels = layer.outChannels;
    }
    return entry;
  });

  const chunks: Buffer[] = [];
  for (const layer of backbone.layers) {
    if (layer.kind !== 'convolution') continue;
    const w = Buffer.alloc(layer.weights!.length * 4);
    layer.weights!.forEach((v, i) => w.writeFloatLE(v, i * 4));
    const b = Buffer.alloc(layer.bias!.length * 4);
    layer.bias!.forEach((v, i) => b.writeFloatLE(v, i * 4));
    chunks.push(w, b);
  }

  const weightsName = `${baseName}.weights`;
  const doc = { layers, taps: backbone.taps, weights: weightsName };
  return { json: sortedJson(doc, 2), weights: Buffer.concat(chunks), weightsName };
}
