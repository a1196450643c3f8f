import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { forwardToLayer, loadBackbone, rfParams, standInBackbone } from '../src/backbone.js';
import { exportFmaps, ExportJob } from '../src/export.js';
import { decodeFmap } from '../src/fmap.js';
import { decodePpm, encodePpm, RgbImage } from '../src/ppm.js';

let root: string;
let imagePaths: string[];

function noiseImage(seed: number, width: number, height: number): RgbImage {
  const data = new Float32Array(width * height * 3);
  let s = seed + 1;
  for (let i = 0; i < data.length; i++) {
    s = (s * 1103515245 + 12345) & 0x7fffffff;
    data[i] = (s % 1000) / 1000;
  }
  return { width, height, data };
}

beforeAll(() => {
  root = fs.mkdtempSync(path.join(os.tmpdir(), 'bridge-export-'));
  imagePaths = [];
  const sizes: Array<[number, number]> = [[64, 48], [48, 64], [56, 56]];
  sizes.forEach(([w, h], i) => {
    const p = path.join(root, `img${i}.ppm`);
    fs.writeFileSync(p, encodePpm(noiseImage(i, w, h)));
    imagePaths.push(p);
  });
});

afterAll(() => fs.rmSync(root, { recursive: true, force: true }));

function job(outName: string, overrides: Partial<ExportJob> = {}): ExportJob {
  return {
    images: imagePaths,
    backbone: 'standin-0',
    taps: ['mid', 'final'],
    scales: [32, 48],
    outDir: path.join(root, outName),
    ...overrides,
  };
}

describe('backbone', () => {
  it('spatial dims obey the cumulative stride', () => {
    const backbone = standInBackbone(0);
    const img = noiseImage(9, 64, 48);
    for (const tap of ['low', 'mid', 'final'] as const) {
      const layer = backbone.taps[tap];
      const fmap = forwardToLayer(img, backbone, layer);
      const { stride } = rfParams(backbone, layer);
      expect(fmap.width).toBe(64 / stride);
      expect(fmap.height).toBe(48 / stride);
    }
  });

  it('post-ReLU taps are non-negative and flagged rectified', () => {
    const backbone = standInBackbone(0);
    const fmap = forwardToLayer(noiseImage(2, 40, 40), backbone, backbone.taps.final);
    expect(fmap.rectified).toBe(true);
    expect(Math.min(...fmap.data)).toBeGreaterThanOrEqual(0);
  });

  it('unknown backbone ids are rejected', () => {
    expect(() => loadBackbone('resnet-101')).toThrow(/unknown backbone/);
  });
});

describe('exportFmaps', () => {
  it('emits one FMAP per (image, tap, scale) plus spec and index', () => {
    const index = exportFmaps(job('out1'));
    expect(index.files.length).toBe(3 * 2 * 2);
    const outDir = path.join(root, 'out1');
    for (const f of index.files) {
      const fmap = decodeFmap(fs.readFileSync(path.join(outDir, f.file)));
      expect(fmap.width).toBe(f.width);
      expect(fmap.height).toBe(f.height);
      expect(fmap.channels).toBe(f.channels);
      expect(fmap.rectified).toBe(true); // both taps are post-ReLU
      expect(Math.max(f.width, f.height)).toBe(f.scale / index.taps[f.tap].stride);
    }
    expect(fs.existsSync(path.join(outDir, index.networkSpec))).toBe(true);
    const spec = JSON.parse(
      fs.readFileSync(path.join(outDir, index.networkSpec), 'utf-8'));
    expect(spec.layers.length).toBe(8);
    expect(spec.taps).toEqual({ low: 2, mid: 5, final: 8 });
    const weights = fs.readFileSync(path.join(outDir, spec.weights));
    // conv stacks 3->8, 8->16, 16->32 with 3x3 kernels + biases, f32 each
    const expectedFloats = (8 * 3 + 16 * 8 + 32 * 16) * 9 + 8 + 16 + 32;
    expect(weights.length).toBe(expectedFloats * 4);
  });

  it('index records receptive-field metadata per tap', () => {
    const index = exportFmaps(job('out2', { taps: ['final'] }));
    expect(index.taps.final.layer).toBe(8);
    expect(index.taps.final.stride).toBe(4);
    expect(index.taps.final.rfSize).toBe(18);
    expect(index.taps.final.offset).toBe(1.5);
  });

  it('re-export is byte-identical', () => {
    exportFmaps(job('det1'));
    exportFmaps(job('det2'));
    const d1 = path.join(root, 'det1');
    const d2 = path.join(root, 'det2');
    const names = fs.readdirSync(d1).sort();
    expect(fs.readdirSync(d2).sort()).toEqual(names);
    for (const name of names) {
      expect(fs.readFileSync(path.join(d1, name))
        .equals(fs.readFileSync(path.join(d2, name)))).toBe(true);
    }
  });

  it('rejects unsupported taps and empty jobs', () => {
    expect(() => exportFmaps(job('bad1', { taps: ['res5c'] })))
      .toThrow(/unsupported tap/);
    expect(() => exportFmaps(job('bad2', { images: [] }))).toThrow(/no images/);
    expect(() => exportFmaps(job('bad3', { scales: [] }))).toThrow(/no scales/);
  });
});

describe('ppm round-trip', () => {
  it('survives encode/decode within 8-bit quantization', () => {
    const img = noiseImage(5, 20, 10);
    const back = decodePpm(encodePpm(img));
    expect(back.width).toBe(20);
    expect(back.height).toBe(10);
    for (let i = 0; i < img.data.length; i++) {
      expect(Math.abs(back.data[i] - img.data[i])).toBeLessThanOrEqual(0.5 / 255 + 1e-6);
    }
  });
});
