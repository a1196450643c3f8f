/**
 * Batch export of tap-layer feature maps.
 *
 * For each (image, tap, scale) the image is resized so its long side hits
 * the scale, forwarded to the tap, and the resulting map written in FMAP
 * format with the rectified flag set for post-ReLU taps. A network-spec
 * JSON (plus weights blob) and an index of emitted files go alongside, so
 * the retrieval side can keep forwarding from any tap and can run its
 * receptive-field arithmetic on the exported geometry.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { Backbone, forwardToLayer, loadBackbone, rfParams } from './backbone.js';
import { encodeFmap } from './fmap.js';
import { emitNetworkSpec } from './networkSpec.js';
import { decodePpm, resizeToLongSide } from './ppm.js';

export interface ExportJob {
  /** paths to P6 .ppm images */
  images: string[];
  /** backbone identifier, e.g. "standin-0" */
  backbone: string;
  /** tap names; must exist in the chosen backbone */
  taps: string[];
  /** long-side pyramid scales in pixels */
  scales: number[];
  outDir: string;
}

export interface ExportedFile {
  image: string;
  tap: string;
  scale: number;
  file: string;
  width: number;
  height: number;
  channels: number;
  rectified: boolean;
}

export interface ExportIndex {
  backbone: string;
  networkSpec: string;
  taps: Record<string, { layer: number; stride: number; rfSize: number; offset: number }>;
  files: ExportedFile[];
}

function validateJob(job: ExportJob, backbone: Backbone): void {
  if (job.images.length === 0) throw new Error('no images to export');
  if (job.scales.length === 0) throw new Error('no scales given');
  for (const tap of job.taps) {
    if (!(tap in backbone.taps)) {
      throw new Error(
        `unsupported tap ${JSON.stringify(tap)}; backbone ${backbone.id} ` +
        `has: ${Object.keys(backbone.taps).join(', ')}`,
      );
    }
  }
}

export function exportFmaps(job: ExportJob): ExportIndex {
  const backbone = loadBackbone(job.backbone);
  validateJob(job, backbone);
  fs.mkdirSync(job.outDir, { recursive: true });

  const spec = emitNetworkSpec(backbone, backbone.id);
  const specName = `${backbone.id}.json`;
  fs.writeFileSync(path.join(job.outDir, specName), spec.json);
  fs.writeFileSync(path.join(job.outDir, spec.weightsName), spec.weights);

  const taps: ExportIndex['taps'] = {};
  for (const tap of job.taps) {
    const layer = backbone.taps[tap];
    const rf = rfParams(backbone, layer);
    taps[tap] = { layer, stride: rf.stride, rfSize: rf.size, offset: rf.offset };
  }

  const files: ExportedFile[] = [];
  for (const imagePath of job.images) {
    const stem = path.basename(imagePath).replace(/\.ppm$/, '');
    const original = decodePpm(fs.readFileSync(imagePath));
    for (const scale of job.scales) {
      const img = resizeToLongSide(original, scale);
      for (const tap of job.taps) {
        const fmap = forwardToLayer(img, backbone, backbone.taps[tap]);
        const file = `${stem}__${tap}__${scale}.fmap`;
        fs.writeFileSync(path.join(job.outDir, file), encodeFmap(fmap));
        files.push({
          image: stem, tap, scale, file,
          width: fmap.width, height: fmap.height, channels: fmap.channels,
          rectified: fmap.rectified,
        });
      }
    }
  }

  const index: ExportIndex = {
    backbone: backbone.id, networkSpec: specName, taps, files,
  };
  fs.writeFileSync(
    path.join(job.outDir, 'index.json'),
    JSON.stringify(index, null, 2) + '\n',
  );
  return index;
}
