/**
 * Oxford-style ground-truth parser.
 *
 * The standard distribution is a flat directory of text files per query:
 *   <name>_query.txt  — "<prefix>_<imagestem> x0 y0 x1 y1" (floats)
 *   <name>_good.txt / <name>_ok.txt — clearly / partially matching images
 *   <name>_junk.txt   — ambiguous images, excluded from scoring
 * good and ok are merged into the positive set. The output is a dataset
 * manifest (images with dimensions, queries with integer ROIs clamped to
 * image bounds) in the JSON schema the retrieval pipeline loads.
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

import { FormatError } from './fmap.js';
import { decodePpm } from './ppm.js';

export interface ManifestImage {
  id: string;
  path: string;
  w: number;
  h: number;
}

export interface ManifestQuery {
  id: string;
  image: string;
  roi: [number, number, number, number];
  positive: string[];
  junk: string[];
}

export interface Manifest {
  images: ManifestImage[];
  queries: ManifestQuery[];
}

function readList(file: string): string[] {
  if (!fs.existsSync(file)) return [];
  return fs.readFileSync(file, 'utf-8')
    .split('\n').map((l) => l.trim()).filter((l) => l.length > 0);
}

/**
 * Parse a ground-truth directory against an image directory of .ppm files.
 * Image ids are file stems; query lines may carry a collection prefix
 * (e.g. "oxc1_") which is stripped when it leaves a known image id.
 */
export function exportManifest(gtDir: string, imageDir: string): Manifest {
  const images: ManifestImage[] = fs.readdirSync(imageDir)
    .filter((f) => f.endsWith('.ppm'))
    .sort()
    .map((f) => {
      const img = decodePpm(fs.readFileSync(path.join(imageDir, f)));
      return { id: f.slice(0, -4), path: f, w: img.width, h: img.height };
    });
  if (images.length === 0) throw new FormatError(`no .ppm images in ${imageDir}`);
  const known = new Set(images.map((e) => e.id));

  const resolveId = (token: string): string => {
    if (known.has(token)) return token;
    const underscore = token.indexOf('_');
    if (underscore > 0 && known.has(token.slice(underscore + 1))) {
      return token.slice(underscore + 1);
    }
    throw new FormatError(`ground truth references unknown image ${token}`);
  };

  const queryFiles = fs.readdirSync(gtDir)
    .filter((f) => f.endsWith('_query.txt'))
    .sort();
  if (queryFiles.length === 0) {
    throw new FormatError(`no *_query.txt files in ${gtDir}`);
  }

  const queries: ManifestQuery[] = queryFiles.map((qf) => {
    const name = qf.slice(0, -'_query.txt'.length);
    const line = fs.readFileSync(path.join(gtDir, qf), 'utf-8').trim();
    const parts = line.split(/\s+/);
    if (parts.length !== 5) {
      throw new FormatError(`malformed query line in ${qf}: ${JSON.stringify(line)}`);
    }
    const imageId = resolveId(parts[0]);
    const coords = parts.slice(1).map(Number);
    if (coords.some((v) => !Number.isFinite(v))) {
      throw new FormatError(`non-numeric ROI in ${qf}`);
    }
    const entry = images.find((e) => e.id === imageId)!;
    let x0 = Math.max(0, Math.floor(coords[0]));
    let y0 = Math.max(0, Math.floor(coords[1]));
    let x1 = Math.min(entry.w, Math.ceil(coords[2]));
    let y1 = Math.min(entry.h, Math.ceil(coords[3]));
    if (x1 <= x0 || y1 <= y0) {
      throw new FormatError(`empty ROI in ${qf} after clamping`);
    }

    const good = readList(path.join(gtDir, `${name}_good.txt`)).map(resolveId);
    const ok = readList(path.join(gtDir, `${name}_ok.txt`)).map(resolveId);
    const junkList = readList(path.join(gtDir, `${name}_junk.txt`)).map(resolveId);
    const positive = [...new Set([...good, ...ok])].sort();
    const junk = [...new Set(junkList)].filter((id) => !positive.includes(id)).sort();
    return { id: name, image: imageId, roi: [x0, y0, x1, y1], positive, junk };
  });

  return { images, queries };
}

export function manifestJson(manifest: Manifest): string {
  return JSON.stringify(manifest, null, 2) + '\n';
}
