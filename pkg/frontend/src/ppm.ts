/**
 * Minimal binary PPM (P6, maxval 255) reader/writer. The bridge takes its
 * images in this format so it has zero image-codec dependencies; anything
 * can produce PPM (`convert in.jpg out.ppm`).
 */

import { FormatError } from './fmap.js';

export interface RgbImage {
  width: number;
  height: number;
  /** length height*width*3, row-major, values in [0, 1] */
  data: Float32Array;
}

export function decodePpm(buf: Buffer): RgbImage {
  const text = buf.toString('latin1');
  if (!text.startsWith('P6')) throw new FormatError('not a P6 PPM');
  // header: magic, width, height, maxval — whitespace/comment separated
  const fields: string[] = [];
  let pos = 2;
  while (fields.length < 3) {
    while (pos < text.length && /\s/.test(text[pos])) pos++;
    if (text[pos] === '#') {
      while (pos < text.length && text[pos] !== '\n') pos++;
      continue;
    }
    let start = pos;
    while (pos < text.length && !/\s/.test(text[pos])) pos++;
    if (pos === start) throw new FormatError('truncated PPM header');
    fields.push(text.slice(start, pos));
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields.map(Number);
  if (!(width >= 1 && height >= 1)) throw new FormatError('bad PPM dimensions');
  if (maxval !== 255) throw new FormatError(`unsupported maxval ${maxval}`);
  const n = width * height * 3;
  if (buf.length - pos < n) throw new FormatError('truncated PPM payload');
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = buf[pos + i] / 255;
  return { width, height, data };
}

export function encodePpm(img: RgbImage): Buffer {
  const header = `P6\n${img.width} ${img.height}\n255\n`;
  const payload = Buffer.alloc(img.width * img.height * 3);
  for (let i = 0; i < payload.length; i++) {
    payload[i] = Math.round(Math.min(1, Math.max(0, img.data[i])) * 255);
  }
  return Buffer.concat([Buffer.from(header, 'latin1'), payload]);
}

/** Bilinear resize with half-pixel-aligned sample centers. */
export function resizeImage(img: RgbImage, width: number, height: number): RgbImage {
  const out = new Float32Array(width * height * 3);
  const sx = img.width / width;
  const sy = img.height / height;
  for (let y = 0; y < height; y++) {
    const srcY = Math.min(Math.max((y + 0.5) * sy - 0.5, 0), img.height - 1);
    const y0 = Math.floor(srcY);
    const y1 = Math.min(y0 + 1, img.height - 1);
    const fy = srcY - y0;
    for (let x = 0; x < width; x++) {
      const srcX = Math.min(Math.max((x + 0.5) * sx - 0.5, 0), img.width - 1);
      const x0 = Math.floor(srcX);
      const x1 = Math.min(x0 + 1, img.width - 1);
      const fx = srcX - x0;
      for (let c = 0; c < 3; c++) {
        const v00 = img.data[(y0 * img.width + x0) * 3 + c];
        const v01 = img.data[(y0 * img.width + x1) * 3 + c];
        const v10 = img.data[(y1 * img.width + x0) * 3 + c];
        const v11 = img.data[(y1 * img.width + x1) * 3 + c];
        out[(y * width + x) * 3 + c] =
          v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx +
          v10 * fy * (1 - fx) + v11 * fy * fx;
      }
    }
  }
  return { width, height, data: out };
}

/** Resize so the long side equals `target`, preserving aspect ratio. */
export function resizeToLongSide(img: RgbImage, target: number): RgbImage {
  const factor = target / Math.max(img.width, img.height);
  const w = Math.max(1, Math.round(img.width * factor));
  const h = Math.max(1, Math.round(img.height * factor));
  return resizeImage(img, w, h);
}
