/**
 * FMAP binary interchange format.
 *
 * Layout (all little-endian):
 *   "FMAP" magic | u32 version (=1) | u32 W | u32 H | u32 K
 *   | K*H*W float32 values, channel slowest then row then column
 *   | u8 flags (bit 0 = rectified)
 *
 * A 1x1x1 map is exactly 25 bytes. The Python side reads these files
 * verbatim; keep this encoder byte-stable.
 */

export const FMAP_MAGIC = 'FMAP';
export const FMAP_VERSION = 1;

export class FormatError extends Error {}

export interface FeatureMap {
  width: number;
  height: number;
  channels: number;
  /** length channels*height*width, channel-major: data[(k*H + y)*W + x] */
  data: Float32Array;
  rectified: boolean;
}

export function featureMap(
  channels: number,
  height: number,
  width: number,
  data: Float32Array,
  rectified = false,
): FeatureMap {
  if (channels < 1 || height < 1 || width < 1) {
    throw new FormatError(`bad dimensions ${channels}x${height}x${width}`);
  }
  if (data.length !== channels * height * width) {
    throw new FormatError(
      `data length ${data.length} != ${channels}*${height}*${width}`,
    );
  }
  for (const v of data) {
    if (!Number.isFinite(v)) throw new FormatError('non-finite value');
    if (rectified && v < 0) throw new FormatError('rectified map has negative value');
  }
  return { channels, height, width, data, rectified };
}

export function encodeFmap(fmap: FeatureMap): Buffer {
  const n = fmap.data.length;
  const buf = Buffer.alloc(4 + 4 + 12 + 4 * n + 1);
  let o = buf.write(FMAP_MAGIC, 0, 'ascii');
  o = buf.writeUInt32LE(FMAP_VERSION, o);
  o = buf.writeUInt32LE(fmap.width, o);
  o = buf.writeUInt32LE(fmap.height, o);
  o = buf.writeUInt32LE(fmap.channels, o);
  for (let i = 0; i < n; i++) o = buf.writeFloatLE(fmap.data[i], o);
  buf.writeUInt8(fmap.rectified ? 1 : 0, o);
  return buf;
}

export function decodeFmap(buf: Buffer): FeatureMap {
  if (buf.length < 21) throw new FormatError('truncated FMAP header');
  if (buf.toString('ascii', 0, 4) !== FMAP_MAGIC) {
    throw new FormatError('bad FMAP magic');
  }
  const version = buf.readUInt32LE(4);
  if (version !== FMAP_VERSION) {
    throw new FormatError(`unsupported FMAP version ${version}`);
  }
  const width = buf.readUInt32LE(8);
  const height = buf.readUInt32LE(12);
  const channels = buf.readUInt32LE(16);
  const n = channels * height * width;
  if (buf.length !== 20 + 4 * n + 1) {
    throw new FormatError(
      `FMAP length ${buf.length}, expected ${20 + 4 * n + 1}`,
    );
  }
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = buf.readFloatLE(20 + 4 * i);
  const flags = buf.readUInt8(20 + 4 * n);
  return featureMap(channels, height, width, data, (flags & 1) === 1);
}
