/**
 * Minimal netpbm reader: binary PGM (P5) and PPM (P6), 8-bit.
 *
 * Crops and query images are exchanged as netpbm so the adapter stays free
 * of native image codecs; PPM pixels are collapsed to grayscale since the
 * bundled scorers are intensity-based.
 */

import { readFileSync } from 'node:fs';

export interface GrayImage {
  width: number;
  height: number;
  gray: Uint8Array;
}

export function readNetpbm(path: string): GrayImage {
  const buf = readFileSync(path);
  const header: string[] = [];
  let pos = 0;
  while (header.length < 4 && pos < buf.length) {
    // token scanner skipping whitespace and '#' comment lines
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++;
    if (buf[pos] === 0x23) {
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++;
    header.push(buf.subarray(start, pos).toString('ascii'));
  }
  pos++; // netpbm: exactly one whitespace byte after maxval
  const [magic, w, h, maxval] = header;
  const width = parseInt(w, 10);
  const height = parseInt(h, 10);
  if (!Number.isFinite(width) || !Number.isFinite(height) || parseInt(maxval, 10) > 255) {
    throw new Error(`${path}: unsupported netpbm header`);
  }
  const n = width * height;
  if (magic === 'P5') {
    const data = buf.subarray(pos, pos + n);
    if (data.length < n) throw new Error(`${path}: truncated P5 payload`);
    return { width, height, gray: new Uint8Array(data) };
  }
  if (magic === 'P6') {
    const data = buf.subarray(pos, pos + 3 * n);
    if (data.length < 3 * n) throw new Error(`${path}: truncated P6 payload`);
    const gray = new Uint8Array(n);
    for (let i = 0; i < n; i++) {
      gray[i] = Math.round((data[3 * i] + data[3 * i + 1] + data[3 * i + 2]) / 3);
    }
    return { width, height, gray };
  }
  throw new Error(`${path}: expected P5 or P6, got '${magic}'`);
}

export function encodePgm(img: GrayImage): Buffer {
  const head = Buffer.from(`P5\n${img.width} ${img.height}\n255\n`, 'ascii');
  return Buffer.concat([head, Buffer.from(img.gray)]);
}

export interface BoxJson {
  x_left: number;
  x_right: number;
  y_top: number;
  y_bottom: number;
  wrapped: boolean;
  clamped: boolean;
}

/** Round half away from zero; bounds become pixels only here, at crop time. */
function roundHalfAway(v: number): number {
  return v >= 0 ? Math.floor(v + 0.5) : -Math.floor(-v + 0.5);
}

/**
 * Extract the zoom-box region from a full panorama. Wrapped boxes stitch
 * the right-edge slice then the left-edge slice, matching the core's crop.
 */
export function cropBox(pano: GrayImage, box: BoxJson): GrayImage {
  const top = roundHalfAway(box.y_top);
  const bottom = roundHalfAway(box.y_bottom);
  const left = roundHalfAway(box.x_left);
  const right = roundHalfAway(box.x_right);
  if (top < 0 || bottom > pano.height) {
    throw new Error(`box rows [${box.y_top}, ${box.y_bottom}] do not fit height ${pano.height}`);
  }
  const height = Math.max(0, bottom - top);
  const ranges: Array<[number, number]> = box.wrapped
    ? [
        [left, pano.width],
        [0, right],
      ]
    : [[left, right]];
  for (const [a, b] of ranges) {
    if (a < 0 || b > pano.width) {
      throw new Error(`box columns [${box.x_left}, ${box.x_right}] do not fit width ${pano.width}`);
    }
  }
  const width = ranges.reduce((acc, [a, b]) => acc + Math.max(0, b - a), 0);
  const gray = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    let xOut = 0;
    for (const [a, b] of ranges) {
      for (let x = a; x < b; x++) {
        gray[y * width + xOut++] = pano.gray[(top + y) * pano.width + x];
      }
    }
  }
  return { width, height, gray };
}
