/** Shared fixture builder: 10 synthetic crops (5 panos x 2 landmarks). */

import { mkdirSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { GrayImage, encodePgm } from '../src/images.js';
import { CropSpecJson } from '../src/jsonl.js';

export const PANO_IDS = ['pv00', 'pv01', 'pv02', 'pv03', 'pv04'];
export const LANDMARK_IDS = ['lmA', 'lmB'];

export function patternImage(seedByte: number, size = 64): GrayImage {
  const gray = new Uint8Array(size * size);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      gray[y * size + x] = (seedByte + 7 * x + 13 * y) % 256;
    }
  }
  return { width: size, height: size, gray };
}

export function flatImage(value: number, size = 64): GrayImage {
  return { width: size, height: size, gray: new Uint8Array(size * size).fill(value) };
}

export function makeSpec(panoId: string, landmarkId: string, i: number): CropSpecJson {
  return {
    pano_id: panoId,
    landmark_id: landmarkId,
    d_m: 250.0 + 40.0 * i,
    delta_alpha_deg: (i * 33.0) % 360,
    x_pix: 512.0 + i,
    h_pix: 48.0,
    elevation_deg: 5.0,
    box: {
      x_left: 500.0 + i,
      x_right: 524.0 + i,
      y_top: 488.0,
      y_bottom: 512.0,
      wrapped: false,
      clamped: false,
    },
  };
}

export interface Fixture {
  cropSpecsPath: string;
  cropsDir: string;
  queriesDir: string;
  specs: CropSpecJson[];
}

export function buildFixture(root: string, opts: { queryEqualsCrop?: boolean } = {}): Fixture {
  const cropsDir = join(root, 'crops');
  const queriesDir = join(root, 'queries');
  mkdirSync(cropsDir, { recursive: true });
  mkdirSync(queriesDir, { recursive: true });

  const specs: CropSpecJson[] = [];
  let i = 0;
  for (const pano of PANO_IDS) {
    for (const lm of LANDMARK_IDS) {
      specs.push(makeSpec(pano, lm, i));
      const img =
        opts.queryEqualsCrop && pano === PANO_IDS[0] && lm === 'lmA'
          ? patternImage(0)
          : flatImage(30 + 20 * i);
      writeFileSync(join(cropsDir, `${pano}__${lm}.pgm`), encodePgm(img));
      i += 1;
    }
  }
  writeFileSync(join(queriesDir, 'lmA.pgm'), encodePgm(patternImage(0)));
  writeFileSync(join(queriesDir, 'lmB.pgm'), encodePgm(patternImage(90)));

  const cropSpecsPath = join(root, 'cropspecs.jsonl');
  const lines = [JSON.stringify({ header: { schema: 'vistagraph-cropspec/1' } })];
  for (const spec of specs) lines.push(JSON.stringify(spec));
  writeFileSync(cropSpecsPath, lines.join('\n') + '\n');
  return { cropSpecsPath, cropsDir, queriesDir, specs };
}

export function writeEmptySpecs(root: string): string {
  mkdirSync(root, { recursive: true });
  const path = join(root, 'empty.jsonl');
  writeFileSync(path, JSON.stringify({ header: { schema: 'vistagraph-cropspec/1' } }) + '\n');
  return path;
}
