/** Crop-spec input and Detection JSONL output framing (header line + records). */

import { readFileSync, writeFileSync, mkdirSync } from 'node:fs';
import { dirname } from 'node:path';

import { DetectionRecordJson, SCHEMA_ID } from './schema.js';

export const CROPSPEC_SCHEMA_ID = 'vistagraph-cropspec/1';

export interface CropSpecJson {
  pano_id: string;
  landmark_id: string;
  d_m: number;
  delta_alpha_deg: number;
  x_pix: number;
  h_pix: number;
  elevation_deg: number;
  box: {
    x_left: number;
    x_right: number;
    y_top: number;
    y_bottom: number;
    wrapped: boolean;
    clamped: boolean;
  };
}

export interface AdapterError {
  pano_id: string;
  landmark_id: string;
  reason: string;
}

export function readCropSpecs(path: string): CropSpecJson[] {
  const lines = readFileSync(path, 'utf-8')
    .split('\n')
    .filter((l) => l.trim().length > 0);
  if (lines.length === 0) {
    throw new Error(`${path}: empty crop-spec file (header line required)`);
  }
  const head = JSON.parse(lines[0]) as { header?: { schema?: string } };
  if (head.header?.schema !== CROPSPEC_SCHEMA_ID) {
    throw new Error(`${path}: expected header schema ${CROPSPEC_SCHEMA_ID}`);
  }
  return lines.slice(1).map((l) => JSON.parse(l) as CropSpecJson);
}

export function writeDetections(
  path: string,
  records: DetectionRecordJson[],
  meta: Record<string, unknown> = {},
  errors: AdapterError[] = [],
): void {
  const ordered = [...records].sort((a, b) =>
    a.pano_id === b.pano_id
      ? a.landmark_id.localeCompare(b.landmark_id)
      : a.pano_id.localeCompare(b.pano_id),
  );
  const header = { header: { schema: SCHEMA_ID, errors, ...meta } };
  const lines = [JSON.stringify(header), ...ordered.map((r) => JSON.stringify(r))];
  mkdirSync(dirname(path), { recursive: true });
  writeFileSync(path, lines.join('\n') + '\n', 'utf-8');
}

export function readDetections(path: string): {
  header: Record<string, unknown>;
  records: DetectionRecordJson[];
} {
  const lines = readFileSync(path, 'utf-8')
    .split('\n')
    .filter((l) => l.trim().length > 0);
  if (lines.length === 0) throw new Error(`${path}: empty detection file`);
  const head = JSON.parse(lines[0]) as { header?: Record<string, unknown> };
  if (!head.header || head.header['schema'] !== SCHEMA_ID) {
    throw new Error(`${path}: expected header schema ${SCHEMA_ID}`);
  }
  return {
    header: head.header,
    records: lines.slice(1).map((l) => JSON.parse(l) as DetectionRecordJson),
  };
}
