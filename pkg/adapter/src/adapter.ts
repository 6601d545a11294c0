/**
 * Adapter core: crop specs + images in, schema-valid Detection JSONL out.
 *
 * One record per (pano, landmark) crop spec, ordered by (pano_id,
 * landmark_id). Unreadable or missing images do not abort the run: the
 * record is emitted with score 0 and the failure is listed under
 * header.errors, keeping record lines schema-pure. A schema violation in
 * assembled output is a hard failure.
 */

import { existsSync } from 'node:fs';
import { join } from 'node:path';

import { GrayImage, cropBox, readNetpbm } from './images.js';
import { AdapterError, CropSpecJson, readCropSpecs, writeDetections } from './jsonl.js';
import { DetectionRecordJson, loadSchema, validateRecord } from './schema.js';
import { Scorer, makeScorer } from './scorer.js';

export const ADAPTER_VERSION = '0.1.0';

export interface AdapterConfig {
  cropSpecsPath: string;
  outPath: string;
  model: string; // stub:<v> | hash | histsim
  tau: number;
  cropsDir?: string; // pre-cropped {pano_id}__{landmark_id}.pgm
  panosDir?: string; // full panoramas {pano_id}.pgm, cropped to each record's box
  queriesDir?: string; // {landmark_id}.pgm
  schemaPath?: string;
}

export interface AdapterResult {
  records: DetectionRecordJson[];
  errors: AdapterError[];
}

function cropPath(dir: string, spec: CropSpecJson): string {
  return join(dir, `${spec.pano_id}__${spec.landmark_id}.pgm`);
}

function loadImage(path: string): GrayImage | undefined {
  if (!existsSync(path)) return undefined;
  return readNetpbm(path);
}

export function runAdapter(config: AdapterConfig): AdapterResult {
  if (!(config.tau >= 0 && config.tau <= 1)) {
    throw new Error(`tau must be in [0, 1], got ${config.tau}`);
  }
  const scorer: Scorer = makeScorer(config.model);
  const specs = readCropSpecs(config.cropSpecsPath);
  const schema = loadSchema(config.schemaPath);
  const detectorId = `${scorer.id}@${ADAPTER_VERSION}`;

  const queryCache = new Map<string, GrayImage | undefined>();
  const records: DetectionRecordJson[] = [];
  const errors: AdapterError[] = [];

  for (const spec of specs) {
    let score = 0;
    if (scorer.needsImages) {
      if ((!config.cropsDir && !config.panosDir) || !config.queriesDir) {
        throw new Error(
          `model '${config.model}' needs --queries-dir plus --crops-dir or --panos-dir`,
        );
      }
      try {
        let crop: GrayImage | undefined;
        if (config.cropsDir) {
          crop = loadImage(cropPath(config.cropsDir, spec));
        }
        if (!crop && config.panosDir) {
          const pano = loadImage(join(config.panosDir, `${spec.pano_id}.pgm`));
          if (pano) crop = cropBox(pano, spec.box);
        }
        if (!crop) throw new Error('crop image missing or unreadable');
        if (!queryCache.has(spec.landmark_id)) {
          queryCache.set(spec.landmark_id, loadImage(join(config.queriesDir, `${spec.landmark_id}.pgm`)));
        }
        const query = queryCache.get(spec.landmark_id);
        if (!query) throw new Error('query image missing or unreadable');
        score = scorer.score(spec.pano_id, spec.landmark_id, crop, query);
      } catch (err) {
        errors.push({
          pano_id: spec.pano_id,
          landmark_id: spec.landmark_id,
          reason: (err as Error).message,
        });
        score = 0;
      }
    } else {
      score = scorer.score(spec.pano_id, spec.landmark_id);
    }
    const record: DetectionRecordJson = {
      pano_id: spec.pano_id,
      landmark_id: spec.landmark_id,
      score,
      visible: score >= config.tau,
      tau: config.tau,
      box: spec.box,
      d_m: spec.d_m,
      delta_alpha_deg: spec.delta_alpha_deg,
      detector_id: detectorId,
    };
    const problems = validateRecord(record, schema);
    if (problems.length > 0) {
      throw new Error(
        `assembled record violates the shared schema (${spec.pano_id}/${spec.landmark_id}): ` +
          problems.join('; '),
      );
    }
    records.push(record);
  }

  writeDetections(
    config.outPath,
    records,
    { detector_id: detectorId, adapter_version: ADAPTER_VERSION, model: config.model },
    errors,
  );
  return { records, errors };
}
