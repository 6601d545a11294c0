/**
 * Detection JSONL contract, driven by the shared schema file at
 * ../schema/detection.schema.json. The validator interprets the subset of
 * JSON Schema that file uses (object/number/string/boolean types, required,
 * additionalProperties, numeric bounds, minLength), so adapter output is
 * checked against the very artifact the core publishes.
 */

import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

export const SCHEMA_ID = 'vistagraph-detection/1';

export interface ZoomBoxJson {
  x_left: number;
  x_right: number;
  y_top: number;
  y_bottom: number;
  wrapped: boolean;
  clamped: boolean;
}

export interface DetectionRecordJson {
  pano_id: string;
  landmark_id: string;
  score: number;
  visible: boolean;
  tau: number;
  box: ZoomBoxJson;
  d_m: number;
  delta_alpha_deg: number;
  detector_id: string;
}

type JsonSchema = {
  type?: string;
  required?: string[];
  additionalProperties?: boolean;
  properties?: Record<string, JsonSchema>;
  minimum?: number;
  maximum?: number;
  exclusiveMaximum?: number;
  minLength?: number;
};

export function defaultSchemaPath(): string {
  const here = dirname(fileURLToPath(import.meta.url));
  // adapter/dist/src -> repository root/schema
  return join(here, '..', '..', '..', 'schema', 'detection.schema.json');
}

export function loadSchema(path: string = defaultSchemaPath()): JsonSchema {
  return JSON.parse(readFileSync(path, 'utf-8')) as JsonSchema;
}

function checkValue(value: unknown, schema: JsonSchema, where: string, errors: string[]): void {
  switch (schema.type) {
    case 'object': {
      if (typeof value !== 'object' || value === null || Array.isArray(value)) {
        errors.push(`${where}: expected object`);
        return;
      }
      const obj = value as Record<string, unknown>;
      for (const key of schema.required ?? []) {
        if (!(key in obj)) errors.push(`${where}: missing required key '${key}'`);
      }
      const props = schema.properties ?? {};
      for (const key of Object.keys(obj)) {
        if (!(key in props)) {
          if (schema.additionalProperties === false) {
            errors.push(`${where}: unexpected key '${key}'`);
          }
          continue;
        }
        checkValue(obj[key], props[key], `${where}.${key}`, errors);
      }
      return;
    }
    case 'number': {
      if (typeof value !== 'number' || Number.isNaN(value)) {
        errors.push(`${where}: expected number`);
        return;
      }
      if (schema.minimum !== undefined && value < schema.minimum) {
        errors.push(`${where}: ${value} < minimum ${schema.minimum}`);
      }
      if (schema.maximum !== undefined && value > schema.maximum) {
        errors.push(`${where}: ${value} > maximum ${schema.maximum}`);
      }
      if (schema.exclusiveMaximum !== undefined && value >= schema.exclusiveMaximum) {
        errors.push(`${where}: ${value} >= exclusiveMaximum ${schema.exclusiveMaximum}`);
      }
      return;
    }
    case 'string': {
      if (typeof value !== 'string') {
        errors.push(`${where}: expected string`);
        return;
      }
      if (schema.minLength !== undefined && value.length < schema.minLength) {
        errors.push(`${where}: shorter than minLength ${schema.minLength}`);
      }
      return;
    }
    case 'boolean': {
      if (typeof value !== 'boolean') errors.push(`${where}: expected boolean`);
      return;
    }
    default:
      errors.push(`${where}: unsupported schema type '${schema.type}'`);
  }
}

/** Validate one record against the shared schema; returns error strings. */
export function validateRecord(obj: unknown, schema: JsonSchema): string[] {
  const errors: string[] = [];
  checkValue(obj, schema, 'record', errors);
  // the one cross-field rule the schema states in prose
  if (typeof obj === 'object' && obj !== null) {
    const rec = obj as Partial<DetectionRecordJson>;
    if (
      typeof rec.score === 'number' &&
      typeof rec.tau === 'number' &&
      typeof rec.visible === 'boolean' &&
      rec.visible !== rec.score >= rec.tau
    ) {
      errors.push('record: visible flag inconsistent with score >= tau');
    }
  }
  return errors;
}
