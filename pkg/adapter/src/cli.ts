#!/usr/bin/env node
/** CLI wrapper: vistagraph-adapter --cropspecs specs.jsonl --out det.jsonl ... */

import { parseArgs } from 'node:util';

import { runAdapter } from './adapter.js';

const { values } = parseArgs({
  options: {
    cropspecs: { type: 'string' },
    out: { type: 'string' },
    model: { type: 'string', default: 'histsim' },
    tau: { type: 'string', default: '0.5' },
    'crops-dir': { type: 'string' },
    'panos-dir': { type: 'string' },
    'queries-dir': { type: 'string' },
    schema: { type: 'string' },
  },
});

if (!values.cropspecs || !values.out) {
  console.error(
    'usage: vistagraph-adapter --cropspecs specs.jsonl --out detections.jsonl ' +
      '[--model stub:<v>|hash|histsim] [--tau 0.5] ' +
      '[--crops-dir DIR | --panos-dir DIR] [--queries-dir DIR]',
  );
  process.exit(2);
}

try {
  const result = runAdapter({
    cropSpecsPath: values.cropspecs,
    outPath: values.out,
    model: values.model!,
    tau: Number(values.tau),
    cropsDir: values['crops-dir'],
    panosDir: values['panos-dir'],
    queriesDir: values['queries-dir'],
    schemaPath: values.schema,
  });
  const visible = result.records.filter((r) => r.visible).length;
  console.log(
    `wrote ${result.records.length} records (${visible} visible, ` +
      `${result.errors.length} image errors) -> ${values.out}`,
  );
} catch (err) {
  console.error(`error: ${(err as Error).message}`);
  process.exit(2);
}
