#!/usr/bin/env node
/**
 * export --model NAME --images DIR --out FILE [--batch N] [--models-dir DIR]
 *
 * Extracts pooled backbone features from a class-per-directory image
 * folder into an SFDK v1 file. Exit codes: 0 ok, 1 runtime failure,
 * 2 usage error.
 */
import { parseArgs } from 'node:util'

import { exportFeatures } from './export'

async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv
  if (command !== 'export') {
    console.error('usage: sfuda-export export --model NAME --images DIR --out FILE [--batch N]')
    return 2
  }
  let values
  try {
    values = parseArgs({
      args: rest,
      options: {
        model: { type: 'string' },
        images: { type: 'string' },
        out: { type: 'string' },
        batch: { type: 'string', default: '16' },
        'models-dir': { type: 'string', default: 'models' },
      },
    }).values
  } catch (e) {
    console.error((e as Error).message)
    return 2
  }
  if (!values.model || !values.images || !values.out) {
    console.error('export requires --model, --images and --out')
    return 2
  }
  const batchSize = Number(values.batch)
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    console.error('--batch must be a positive integer')
    return 2
  }
  try {
    const report = await exportFeatures({
      modelName: values.model,
      imageRoot: values.images,
      outputPath: values.out,
      batchSize,
      modelsDir: values['models-dir'],
    })
    console.log(
      `wrote ${report.rows}x${report.cols} features for ${report.classNames.length} ` +
        `classes to ${values.out}` +
        (report.skipped ? ` (skipped ${report.skipped} undecodable)` : ''),
    )
    return 0
  } catch (e) {
    console.error(`sfuda-export: ${(e as Error).message}`)
    return 1
  }
}

main(process.argv.slice(2)).then(code => {
  process.exitCode = code
})
