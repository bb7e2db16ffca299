import { spawnSync } from 'node:child_process'
import { cpSync, mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { buildMicroBackbone, writeClassImages } from '../scripts/fixture'
import { exportFeatures } from '../src/export'
import { EmptyClassDirError } from '../src/images'
import { UnknownModelError } from '../src/model'
import { readSfdk } from '../src/sfdk'

const PYTHON = process.env.PYTHON ?? 'python3'
const FEATURE_DIM = 8

let root: string
let modelsDir: string
let imagesDir: string

beforeAll(async () => {
  root = mkdtempSync(join(tmpdir(), 'sfuda-export-'))
  modelsDir = join(root, 'models')
  imagesDir = join(root, 'images')
  await buildMicroBackbone(join(modelsDir, 'micro-8'), {
    inputSize: 16,
    featureDim: FEATURE_DIM,
    seed: 2024,
  })
  writeClassImages(imagesDir, ['cats', 'dogs'], 3, { seed: 31 })
}, 60_000)

afterAll(() => {
  rmSync(root, { recursive: true, force: true })
})

describe('exportFeatures', () => {
  it('writes a 6-row SFDK with labels by sorted class directory', async () => {
    const out = join(root, 'features.sfdk')
    const report = await exportFeatures({
      modelName: 'micro-8',
      imageRoot: imagesDir,
      outputPath: out,
      modelsDir,
    })
    expect(report.rows).toBe(6)
    expect(report.cols).toBe(FEATURE_DIM)
    expect(report.classNames).toEqual(['cats', 'dogs'])
    expect(Array.from(report.labels)).toEqual([0, 0, 0, 1, 1, 1])
    expect(report.skipped).toBe(0)

    const back = readSfdk(out)
    expect(back.rows).toBe(6)
    expect(back.cols).toBe(FEATURE_DIM)
    expect(Array.from(back.labels!)).toEqual([0, 0, 0, 1, 1, 1])
    for (const v of back.features) expect(Number.isFinite(v)).toBe(true)
  }, 60_000)

  it('is accepted by the adaptation kit reader with matching shape', async () => {
    const out = join(root, 'accept.sfdk')
    await exportFeatures({
      modelName: 'micro-8',
      imageRoot: imagesDir,
      outputPath: out,
      modelsDir,
    })
    const probe = spawnSync(
      PYTHON,
      [
        '-c',
        'import json, sys\n' +
          'from sfuda.io import read_sfdk\n' +
          'd = read_sfdk(sys.argv[1])\n' +
          'print(json.dumps({"shape": list(d.features.shape), "labels": d.labels.tolist()}))',
        out,
      ],
      { encoding: 'utf8' },
    )
    expect(probe.status, probe.stderr).toBe(0)
    const parsed = JSON.parse(probe.stdout)
    expect(parsed.shape).toEqual([6, FEATURE_DIM])
    expect(parsed.labels).toEqual([0, 0, 0, 1, 1, 1])
  }, 60_000)

  it('feeds the kit CLI end to end (self-pair probe)', async () => {
    const out = join(root, 'probe.sfdk')
    await exportFeatures({
      modelName: 'micro-8',
      imageRoot: imagesDir,
      outputPath: out,
      modelsDir,
    })
    const probe = spawnSync(
      PYTHON,
      ['-m', 'sfuda.cli', 'probe', '--source', out, '--target', out],
      { encoding: 'utf8' },
    )
    expect(probe.status, probe.stderr).toBe(0)
    const row = probe.stdout.trim().split('\n')[1].split(',')
    expect(Number(row[8])).toBe(0) // delta of a self pair
  }, 60_000)

  it('skips undecodable images with a warning count', async () => {
    const broken = join(root, 'broken-images')
    cpSync(imagesDir, broken, { recursive: true })
    writeFileSync(join(broken, 'cats', 'garbage.png'), Buffer.from('not a png'))
    const out = join(root, 'skip.sfdk')
    const report = await exportFeatures({
      modelName: 'micro-8',
      imageRoot: broken,
      outputPath: out,
      modelsDir,
    })
    expect(report.rows).toBe(6)
    expect(report.skipped).toBe(1)
    expect(Array.from(report.labels)).toEqual([0, 0, 0, 1, 1, 1])
  }, 60_000)

  it('is deterministic on fixed weights', async () => {
    const a = join(root, 'det-a.sfdk')
    const b = join(root, 'det-b.sfdk')
    await exportFeatures({ modelName: 'micro-8', imageRoot: imagesDir, outputPath: a, modelsDir })
    await exportFeatures({
      modelName: 'micro-8',
      imageRoot: imagesDir,
      outputPath: b,
      modelsDir,
      batchSize: 2,
    })
    const bytesA = readFileSync(a)
    const bytesB = readFileSync(b)
    // label block identical; features equal within the inference stack's tolerance
    expect(bytesA.subarray(bytesA.length - 24).equals(bytesB.subarray(bytesB.length - 24))).toBe(true)
    const fa = readSfdk(a).features
    const fb = readSfdk(b).features
    for (let i = 0; i < fa.length; i++) expect(Math.abs(fa[i] - fb[i])).toBeLessThan(1e-5)
  }, 60_000)

  it('rejects unknown models and empty class dirs', async () => {
    await expect(
      exportFeatures({
        modelName: 'nope',
        imageRoot: imagesDir,
        outputPath: join(root, 'x.sfdk'),
        modelsDir,
      }),
    ).rejects.toThrow(UnknownModelError)
    const bare = join(root, 'bare')
    writeClassImages(bare, ['only'], 1)
    rmSync(join(bare, 'only', 'img_0.png'))
    await expect(
      exportFeatures({
        modelName: 'micro-8',
        imageRoot: bare,
        outputPath: join(root, 'y.sfdk'),
        modelsDir,
      }),
    ).rejects.toThrow(EmptyClassDirError)
  }, 60_000)

  it('works through the command line', async () => {
    const out = join(root, 'cli.sfdk')
    const run = spawnSync(
      'node',
      [
        join(__dirname, '..', 'dist', 'cli.js'),
        'export',
        '--model',
        'micro-8',
        '--images',
        imagesDir,
        '--out',
        out,
        '--batch',
        '4',
        '--models-dir',
        modelsDir,
      ],
      { encoding: 'utf8' },
    )
    expect(run.status, run.stderr).toBe(0)
    expect(run.stdout).toContain('wrote 6x8 features')
    expect(readSfdk(out).rows).toBe(6)

    const usage = spawnSync('node', [join(__dirname, '..', 'dist', 'cli.js')], {
      encoding: 'utf8',
    })
    expect(usage.status).toBe(2)
  }, 60_000)
})
