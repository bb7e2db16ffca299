/**
 * Deterministic test fixtures: a small convolutional backbone saved in
 * tfjs format, plus seeded class-per-directory PNG folders.
 */
import * as tf from '@tensorflow/tfjs'
import { mkdirSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'

import { dirSaveHandler } from '../src/model'
import { encodePng } from '../src/png'

export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/**
 * Build and save a fixed-weight backbone: two strided conv layers and a
 * global average pool, emitting a `featureDim`-wide vector.
 */
export async function buildMicroBackbone(
  dir: string,
  opts: { inputSize?: number; featureDim?: number; seed?: number } = {},
): Promise<void> {
  const inputSize = opts.inputSize ?? 16
  const featureDim = opts.featureDim ?? 8
  const model = tf.sequential({
    layers: [
      tf.layers.conv2d({
        inputShape: [inputSize, inputSize, 3],
        filters: 6,
        kernelSize: 3,
        strides: 2,
        activation: 'relu',
        padding: 'same',
      }),
      tf.layers.conv2d({
        filters: featureDim,
        kernelSize: 3,
        strides: 2,
        activation: 'relu',
        padding: 'same',
      }),
      tf.layers.globalAveragePooling2d({}),
    ],
  })
  const rand = mulberry32(opts.seed ?? 12345)
  const seeded = model.getWeights().map(w => {
    const values = new Float32Array(w.size)
    for (let i = 0; i < values.length; i++) values[i] = rand() - 0.5
    return tf.tensor(values, w.shape as number[])
  })
  model.setWeights(seeded)
  seeded.forEach(t => t.dispose())
  await model.save(dirSaveHandler(dir))
  writeFileSync(join(dir, 'meta.json'), JSON.stringify({ inputSize }))
  model.dispose()
}

/** Seeded RGBA image: class-dependent base color plus pixel noise. */
function classImage(
  width: number,
  height: number,
  classIndex: number,
  rand: () => number,
): Uint8Array {
  const base = [(classIndex * 90 + 40) % 256, (classIndex * 150 + 90) % 256, 200 - classIndex * 60]
  const data = new Uint8Array(width * height * 4)
  for (let i = 0; i < width * height; i++) {
    for (let c = 0; c < 3; c++) {
      const noise = Math.floor(rand() * 80) - 40
      data[i * 4 + c] = Math.min(255, Math.max(0, base[c] + noise))
    }
    data[i * 4 + 3] = 255
  }
  return data
}

export function writeClassImages(
  root: string,
  classNames: string[],
  perClass: number,
  opts: { width?: number; height?: number; seed?: number } = {},
): void {
  const width = opts.width ?? 20
  const height = opts.height ?? 24
  const rand = mulberry32(opts.seed ?? 777)
  classNames.forEach((name, classIndex) => {
    const dir = join(root, name)
    mkdirSync(dir, { recursive: true })
    for (let i = 0; i < perClass; i++) {
      const data = classImage(width, height, classIndex, rand)
      writeFileSync(join(dir, `img_${i}.png`), encodePng({ width, height, data }))
    }
  })
}
