/**
 * Feature export: run every image in a class-per-directory folder
 * through a backbone and write the pooled features as an SFDK v1 file
 * the adaptation kit reads directly.
 */
import * as tf from '@tensorflow/tfjs'
import { readFileSync } from 'node:fs'

import { listImageFolder, toInputTensor } from './images'
import { loadBackbone } from './model'
import { decodePng } from './png'
import { writeSfdk } from './sfdk'

export interface ExportJob {
  modelName: string
  imageRoot: string
  outputPath: string
  batchSize?: number
  modelsDir?: string
}

export interface ExportReport {
  rows: number
  cols: number
  classNames: string[]
  labels: Int32Array
  /** undecodable images skipped with a warning */
  skipped: number
}

export async function exportFeatures(job: ExportJob): Promise<ExportReport> {
  const batchSize = job.batchSize ?? 16
  if (batchSize < 1) throw new RangeError('batchSize must be >= 1')
  const backbone = await loadBackbone(job.modelName, job.modelsDir ?? 'models')
  const { entries, classNames } = listImageFolder(job.imageRoot)

  const tensors: tf.Tensor3D[] = []
  const labels: number[] = []
  let skipped = 0
  for (const entry of entries) {
    let decoded
    try {
      decoded = decodePng(readFileSync(entry.path))
    } catch (e) {
      console.warn(`skipping ${entry.path}: ${(e as Error).message}`)
      skipped += 1
      continue
    }
    tensors.push(toInputTensor(decoded, backbone.meta.inputSize))
    labels.push(entry.classIndex)
  }
  if (tensors.length === 0) {
    throw new Error(`no decodable images under ${job.imageRoot}`)
  }

  const rows = tensors.length
  const cols = backbone.featureDim
  const features = new Float32Array(rows * cols)
  for (let start = 0; start < rows; start += batchSize) {
    const chunk = tensors.slice(start, start + batchSize)
    const batch = tf.stack(chunk)
    const out = backbone.model.predict(batch) as tf.Tensor
    const values = (await out.data()) as Float32Array
    features.set(values, start * cols)
    batch.dispose()
    out.dispose()
  }
  tensors.forEach(t => t.dispose())

  const labelArr = Int32Array.from(labels)
  writeSfdk({ rows, cols, features, labels: labelArr }, job.outputPath)
  return { rows, cols, classNames, labels: labelArr, skipped }
}
