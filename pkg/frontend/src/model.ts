/**
 * Backbone loading/saving for tfjs layers models stored on disk.
 *
 * A model directory holds the usual tfjs artifacts (model.json plus
 * weight shards) and a meta.json with the preprocessing contract:
 * { "inputSize": <square input resolution> }. Models are resolved by
 * directory name under a models root.
 */
import * as tf from '@tensorflow/tfjs'
import { existsSync, mkdirSync, readFileSync, writeFileSync } from 'node:fs'
import { join } from 'node:path'

export interface BackboneMeta {
  inputSize: number
}

export interface Backbone {
  name: string
  model: tf.LayersModel
  meta: BackboneMeta
  /** width of the pooled feature vector the model emits */
  featureDim: number
}

export class UnknownModelError extends Error {}

function concatToArrayBuffer(buffers: Buffer[]): ArrayBuffer {
  const total = buffers.reduce((n, b) => n + b.length, 0)
  const out = new Uint8Array(total)
  let off = 0
  for (const b of buffers) {
    out.set(b, off)
    off += b.length
  }
  return out.buffer
}

/** tf.io handler reading model.json + weight shards from a directory. */
export function dirLoadHandler(dir: string): tf.io.IOHandler {
  return {
    load: async () => {
      const raw = JSON.parse(readFileSync(join(dir, 'model.json'), 'utf8'))
      const manifest = raw.weightsManifest as Array<{
        paths: string[]
        weights: tf.io.WeightsManifestEntry[]
      }>
      const weightSpecs = manifest.flatMap(g => g.weights)
      const shards = manifest.flatMap(g => g.paths).map(p => readFileSync(join(dir, p)))
      return {
        modelTopology: raw.modelTopology,
        format: raw.format,
        generatedBy: raw.generatedBy,
        convertedBy: raw.convertedBy,
        weightSpecs,
        weightData: concatToArrayBuffer(shards),
      }
    },
  }
}

/** tf.io handler writing model.json + a single weights.bin shard. */
export function dirSaveHandler(dir: string): tf.io.IOHandler {
  return {
    save: async (artifacts: tf.io.ModelArtifacts) => {
      mkdirSync(dir, { recursive: true })
      const weightData = artifacts.weightData as ArrayBuffer
      writeFileSync(join(dir, 'weights.bin'), Buffer.from(weightData))
      const modelJSON = {
        modelTopology: artifacts.modelTopology,
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
        convertedBy: artifacts.convertedBy,
        weightsManifest: [
          { paths: ['weights.bin'], weights: artifacts.weightSpecs },
        ],
      }
      writeFileSync(join(dir, 'model.json'), JSON.stringify(modelJSON))
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON' as const,
        },
      }
    },
  }
}

export async function loadBackbone(name: string, modelsDir: string): Promise<Backbone> {
  const dir = join(modelsDir, name)
  if (!existsSync(join(dir, 'model.json'))) {
    throw new UnknownModelError(`no model named '${name}' under ${modelsDir}`)
  }
  const model = await tf.loadLayersModel(dirLoadHandler(dir))
  const meta = JSON.parse(readFileSync(join(dir, 'meta.json'), 'utf8')) as BackboneMeta
  const shape = model.outputs[0].shape
  const featureDim = shape[shape.length - 1]
  if (typeof featureDim !== 'number') {
    throw new UnknownModelError(`model '${name}' has no fixed feature width`)
  }
  return { name, model, meta, featureDim }
}
