/**
 * Class-per-directory image folders and the deterministic evaluation
 * transform (center crop to square, bilinear resize to the model's
 * native resolution, pixels scaled to [0, 1]).
 */
import * as tf from '@tensorflow/tfjs'
import { readdirSync } from 'node:fs'
import { join } from 'node:path'

import { DecodedImage } from './png'

const IMAGE_EXTENSIONS = new Set(['.png'])

export interface ImageEntry {
  classIndex: number
  className: string
  fileName: string
  path: string
}

export class EmptyClassDirError extends Error {}

function isImageFile(name: string): boolean {
  const dot = name.lastIndexOf('.')
  return dot >= 0 && IMAGE_EXTENSIONS.has(name.slice(dot).toLowerCase())
}

/**
 * Enumerate images grouped by class directory. Class indices follow the
 * lexicographically sorted directory names; files are sorted within each
 * class, so row order is reproducible.
 */
export function listImageFolder(root: string): {
  entries: ImageEntry[]
  classNames: string[]
} {
  const classNames = readdirSync(root, { withFileTypes: true })
    .filter(d => d.isDirectory())
    .map(d => d.name)
    .sort()
  if (classNames.length === 0) {
    throw new EmptyClassDirError(`${root} contains no class directories`)
  }
  const entries: ImageEntry[] = []
  classNames.forEach((className, classIndex) => {
    const dir = join(root, className)
    const files = readdirSync(dir).filter(isImageFile).sort()
    if (files.length === 0) {
      throw new EmptyClassDirError(`class directory ${dir} contains no images`)
    }
    for (const fileName of files) {
      entries.push({ classIndex, className, fileName, path: join(dir, fileName) })
    }
  })
  return { entries, classNames }
}

/** RGBA image -> [size, size, 3] float tensor in [0, 1]. */
export function toInputTensor(img: DecodedImage, size: number): tf.Tensor3D {
  const side = Math.min(img.width, img.height)
  const x0 = Math.floor((img.width - side) / 2)
  const y0 = Math.floor((img.height - side) / 2)
  const rgb = new Float32Array(side * side * 3)
  for (let y = 0; y < side; y++) {
    for (let x = 0; x < side; x++) {
      const src = ((y + y0) * img.width + (x + x0)) * 4
      const dst = (y * side + x) * 3
      rgb[dst] = img.data[src] / 255
      rgb[dst + 1] = img.data[src + 1] / 255
      rgb[dst + 2] = img.data[src + 2] / 255
    }
  }
  return tf.tidy(() => {
    const cropped = tf.tensor3d(rgb, [side, side, 3])
    return side === size
      ? cropped
      : tf.image.resizeBilinear(cropped, [size, size])
  })
}
