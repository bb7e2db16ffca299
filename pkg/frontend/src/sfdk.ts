/**
 * SFDK v1 writer/reader.
 *
 * Layout (little-endian): magic "SFDK", u32 version = 1, u64 rows,
 * u64 cols, u32 flags (bit 0 = has labels), rows*cols float32 row-major,
 * then rows int32 labels when flagged (-1 = unlabeled).
 */
import { readFileSync, writeFileSync } from 'node:fs'

export const SFDK_MAGIC = 'SFDK'
export const SFDK_VERSION = 1
export const FLAG_HAS_LABELS = 0x1
const HEADER_BYTES = 4 + 4 + 8 + 8 + 4

export interface FeatureDataset {
  rows: number
  cols: number
  /** row-major, rows*cols entries */
  features: Float32Array
  /** null means fully unlabeled */
  labels: Int32Array | null
}

export class SfdkFormatError extends Error {}

export function encodeSfdk(ds: FeatureDataset): Buffer {
  const { rows, cols, features, labels } = ds
  if (rows < 1 || cols < 1) {
    throw new SfdkFormatError(`dataset must be at least 1x1, got ${rows}x${cols}`)
  }
  if (features.length !== rows * cols) {
    throw new SfdkFormatError(
      `payload length ${features.length} != rows*cols = ${rows * cols}`,
    )
  }
  for (const v of features) {
    if (!Number.isFinite(v)) throw new SfdkFormatError('non-finite feature value')
  }
  const hasLabels = labels !== null && labels.some(l => l !== -1)
  if (labels !== null && labels.length !== rows) {
    throw new SfdkFormatError(`label count ${labels.length} != rows ${rows}`)
  }
  const total = HEADER_BYTES + rows * cols * 4 + (hasLabels ? rows * 4 : 0)
  const buf = Buffer.alloc(total)
  buf.write(SFDK_MAGIC, 0, 'ascii')
  buf.writeUInt32LE(SFDK_VERSION, 4)
  buf.writeBigUInt64LE(BigInt(rows), 8)
  buf.writeBigUInt64LE(BigInt(cols), 16)
  buf.writeUInt32LE(hasLabels ? FLAG_HAS_LABELS : 0, 24)
  let off = HEADER_BYTES
  for (const v of features) {
    buf.writeFloatLE(v, off)
    off += 4
  }
  if (hasLabels) {
    for (const l of labels!) {
      buf.writeInt32LE(l, off)
      off += 4
    }
  }
  return buf
}

export function writeSfdk(ds: FeatureDataset, path: string): void {
  writeFileSync(path, encodeSfdk(ds))
}

export function decodeSfdk(buf: Buffer): FeatureDataset {
  if (buf.length < HEADER_BYTES) throw new SfdkFormatError('header truncated')
  if (buf.toString('ascii', 0, 4) !== SFDK_MAGIC) {
    throw new SfdkFormatError('bad magic')
  }
  const version = buf.readUInt32LE(4)
  if (version !== SFDK_VERSION) {
    throw new SfdkFormatError(`unsupported version ${version}`)
  }
  const rows = Number(buf.readBigUInt64LE(8))
  const cols = Number(buf.readBigUInt64LE(16))
  const flags = buf.readUInt32LE(24)
  if (flags & ~FLAG_HAS_LABELS) {
    throw new SfdkFormatError(`unknown flag bits 0x${(flags & ~FLAG_HAS_LABELS).toString(16)}`)
  }
  const hasLabels = (flags & FLAG_HAS_LABELS) !== 0
  const expected = HEADER_BYTES + rows * cols * 4 + (hasLabels ? rows * 4 : 0)
  if (buf.length !== expected) {
    throw new SfdkFormatError(`size mismatch: declared ${expected} bytes, file has ${buf.length}`)
  }
  const features = new Float32Array(rows * cols)
  let off = HEADER_BYTES
  for (let i = 0; i < rows * cols; i++) {
    features[i] = buf.readFloatLE(off)
    off += 4
  }
  let labels: Int32Array | null = null
  if (hasLabels) {
    labels = new Int32Array(rows)
    for (let i = 0; i < rows; i++) {
      labels[i] = buf.readInt32LE(off)
      off += 4
    }
  }
  return { rows, cols, features, labels }
}

export function readSfdk(path: string): FeatureDataset {
  return decodeSfdk(readFileSync(path))
}
