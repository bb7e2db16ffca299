import { describe, expect, it } from 'vitest'

import { decodeSfdk, encodeSfdk, SfdkFormatError } from '../src/sfdk'

function dataset(rows: number, cols: number, labels: number[] | null = null) {
  const features = new Float32Array(rows * cols).map((_, i) => i + 0.5)
  return {
    rows,
    cols,
    features,
    labels: labels ? Int32Array.from(labels) : null,
  }
}

describe('sfdk encoding', () => {
  it('lays out the header byte-exactly', () => {
    const buf = encodeSfdk(dataset(1, 1, [0]))
    // 28-byte header + 1 float + 1 label = 36
    expect(buf.length).toBe(36)
    expect(buf.toString('ascii', 0, 4)).toBe('SFDK')
    expect(buf.readUInt32LE(4)).toBe(1)
    expect(Number(buf.readBigUInt64LE(8))).toBe(1)
    expect(Number(buf.readBigUInt64LE(16))).toBe(1)
    expect(buf.readUInt32LE(24)).toBe(1)
  })

  it('omits the label block when fully unlabeled', () => {
    const buf = encodeSfdk(dataset(2, 3, [-1, -1]))
    expect(buf.length).toBe(28 + 2 * 3 * 4)
    expect(buf.readUInt32LE(24)).toBe(0)
    const unlabeled = encodeSfdk(dataset(2, 3, null))
    expect(unlabeled.equals(buf)).toBe(true)
  })

  it('round-trips', () => {
    const ds = dataset(4, 3, [0, 1, -1, 2])
    const back = decodeSfdk(encodeSfdk(ds))
    expect(back.rows).toBe(4)
    expect(back.cols).toBe(3)
    expect(Array.from(back.labels!)).toEqual([0, 1, -1, 2])
    expect(Array.from(back.features)).toEqual(Array.from(ds.features))
  })

  it('rejects non-finite values and size lies', () => {
    const bad = dataset(1, 2, [0])
    bad.features[1] = Number.NaN
    expect(() => encodeSfdk(bad)).toThrow(SfdkFormatError)

    const buf = encodeSfdk(dataset(2, 2, [0, 1]))
    expect(() => decodeSfdk(buf.subarray(0, buf.length - 3))).toThrow(SfdkFormatError)
    expect(() => decodeSfdk(Buffer.concat([buf, Buffer.alloc(1)]))).toThrow(SfdkFormatError)
    const wrongMagic = Buffer.from(buf)
    wrongMagic.write('XXXX', 0, 'ascii')
    expect(() => decodeSfdk(wrongMagic)).toThrow(/magic/)
  })
})
