import { PNG } from 'pngjs'

export interface DecodedImage {
  width: number
  height: number
  /** RGBA, 4 bytes per pixel */
  data: Uint8Array
}

export class UndecodableImageError extends Error {}

export function decodePng(buf: Buffer): DecodedImage {
  let png: PNG
  try {
    png = PNG.sync.read(buf)
  } catch (e) {
    throw new UndecodableImageError(`not a decodable PNG: ${(e as Error).message}`)
  }
  return { width: png.width, height: png.height, data: png.data }
}

export function encodePng(img: DecodedImage): Buffer {
  const png = new PNG({ width: img.width, height: img.height })
  Buffer.from(img.data).copy(png.data)
  return PNG.sync.write(png)
}
