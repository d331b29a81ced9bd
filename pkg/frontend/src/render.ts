// Pure rasterization: slice values in, RGBA bytes out. Nothing here
// touches the DOM, so every painting rule is unit-testable.

import { Slice2D } from './grid';

export interface Raster {
  width: number;
  height: number;
  data: Uint8ClampedArray;
}

export function blankRaster(width: number, height: number): Raster {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

/** Map t in [0, 1] to the classic black-red-yellow-white ramp. */
export function hotColor(t: number): [number, number, number] {
  const r = Math.min(1, 3 * t);
  const g = Math.min(1, Math.max(0, 3 * t - 1));
  const b = Math.min(1, Math.max(0, 3 * t - 2));
  return [r * 255, g * 255, b * 255];
}

/** Negative relevance gets the mirrored cold ramp so signed rules read
    at a glance; with the default rule the map is nonnegative and this
    branch never fires. */
export function coldColor(t: number): [number, number, number] {
  const b = Math.min(1, 3 * t);
  const g = Math.min(1, Math.max(0, 3 * t - 1));
  const r = Math.min(1, Math.max(0, 3 * t - 2));
  return [r * 255, g * 255, b * 255];
}

/** Grayscale under a fixed window; lo/hi come from the subject's whole
    volume so sliding through slices never rescales the anatomy. */
export function paintBackground(slice: Slice2D, lo: number, hi: number): Raster {
  const raster = blankRaster(slice.cols, slice.rows);
  const span = hi > lo ? hi - lo : 1;
  for (let i = 0; i < slice.values.length; i++) {
    const t = Math.min(1, Math.max(0, (slice.values[i] - lo) / span));
    const gray = Math.round(t * 255);
    const o = i * 4;
    raster.data[o] = gray;
    raster.data[o + 1] = gray;
    raster.data[o + 2] = gray;
    raster.data[o + 3] = 255;
  }
  return raster;
}

export interface OverlayOptions {
  /** Normalization anchor: the volume-wide max |relevance|. */
  maxAbs: number;
  /** Cutoff on the normalized scale; magnitudes strictly below it stay
      fully transparent. */
  threshold: number;
  /** 0 opaque, 1 invisible. */
  transparency: number;
}

/** Blend the relevance overlay into a background raster in place.
    Exactly-zero voxels never paint: there is nothing to show, and it
    keeps threshold 0 from tinting empty space black. */
export function paintOverlay(raster: Raster, slice: Slice2D, options: OverlayOptions): void {
  if (raster.width !== slice.cols || raster.height !== slice.rows) {
    throw new Error('overlay slice does not match raster size');
  }
  const { maxAbs, threshold, transparency } = options;
  if (maxAbs <= 0) return;
  const alpha = Math.min(1, Math.max(0, 1 - transparency));
  if (alpha === 0) return;
  for (let i = 0; i < slice.values.length; i++) {
    const v = slice.values[i];
    if (v === 0) continue;
    const t = Math.abs(v) / maxAbs;
    if (t < threshold) continue;
    const [r, g, b] = v > 0 ? hotColor(t) : coldColor(t);
    const o = i * 4;
    raster.data[o] = Math.round(raster.data[o] * (1 - alpha) + r * alpha);
    raster.data[o + 1] = Math.round(raster.data[o + 1] * (1 - alpha) + g * alpha);
    raster.data[o + 2] = Math.round(raster.data[o + 2] * (1 - alpha) + b * alpha);
    raster.data[o + 3] = 255;
  }
}

/** Count of overlay-visible pixels under the same rule paintOverlay
    applies; the sliders are tested against this. */
export function visibleCount(slice: Slice2D, options: OverlayOptions): number {
  const { maxAbs, threshold, transparency } = options;
  if (maxAbs <= 0 || transparency >= 1) return 0;
  let n = 0;
  for (let i = 0; i < slice.values.length; i++) {
    const v = slice.values[i];
    if (v !== 0 && Math.abs(v) / maxAbs >= threshold) n++;
  }
  return n;
}

/** Trace the border of a binary mask: a set pixel with any unset or
    out-of-image 4-neighbour. */
export function outlinePixels(mask: Uint8Array, rows: number, cols: number): Uint8Array {
  const border = new Uint8Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const i = r * cols + c;
      if (!mask[i]) continue;
      const edge =
        r === 0 || c === 0 || r === rows - 1 || c === cols - 1 ||
        !mask[i - cols] || !mask[i + cols] || !mask[i - 1] || !mask[i + 1];
      if (edge) border[i] = 1;
    }
  }
  return border;
}

export function paintOutline(raster: Raster, border: Uint8Array, rgb: [number, number, number]): void {
  for (let i = 0; i < border.length; i++) {
    if (!border[i]) continue;
    const o = i * 4;
    raster.data[o] = rgb[0];
    raster.data[o + 1] = rgb[1];
    raster.data[o + 2] = rgb[2];
    raster.data[o + 3] = 255;
  }
}

/** Crosshair as one highlighted row and column. */
export function paintCrosshair(raster: Raster, row: number, col: number, rgb: [number, number, number]): void {
  const { width, height, data } = raster;
  const mix = (o: number) => {
    data[o] = Math.round(data[o] * 0.4 + rgb[0] * 0.6);
    data[o + 1] = Math.round(data[o + 1] * 0.4 + rgb[1] * 0.6);
    data[o + 2] = Math.round(data[o + 2] * 0.4 + rgb[2] * 0.6);
    data[o + 3] = 255;
  };
  if (row >= 0 && row < height) {
    for (let c = 0; c < width; c++) mix((row * width + c) * 4);
  }
  if (col >= 0 && col < width) {
    for (let r = 0; r < height; r++) mix((r * width + col) * 4);
  }
}
