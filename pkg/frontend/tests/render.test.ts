import { describe, expect, it } from 'vitest';

import { Slice2D } from '../src/grid';
import {
  coldColor,
  hotColor,
  outlinePixels,
  paintBackground,
  paintCrosshair,
  paintOutline,
  paintOverlay,
  visibleCount
} from '../src/render';

function slice(values: number[], rows: number, cols: number): Slice2D {
  return { values: Float32Array.from(values), rows, cols };
}

describe('colormaps', () => {
  it('hot runs black to white and is monotone per channel', () => {
    expect(hotColor(0)).toEqual([0, 0, 0]);
    expect(hotColor(1)).toEqual([255, 255, 255]);
    let prev = hotColor(0);
    for (let i = 1; i <= 20; i++) {
      const next = hotColor(i / 20);
      for (let c = 0; c < 3; c++) expect(next[c]).toBeGreaterThanOrEqual(prev[c]);
      prev = next;
    }
  });

  it('cold mirrors hot with red and blue swapped', () => {
    for (let i = 0; i <= 10; i++) {
      const h = hotColor(i / 10);
      const c = coldColor(i / 10);
      expect(c[0]).toBe(h[2]);
      expect(c[1]).toBe(h[1]);
      expect(c[2]).toBe(h[0]);
    }
  });
});

describe('background painting', () => {
  it('maps the window ends to black and white and clips outside', () => {
    const raster = paintBackground(slice([10, 20, 30, 5, 35, 20], 2, 3), 10, 30);
    const gray = (i: number) => raster.data[i * 4];
    expect(gray(0)).toBe(0);
    expect(gray(1)).toBe(128);
    expect(gray(2)).toBe(255);
    expect(gray(3)).toBe(0); // below window clips
    expect(gray(4)).toBe(255); // above window clips
    for (let i = 0; i < 6; i++) {
      expect(raster.data[i * 4 + 3]).toBe(255);
      expect(raster.data[i * 4 + 1]).toBe(raster.data[i * 4]);
      expect(raster.data[i * 4 + 2]).toBe(raster.data[i * 4]);
    }
  });

  it('survives a degenerate window', () => {
    const raster = paintBackground(slice([7, 7], 1, 2), 7, 7);
    expect(raster.data[0]).toBe(0);
  });
});

describe('overlay painting', () => {
  const base = () => paintBackground(slice([0, 0, 0, 0], 2, 2), 0, 1);

  it('threshold 1 hides everything except an exact-maximum voxel', () => {
    const values = slice([0.2, 0.5, 0.9, 1.0], 2, 2);
    expect(visibleCount(values, { maxAbs: 1.0, threshold: 1.0, transparency: 0 })).toBe(1);
    const without = slice([0.2, 0.5, 0.9, 0.99], 2, 2);
    expect(visibleCount(without, { maxAbs: 1.0, threshold: 1.0, transparency: 0 })).toBe(0);

    const raster = base();
    paintOverlay(raster, without, { maxAbs: 1.0, threshold: 1.0, transparency: 0 });
    expect([...raster.data]).toEqual([...base().data]);
  });

  it('threshold 0 paints every nonzero voxel and never zeros', () => {
    const values = slice([0, 0.1, -0.4, 1.0], 2, 2);
    expect(visibleCount(values, { maxAbs: 1.0, threshold: 0, transparency: 0 })).toBe(3);
    const raster = base();
    paintOverlay(raster, values, { maxAbs: 1.0, threshold: 0, transparency: 0 });
    expect(raster.data[0]).toBe(0); // zero voxel untouched
    expect(raster.data[3]).toBe(255);
  });

  it('uses hot for positive and cold for negative values', () => {
    const raster = base();
    paintOverlay(raster, slice([1.0, -1.0, 0, 0], 2, 2), {
      maxAbs: 1.0,
      threshold: 0,
      transparency: 0
    });
    expect([...raster.data.slice(0, 3)]).toEqual([255, 255, 255]);
    const neg = [...raster.data.slice(4, 7)];
    expect(neg).toEqual([255, 255, 255]); // full magnitude is white in both ramps
    const rasterHalf = base();
    paintOverlay(rasterHalf, slice([0.4, -0.4, 0, 0], 2, 2), {
      maxAbs: 1.0,
      threshold: 0,
      transparency: 0
    });
    const pos = [...rasterHalf.data.slice(0, 3)];
    const cold = [...rasterHalf.data.slice(4, 7)];
    expect(pos[0]).toBeGreaterThan(pos[2]); // red-leaning
    expect(cold[2]).toBeGreaterThan(cold[0]); // blue-leaning
    expect(cold[2]).toBe(pos[0]);
  });

  it('transparency 1 leaves the raster untouched, partial blends linearly', () => {
    const values = slice([1.0, 1.0, 1.0, 1.0], 2, 2);
    const untouched = base();
    paintOverlay(untouched, values, { maxAbs: 1, threshold: 0, transparency: 1 });
    expect([...untouched.data]).toEqual([...base().data]);

    const half = base();
    paintOverlay(half, values, { maxAbs: 1, threshold: 0, transparency: 0.5 });
    expect(half.data[0]).toBe(128); // 0 * 0.5 + 255 * 0.5, rounded
  });

  it('identical inputs rasterize identically', () => {
    const values = slice([0.3, 0.6, -0.2, 0.05], 2, 2);
    const options = { maxAbs: 0.6, threshold: 0.1, transparency: 0.3 };
    const a = base();
    const b = base();
    paintOverlay(a, values, options);
    paintOverlay(b, values, options);
    expect([...a.data]).toEqual([...b.data]);
  });

  it('an all-zero map renders no overlay at any threshold', () => {
    const values = slice([0, 0, 0, 0], 2, 2);
    expect(visibleCount(values, { maxAbs: 0, threshold: 0, transparency: 0 })).toBe(0);
    const raster = base();
    paintOverlay(raster, values, { maxAbs: 0, threshold: 0, transparency: 0 });
    expect([...raster.data]).toEqual([...base().data]);
  });
});

describe('outline and crosshair', () => {
  it('marks only border pixels of a filled square', () => {
    const mask = new Uint8Array(25);
    for (let r = 1; r <= 3; r++) {
      for (let c = 1; c <= 3; c++) mask[r * 5 + c] = 1;
    }
    const border = outlinePixels(mask, 5, 5);
    expect(border[1 * 5 + 1]).toBe(1);
    expect(border[1 * 5 + 2]).toBe(1);
    expect(border[2 * 5 + 2]).toBe(0); // interior
    expect(border[0]).toBe(0); // outside the mask
    let count = 0;
    for (const b of border) count += b;
    expect(count).toBe(8);
  });

  it('treats the image edge as a border', () => {
    const mask = new Uint8Array(9).fill(1);
    const border = outlinePixels(mask, 3, 3);
    expect(border[4]).toBe(0);
    let count = 0;
    for (const b of border) count += b;
    expect(count).toBe(8);
  });

  it('paints outline and crosshair pixels opaquely', () => {
    const raster = paintBackground(slice(new Array(9).fill(0), 3, 3), 0, 1);
    const border = new Uint8Array(9);
    border[4] = 1;
    paintOutline(raster, border, [80, 220, 120]);
    expect([...raster.data.slice(16, 20)]).toEqual([80, 220, 120, 255]);
    paintCrosshair(raster, 0, 0, [100, 100, 100]);
    expect(raster.data[3]).toBe(255);
  });
});
