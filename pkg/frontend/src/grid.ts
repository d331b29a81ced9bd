// Client-side 3D grids in C order and the slice extraction the three
// panes are painted from.

type Voxels = Float32Array | Uint8Array;

export interface Grid<T extends Voxels = Float32Array> {
  dims: [number, number, number];
  data: T;
}

export interface Slice2D<T extends Voxels = Float32Array> {
  values: T;
  rows: number;
  cols: number;
}

export function makeGrid<T extends Voxels>(dims: [number, number, number], data: T): Grid<T> {
  const [dx, dy, dz] = dims;
  if (data.length !== dx * dy * dz) {
    throw new Error(`grid data has ${data.length} values, dims say ${dx * dy * dz}`);
  }
  return { dims, data };
}

export function valueAt(grid: Grid<Voxels>, x: number, y: number, z: number): number {
  const [, dy, dz] = grid.dims;
  return grid.data[(x * dy + y) * dz + z];
}

/** 2D slice orthogonal to `axis`; rows/cols follow the remaining axes
    in order, matching what the service sends for the same request. */
export function extractSlice<T extends Voxels>(grid: Grid<T>, axis: 0 | 1 | 2, index: number): Slice2D<T> {
  const [dx, dy, dz] = grid.dims;
  const data = grid.data;
  if (index < 0 || index >= grid.dims[axis]) {
    throw new Error(`index ${index} outside axis ${axis} of ${grid.dims}`);
  }
  if (axis === 0) {
    const plane = dy * dz;
    return { values: data.slice(index * plane, (index + 1) * plane) as T, rows: dy, cols: dz };
  }
  if (axis === 1) {
    const values = new (data.constructor as { new (n: number): T })(dx * dz);
    for (let x = 0; x < dx; x++) {
      const src = (x * dy + index) * dz;
      values.set(data.subarray(src, src + dz), x * dz);
    }
    return { values, rows: dx, cols: dz };
  }
  const values = new (data.constructor as { new (n: number): T })(dx * dy);
  for (let x = 0; x < dx; x++) {
    for (let y = 0; y < dy; y++) {
      values[x * dy + y] = data[(x * dy + y) * dz + index];
    }
  }
  return { values, rows: dx, cols: dy };
}

export function minMax(data: Float32Array): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < data.length; i++) {
    const v = data[i];
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}

export function maxAbs(data: Float32Array): number {
  let peak = 0;
  for (let i = 0; i < data.length; i++) {
    const a = Math.abs(data[i]);
    if (a > peak) peak = a;
  }
  return peak;
}
