// Geometry for the per-slice relevance profiles and the cluster-size
// histogram. Pure: pixel coordinates out, canvas drawing stays in main.

export interface Point {
  x: number;
  y: number;
}

export interface ProfileGeometry {
  pos: Point[];
  neg: Point[];
  baselineY: number;
  /** Vertical marker at the crosshair's slice index. */
  markerX: number;
}

/** Lay out one axis profile in a width x height viewport. The positive
    series rises above the baseline, the negative one hangs below it;
    both share one scale so their magnitudes compare directly. The neg
    values arrive as sums of negative voxels, i.e. already <= 0. */
export function profileGeometry(
  pos: number[],
  neg: number[],
  markerIndex: number,
  width: number,
  height: number
): ProfileGeometry {
  const n = Math.max(pos.length, 1);
  let peak = 0;
  for (const v of pos) peak = Math.max(peak, v);
  for (const v of neg) peak = Math.max(peak, -v);
  if (peak === 0) peak = 1;
  const baselineY = height / 2;
  const xAt = (i: number) => (n === 1 ? width / 2 : (i / (n - 1)) * width);
  const scale = (height / 2 - 2) / peak;
  return {
    pos: pos.map((v, i) => ({ x: xAt(i), y: baselineY - v * scale })),
    neg: neg.map((v, i) => ({ x: xAt(i), y: baselineY - v * scale })),
    baselineY,
    markerX: xAt(Math.min(Math.max(markerIndex, 0), n - 1))
  };
}

export interface Bar {
  x: number;
  y: number;
  w: number;
  h: number;
}

/** Histogram bars from bin counts and edges, bottom-anchored. */
export function histogramBars(
  counts: number[],
  edges: number[],
  width: number,
  height: number
): Bar[] {
  if (counts.length === 0) return [];
  const lo = edges[0];
  const hi = edges[edges.length - 1];
  const span = hi > lo ? hi - lo : 1;
  let top = 0;
  for (const c of counts) top = Math.max(top, c);
  if (top === 0) top = 1;
  return counts.map((count, i) => {
    const x0 = ((edges[i] - lo) / span) * width;
    const x1 = ((edges[i + 1] - lo) / span) * width;
    const h = (count / top) * (height - 2);
    return { x: x0, y: height - h, w: Math.max(1, x1 - x0 - 1), h };
  });
}

/** Invert profileGeometry's x mapping: which slice index a click hit. */
export function indexFromX(x: number, count: number, width: number): number {
  if (count <= 1) return 0;
  const i = Math.round((x / width) * (count - 1));
  return Math.min(count - 1, Math.max(0, i));
}
