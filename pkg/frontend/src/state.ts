// Viewer state and its invariants.

export interface ViewState {
  subjectId: string | null;
  modelId: string | null;
  crosshair: [number, number, number];
  /** Relevance cutoff on the normalized max-abs scale. */
  threshold: number;
  minClusterSize: number;
  /** Overlay transparency, 0 opaque to 1 hidden. */
  transparency: number;
  /** Atlas region id to outline, or null for none. */
  outlineRegion: number | null;
}

export const THRESHOLD_RANGE: [number, number] = [0, 1];
export const TRANSPARENCY_RANGE: [number, number] = [0, 1];
export const MIN_CLUSTER_RANGE: [number, number] = [1, 250];

export function initialState(): ViewState {
  return {
    subjectId: null,
    modelId: null,
    crosshair: [0, 0, 0],
    threshold: 0.2,
    minClusterSize: 10,
    transparency: 0.25,
    outlineRegion: null
  };
}

export function clamp(value: number, range: [number, number]): number {
  if (Number.isNaN(value)) return range[0];
  return Math.min(range[1], Math.max(range[0], value));
}

export function clampCrosshair(
  point: [number, number, number],
  dims: [number, number, number]
): [number, number, number] {
  return [0, 1, 2].map((a) =>
    Math.min(dims[a] - 1, Math.max(0, Math.round(point[a])))
  ) as [number, number, number];
}

export function centerOf(dims: [number, number, number]): [number, number, number] {
  return [dims[0] >> 1, dims[1] >> 1, dims[2] >> 1];
}
