// Typed client for the relevance service. Every method maps to one
// route; binary slice payloads are decoded from the X-Dims header.

export interface Participant {
  id: string;
  group: string;
  age: number;
  sex: string;
  tiv: number;
  field_strength: number;
  severity: number;
  amyloid: number | null;
  dims: [number, number, number];
  p_cn?: number;
  p_ad?: number;
}

export interface Prediction {
  subject_id: string;
  model_id: string;
  p_cn: number;
  p_ad: number;
}

export interface AxisProfile {
  pos: number[];
  neg: number[];
}

export type SliceProfiles = Record<string, AxisProfile>;

export interface RelevanceSummary {
  map_id: string;
  subject_id: string;
  model_id: string;
  target_class: number;
  dims: number[];
  total_relevance: number;
  max_abs_relevance: number;
  output_relevance: number;
  rule: string;
  slice_profiles: SliceProfiles;
}

export interface ClusterRow {
  label: number;
  size: number;
  volume_ml: number;
  sum_relevance: number;
  peak_value: number;
  peak_coord: [number, number, number];
}

export interface ClusterReport {
  subject_id: string;
  model_id: string;
  threshold: number;
  min_size: number;
  connectivity: number;
  n_clusters: number;
  clusters: ClusterRow[];
  histogram: { counts: number[]; edges: number[] };
  slice_profiles: SliceProfiles;
}

export interface AtlasInfo {
  dims: [number, number, number];
  voxel_size_mm: number;
  regions: Record<string, string>;
}

export interface SlicePayload {
  values: Float32Array;
  rows: number;
  cols: number;
  voxelSize: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

async function raise(response: Response): Promise<never> {
  let detail = `request failed with status ${response.status}`;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body, keep the generic message
  }
  throw new ApiError(response.status, detail);
}

function parseDims(response: Response): number[] {
  const header = response.headers.get('X-Dims');
  if (!header) throw new ApiError(502, 'slice response is missing X-Dims');
  return header.split(',').map((s) => parseInt(s, 10));
}

/** What the controller needs from the service; Api is the real
    implementation, tests substitute in-memory ones. */
export interface ApiSurface {
  participants(): Promise<Participant[]>;
  models(): Promise<string[]>;
  prediction(subjectId: string, modelId: string): Promise<Prediction>;
  computeRelevance(subjectId: string, modelId: string): Promise<RelevanceSummary>;
  slice(
    subjectId: string,
    kind: 'background' | 'relevance',
    axis: number,
    index: number,
    modelId?: string
  ): Promise<SlicePayload>;
  volume(
    subjectId: string,
    kind: 'background' | 'relevance',
    dims: [number, number, number],
    modelId?: string
  ): Promise<{ data: Float32Array; voxelSize: number }>;
  clusters(
    subjectId: string,
    modelId: string,
    threshold: number,
    minSize: number,
    connectivity: number
  ): Promise<ClusterReport>;
  atlas(): Promise<AtlasInfo>;
  atlasLookup(x: number, y: number, z: number): Promise<string>;
  maskVolume(regionId: number, dims: [number, number, number]): Promise<Uint8Array>;
}

export class Api implements ApiSurface {
  private fetchFn: FetchLike;
  private base: string;

  constructor(fetchFn?: FetchLike, base = '') {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
    this.base = base;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) await raise(response);
    return (await response.json()) as T;
  }

  async participants(): Promise<Participant[]> {
    const body = await this.json<{ participants: Participant[] }>('/api/participants');
    return body.participants;
  }

  async models(): Promise<string[]> {
    const body = await this.json<{ models: { id: string }[] }>('/api/models');
    return body.models.map((m) => m.id);
  }

  async prediction(subjectId: string, modelId: string): Promise<Prediction> {
    const q = encodeURIComponent(modelId);
    return this.json(`/api/prediction/${encodeURIComponent(subjectId)}?model=${q}`);
  }

  /** Triggers the server-side relevance computation; must run before
      any relevance slices are requested for the pair. */
  async computeRelevance(subjectId: string, modelId: string): Promise<RelevanceSummary> {
    return this.json('/api/relevance', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ subject_id: subjectId, model_id: modelId })
    });
  }

  async slice(
    subjectId: string,
    kind: 'background' | 'relevance',
    axis: number,
    index: number,
    modelId?: string
  ): Promise<SlicePayload> {
    let path = `/api/slice/${encodeURIComponent(subjectId)}/${kind}/${axis}/${index}`;
    if (modelId !== undefined) path += `?model=${encodeURIComponent(modelId)}`;
    const response = await this.fetchFn(this.base + path);
    if (!response.ok) await raise(response);
    const [rows, cols] = parseDims(response);
    const voxelSize = parseFloat(response.headers.get('X-Voxel-Size') ?? '1');
    const buffer = await response.arrayBuffer();
    if (buffer.byteLength !== rows * cols * 4) {
      throw new ApiError(502, `slice body has ${buffer.byteLength} bytes, expected ${rows * cols * 4}`);
    }
    return { values: new Float32Array(buffer), rows, cols, voxelSize };
  }

  /** Assembles the full volume by fetching every slice along axis 0.
      Slices along axis 0 are contiguous in C order, so the copies are
      plain block writes. */
  async volume(
    subjectId: string,
    kind: 'background' | 'relevance',
    dims: [number, number, number],
    modelId?: string
  ): Promise<{ data: Float32Array; voxelSize: number }> {
    const [dx, dy, dz] = dims;
    const plane = dy * dz;
    const data = new Float32Array(dx * plane);
    const slices = await Promise.all(
      Array.from({ length: dx }, (_, x) => this.slice(subjectId, kind, 0, x, modelId))
    );
    slices.forEach((payload, x) => {
      if (payload.rows !== dy || payload.cols !== dz) {
        throw new ApiError(502, `slice ${x} is ${payload.rows}x${payload.cols}, expected ${dy}x${dz}`);
      }
      data.set(payload.values, x * plane);
    });
    return { data, voxelSize: slices.length ? slices[0].voxelSize : 1 };
  }

  async clusters(
    subjectId: string,
    modelId: string,
    threshold: number,
    minSize: number,
    connectivity: number
  ): Promise<ClusterReport> {
    const path =
      `/api/clusters/${encodeURIComponent(subjectId)}/${encodeURIComponent(modelId)}` +
      `?threshold=${threshold}&min_size=${minSize}&connectivity=${connectivity}`;
    return this.json(path);
  }

  async atlas(): Promise<AtlasInfo> {
    return this.json('/api/atlas');
  }

  async atlasLookup(x: number, y: number, z: number): Promise<string> {
    const body = await this.json<{ region: string }>(`/api/atlas/lookup?x=${x}&y=${y}&z=${z}`);
    return body.region;
  }

  /** Region mask as one byte per voxel, assembled like volume(). */
  async maskVolume(regionId: number, dims: [number, number, number]): Promise<Uint8Array> {
    const [dx, dy, dz] = dims;
    const plane = dy * dz;
    const out = new Uint8Array(dx * plane);
    const bodies = await Promise.all(
      Array.from({ length: dx }, async (_, x) => {
        const response = await this.fetchFn(`${this.base}/api/atlas/mask/${regionId}/0/${x}`);
        if (!response.ok) await raise(response);
        const [rows, cols] = parseDims(response);
        if (rows !== dy || cols !== dz) {
          throw new ApiError(502, `mask slice ${x} is ${rows}x${cols}, expected ${dy}x${dz}`);
        }
        return new Uint8Array(await response.arrayBuffer());
      })
    );
    bodies.forEach((body, x) => out.set(body, x * plane));
    return out;
  }
}
