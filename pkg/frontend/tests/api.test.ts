import { describe, expect, it } from 'vitest';

import { Api, ApiError } from '../src/api';

type Route = (input: string, init?: RequestInit) => Response | Promise<Response>;

function apiWith(route: Route): { api: Api; calls: string[] } {
  const calls: string[] = [];
  const api = new Api(async (input, init) => {
    calls.push(`${init?.method ?? 'GET'} ${input}`);
    return route(input, init);
  });
  return { api, calls };
}

function binary(bytes: ArrayBuffer, dims: string, voxel = '1.5'): Response {
  return new Response(bytes, {
    headers: { 'X-Dims': dims, 'X-Voxel-Size': voxel, 'Content-Type': 'application/octet-stream' }
  });
}

describe('slice decoding', () => {
  it('parses dims, voxel size, and little-endian float payloads', async () => {
    const values = Float32Array.from([1, 2, 3, 4, 5, 6]);
    const { api } = apiWith(() => binary(values.buffer.slice(0), '2,3'));
    const slice = await api.slice('s1', 'background', 0, 4);
    expect([slice.rows, slice.cols]).toEqual([2, 3]);
    expect(slice.voxelSize).toBe(1.5);
    expect([...slice.values]).toEqual([1, 2, 3, 4, 5, 6]);
  });

  it('appends the model parameter for relevance slices', async () => {
    const values = new Float32Array(1);
    const { api, calls } = apiWith(() => binary(values.buffer.slice(0), '1,1'));
    await api.slice('s1', 'relevance', 2, 7, 'net');
    expect(calls[0]).toBe('GET /api/slice/s1/relevance/2/7?model=net');
  });

  it('rejects payloads whose length disagrees with X-Dims', async () => {
    const { api } = apiWith(() => binary(new ArrayBuffer(8), '2,3'));
    await expect(api.slice('s1', 'background', 0, 0)).rejects.toThrow('expected 24');
  });

  it('rejects responses missing X-Dims', async () => {
    const { api } = apiWith(() => new Response(new ArrayBuffer(4)));
    await expect(api.slice('s1', 'background', 0, 0)).rejects.toThrow('X-Dims');
  });
});

describe('error envelopes', () => {
  it('surfaces the detail field and the HTTP status', async () => {
    const { api } = apiWith(
      () =>
        new Response(JSON.stringify({ error: 'conflict', detail: 'compute first' }), {
          status: 409,
          headers: { 'Content-Type': 'application/json' }
        })
    );
    const failure = api.clusters('s1', 'm1', 0.1, 1, 6);
    await expect(failure).rejects.toThrow('compute first');
    await expect(failure).rejects.toMatchObject({ status: 409 });
    await expect(failure).rejects.toBeInstanceOf(ApiError);
  });

  it('falls back to a generic message for non-JSON bodies', async () => {
    const { api } = apiWith(() => new Response('boom', { status: 500 }));
    await expect(api.participants()).rejects.toThrow('status 500');
  });
});

describe('volume assembly', () => {
  it('stacks axis-0 slices in order', async () => {
    const dims: [number, number, number] = [3, 2, 2];
    const { api, calls } = apiWith((input) => {
      const x = parseInt(input.split('/').pop()!, 10);
      const plane = Float32Array.from([x * 10, x * 10 + 1, x * 10 + 2, x * 10 + 3]);
      return binary(plane.buffer.slice(0), '2,2');
    });
    const volume = await api.volume('s1', 'background', dims);
    expect(volume.voxelSize).toBe(1.5);
    expect([...volume.data]).toEqual([0, 1, 2, 3, 10, 11, 12, 13, 20, 21, 22, 23]);
    expect(calls).toHaveLength(3);
  });

  it('rejects slices of the wrong shape', async () => {
    const { api } = apiWith(() => binary(new Float32Array(4).buffer.slice(0), '2,2'));
    await expect(api.volume('s1', 'background', [1, 4, 1])).rejects.toThrow('expected 4x1');
  });

  it('assembles byte masks the same way', async () => {
    const { api } = apiWith((input) => {
      const x = parseInt(input.split('/').pop()!, 10);
      return binary(Uint8Array.from([x, x]).buffer.slice(0) as ArrayBuffer, '1,2');
    });
    const mask = await api.maskVolume(1, [2, 1, 2]);
    expect([...mask]).toEqual([0, 0, 1, 1]);
  });
});

describe('json routes', () => {
  it('posts the relevance request body the service expects', async () => {
    let body = '';
    const { api, calls } = apiWith((_input, init) => {
      body = String(init?.body);
      return new Response(JSON.stringify({ map_id: 'x', dims: [2, 2, 2], slice_profiles: {} }), {
        headers: { 'Content-Type': 'application/json' }
      });
    });
    await api.computeRelevance('s3', 'm2');
    expect(calls[0]).toBe('POST /api/relevance');
    expect(JSON.parse(body)).toEqual({ subject_id: 's3', model_id: 'm2' });
  });

  it('encodes cluster query parameters', async () => {
    const { api, calls } = apiWith(
      () => new Response('{}', { headers: { 'Content-Type': 'application/json' } })
    );
    await api.clusters('s1', 'm1', 0.25, 12, 26);
    expect(calls[0]).toBe('GET /api/clusters/s1/m1?threshold=0.25&min_size=12&connectivity=26');
  });

  it('unwraps participants, models, and atlas lookups', async () => {
    const { api } = apiWith((input) => {
      if (input.includes('participants')) {
        return new Response(JSON.stringify({ participants: [{ id: 'a' }] }));
      }
      if (input.includes('models')) {
        return new Response(JSON.stringify({ models: [{ id: 'm' }] }));
      }
      return new Response(JSON.stringify({ region: 'target_core' }));
    });
    expect((await api.participants())[0].id).toBe('a');
    expect(await api.models()).toEqual(['m']);
    expect(await api.atlasLookup(1, 2, 3)).toBe('target_core');
  });
});
