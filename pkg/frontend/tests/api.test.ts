import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';

import invalidFixture from './fixtures/query_invalid_422.json';

describe('ApiClient', () => {
  it('surfaces the server 422 detail verbatim', async () => {
    const client = new ApiClient('', (async () =>
      new Response(JSON.stringify(invalidFixture), { status: 422 })) as typeof fetch);
    let caught: unknown;
    try {
      await client.query({ sequence_id: 's', description: { torso_primary_color: 'crimson' } });
    } catch (error) {
      caught = error;
    }
    expect(caught).toBeInstanceOf(ApiError);
    const apiError = caught as ApiError;
    expect(apiError.status).toBe(422);
    expect(apiError.detail).toBe("unknown label 'crimson' in colors");
  });

  it('posts the query as JSON to /api/query', async () => {
    const calls: { url: string; init?: RequestInit }[] = [];
    const client = new ApiClient('http://host', (async (url: string, init?: RequestInit) => {
      calls.push({ url, init });
      return new Response(
        JSON.stringify({ sequence_id: 's', description: {}, results: [] }),
        { status: 200 },
      );
    }) as typeof fetch);
    await client.query({ sequence_id: 's', description: { gender: 'male' } });
    expect(calls[0].url).toBe('http://host/api/query');
    expect(calls[0].init?.method).toBe('POST');
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({
      sequence_id: 's',
      description: { gender: 'male' },
    });
  });

  it('falls back to status text when the error body is not JSON', async () => {
    const client = new ApiClient('', (async () =>
      new Response('boom', { status: 500, statusText: 'Internal Server Error' })) as typeof fetch);
    await expect(client.getSequences()).rejects.toMatchObject({
      status: 500,
      detail: 'Internal Server Error',
    });
  });
});
