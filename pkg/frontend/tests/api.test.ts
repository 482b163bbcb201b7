import { describe, expect, it } from 'vitest';

import { createApiClient, ValidationRejected } from '../src/api.js';
import { makeRecord } from './stub-api.js';

interface Call {
  url: string;
  init?: RequestInit;
}

function fakeFetch(responses: Response[]): { calls: Call[]; fetch: typeof fetch } {
  const calls: Call[] = [];
  const impl = async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const next = responses.shift();
    if (!next) throw new Error('no scripted response left');
    return next;
  };
  return { calls, fetch: impl as typeof fetch };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

describe('createApiClient', () => {
  it('fetches the queue with status and paging parameters', async () => {
    const { calls, fetch } = fakeFetch([json({ total: 0, items: [] })]);
    const api = createApiClient('', fetch);
    const page = await api.fetchQueue('draft', 2, 10);
    expect(page).toEqual({ total: 0, items: [] });
    expect(calls[0].url).toBe('/api/queue?page=2&page_size=10&status=draft');
  });

  it('PUTs the full record as JSON to the record path', async () => {
    const record = makeRecord({ sequence: 'seq b', frame_index: 7 });
    const { calls, fetch } = fakeFetch([json(record)]);
    const api = createApiClient('http://reviewer:8787', fetch);
    await api.putRecord(record);
    expect(calls[0].url).toBe('http://reviewer:8787/api/records/seq%20b/7');
    expect(calls[0].init?.method).toBe('PUT');
    expect(JSON.parse(calls[0].init?.body as string)).toEqual(record);
  });

  it('turns a 422 into ValidationRejected carrying the findings', async () => {
    const findings = [{ rule: 'L4.anchor', severity: 'error', message: 'x', level: 4 }];
    const body = { detail: 'format errors block review', findings };
    const { fetch } = fakeFetch([json(body, 422), json(body, 422)]);
    const api = createApiClient('', fetch);
    await expect(api.putRecord(makeRecord())).rejects.toThrow(ValidationRejected);
    const err = await api.putRecord(makeRecord()).catch((e) => e);
    expect(err).toBeInstanceOf(ValidationRejected);
    expect((err as ValidationRejected).report.findings).toEqual(findings);
  });

  it('other HTTP errors raise plain errors with the status code', async () => {
    const { fetch } = fakeFetch([new Response('nope', { status: 404 })]);
    const api = createApiClient('', fetch);
    await expect(api.getRecord('seq-a', 3)).rejects.toThrow('request failed: 404');
  });

  it('POSTs dry-run validation and returns the report', async () => {
    const { calls, fetch } = fakeFetch([json({ findings: [] })]);
    const api = createApiClient('', fetch);
    const report = await api.validateDraft(makeRecord());
    expect(report.findings).toEqual([]);
    expect(calls[0].url).toBe('/api/validate');
    expect(calls[0].init?.method).toBe('POST');
  });

  it('builds frame URLs that match the service routes', () => {
    const api = createApiClient('', fakeFetch([]).fetch);
    expect(api.frameUrl('seq-a', 12)).toBe('/api/frames/seq-a/12');
  });
});
