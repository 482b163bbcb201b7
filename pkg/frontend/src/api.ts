/** Thin client over the annotation service HTTP API. */

import type { AnnotationRecord, QueuePage, ValidationReport } from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Raised when the server rejects a write with format findings (HTTP 422). */
export class ValidationRejected extends Error {
  report: ValidationReport;

  constructor(report: ValidationReport) {
    super('format errors block review');
    this.report = report;
  }
}

export interface ApiClient {
  fetchQueue(status?: string, page?: number, pageSize?: number): Promise<QueuePage>;
  getRecord(sequence: string, frameIndex: number): Promise<AnnotationRecord>;
  putRecord(record: AnnotationRecord): Promise<AnnotationRecord>;
  validateDraft(record: AnnotationRecord): Promise<ValidationReport>;
  frameUrl(sequence: string, frameIndex: number): string;
}

async function expectOk(response: Response): Promise<Response> {
  if (response.ok) return response;
  if (response.status === 422) {
    const body = await response.json();
    throw new ValidationRejected({ findings: body.findings ?? [] });
  }
  throw new Error(`request failed: ${response.status}`);
}

export function createApiClient(baseUrl = '', fetchImpl?: FetchLike): ApiClient {
  const doFetch: FetchLike = fetchImpl ?? ((url, init) => fetch(url, init));

  return {
    async fetchQueue(status?: string, page = 0, pageSize = 50): Promise<QueuePage> {
      const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
      if (status) params.set('status', status);
      const response = await expectOk(await doFetch(`${baseUrl}/api/queue?${params}`));
      return response.json();
    },

    async getRecord(sequence: string, frameIndex: number): Promise<AnnotationRecord> {
      const response = await expectOk(
        await doFetch(`${baseUrl}/api/records/${encodeURIComponent(sequence)}/${frameIndex}`),
      );
      return response.json();
    },

    async putRecord(record: AnnotationRecord): Promise<AnnotationRecord> {
      const response = await expectOk(
        await doFetch(
          `${baseUrl}/api/records/${encodeURIComponent(record.sequence)}/${record.frame_index}`,
          {
            method: 'PUT',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(record),
          },
        ),
      );
      return response.json();
    },

    async validateDraft(record: AnnotationRecord): Promise<ValidationReport> {
      const response = await expectOk(
        await doFetch(`${baseUrl}/api/validate`, {
          method: 'POST',
          headers: { 'Content-Type': 'application/json' },
          body: JSON.stringify(record),
        }),
      );
      return response.json();
    },

    frameUrl(sequence: string, frameIndex: number): string {
      return `${baseUrl}/api/frames/${encodeURIComponent(sequence)}/${frameIndex}`;
    },
  };
}
