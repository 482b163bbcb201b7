/**
 * Review-flow state machine: walk the draft queue, edit the four guidance
 * levels with live validation, and submit records as reviewed or flagged.
 *
 * The controller is DOM-free so the flow is unit-testable; rendering and
 * keyboard wiring live in main.ts.
 */

import type { ApiClient } from './api.js';
import { ValidationRejected } from './api.js';
import type {
  AnnotationRecord,
  AnnotationStatus,
  Level,
  QueueItem,
  ValidationReport,
} from './types.js';
import { LEVELS, hasErrors } from './types.js';

export type LevelEdits = Partial<Record<Level, string>>;

export interface ReviewViewState {
  queue: QueueItem[];
  queueTotal: number;
  statusFilter: string | undefined;
  cursor: number;
  /** Server copy of the open record; edits are layered on top, not written in. */
  record: AnnotationRecord | null;
  edits: LevelEdits;
  report: ValidationReport | null;
  /** True while a network failure is pending retry; edits are kept. */
  retryBanner: boolean;
  /** True when the server copy moved under us; caller should offer reload. */
  conflict: boolean;
  busy: boolean;
}

export class ReviewController {
  private api: ApiClient;
  state: ReviewViewState = {
    queue: [],
    queueTotal: 0,
    statusFilter: 'draft',
    cursor: -1,
    record: null,
    edits: {},
    report: null,
    retryBanner: false,
    conflict: false,
    busy: false,
  };
  onChange: (state: ReviewViewState) => void = () => {};

  constructor(api: ApiClient) {
    this.api = api;
  }

  private emit(): void {
    this.onChange(this.state);
  }

  /** Load the queue for the active filter and auto-open the first entry. */
  async loadQueue(statusFilter: string | undefined = this.state.statusFilter): Promise<void> {
    this.state.statusFilter = statusFilter;
    this.state.busy = true;
    this.emit();
    try {
      const page = await this.api.fetchQueue(statusFilter);
      this.state.queue = page.items;
      this.state.queueTotal = page.total;
      this.state.retryBanner = false;
      this.state.busy = false;
      if (page.items.length > 0) {
        await this.open(0);
      } else {
        this.state.cursor = -1;
        this.state.record = null;
        this.state.edits = {};
        this.state.report = null;
        this.emit();
      }
    } catch {
      this.state.busy = false;
      this.state.retryBanner = true;
      this.emit();
    }
  }

  /** Open the queue entry at `index`; discards edits from the previous record. */
  async open(index: number): Promise<void> {
    const item = this.state.queue[index];
    if (!item) return;
    this.state.busy = true;
    this.emit();
    try {
      const record = await this.api.getRecord(item.sequence, item.frame_index);
      this.state.cursor = index;
      this.state.record = record;
      this.state.edits = {};
      this.state.report = record.validation ?? null;
      this.state.conflict = false;
      this.state.retryBanner = false;
    } catch {
      this.state.retryBanner = true;
    }
    this.state.busy = false;
    this.emit();
  }

  next(): Promise<void> {
    return this.open(Math.min(this.state.cursor + 1, this.state.queue.length - 1));
  }

  prev(): Promise<void> {
    return this.open(Math.max(this.state.cursor - 1, 0));
  }

  /** Record a per-level edit; an edit equal to the server text is dropped. */
  edit(level: Level, text: string): void {
    if (!this.state.record) return;
    if (text === this.state.record[`level${level}`]) {
      delete this.state.edits[level];
    } else {
      this.state.edits[level] = text;
    }
    this.emit();
  }

  isDirty(): boolean {
    return Object.keys(this.state.edits).length > 0;
  }

  /** Current text for a level: the pending edit if any, else the server copy. */
  currentText(level: Level): string {
    if (!this.state.record) return '';
    return this.state.edits[level] ?? this.state.record[`level${level}`];
  }

  /**
   * Server record with pending edits applied. Fields the user did not touch
   * are carried over verbatim from the server copy.
   */
  merged(status?: AnnotationStatus): AnnotationRecord {
    if (!this.state.record) throw new Error('no record open');
    const out: AnnotationRecord = { ...this.state.record };
    for (const level of LEVELS) {
      const edit = this.state.edits[level];
      if (edit !== undefined) out[`level${level}`] = edit;
    }
    if (status) out.status = status;
    return out;
  }

  /** Dry-run format check against the server; updates the live report. */
  async validate(): Promise<ValidationReport | null> {
    if (!this.state.record) return null;
    try {
      const report = await this.api.validateDraft(this.merged());
      this.state.report = report;
      this.state.retryBanner = false;
      this.emit();
      return report;
    } catch {
      this.state.retryBanner = true;
      this.emit();
      return null;
    }
  }

  /** A record may go out as reviewed only with zero error findings. */
  canSubmitReviewed(): boolean {
    return this.state.report !== null && !hasErrors(this.state.report);
  }

  /**
   * Persist the merged record. On success the queue entry is refreshed (and
   * drops out of a draft-filtered queue), cursor advances to the next entry.
   * A 422 puts the findings in the live report; a network failure raises the
   * retry banner; in both cases local edits are preserved.
   */
  async submit(status: AnnotationStatus): Promise<boolean> {
    const record = this.state.record;
    if (!record) return false;
    this.state.busy = true;
    this.emit();
    try {
      const latest = await this.api.getRecord(record.sequence, record.frame_index);
      if (latest.updated !== record.updated) {
        this.state.conflict = true;
        this.state.busy = false;
        this.emit();
        return false;
      }
      const stored = await this.api.putRecord(this.merged(status));
      this.state.record = stored;
      this.state.edits = {};
      this.state.report = stored.validation ?? null;
      this.state.retryBanner = false;
      const removed = this.applyToQueue(stored);
      this.state.busy = false;
      this.emit();
      if (removed && this.state.queue.length > 0) {
        // The finished record left the filtered queue; its slot now holds
        // the next pending entry, so re-open at the same cursor.
        await this.open(this.state.cursor);
      }
      return true;
    } catch (err) {
      this.state.busy = false;
      if (err instanceof ValidationRejected) {
        this.state.report = err.report;
      } else {
        this.state.retryBanner = true;
      }
      this.emit();
      return false;
    }
  }

  /** Re-fetch the open record, abandoning local edits (conflict recovery). */
  async reload(): Promise<void> {
    if (this.state.cursor >= 0) await this.open(this.state.cursor);
  }

  private applyToQueue(stored: AnnotationRecord): boolean {
    const i = this.state.queue.findIndex(
      (q) => q.sequence === stored.sequence && q.frame_index === stored.frame_index,
    );
    if (i < 0) return false;
    if (this.state.statusFilter && stored.status !== this.state.statusFilter) {
      this.state.queue.splice(i, 1);
      this.state.queueTotal -= 1;
      if (this.state.cursor >= this.state.queue.length) {
        this.state.cursor = this.state.queue.length - 1;
      }
      return true;
    } else {
      this.state.queue[i] = {
        sequence: stored.sequence,
        frame_index: stored.frame_index,
        status: stored.status,
        updated: stored.updated,
      };
      return false;
    }
  }
}
