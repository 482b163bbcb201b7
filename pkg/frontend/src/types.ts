/** Shared types mirroring the annotation service's JSON payloads. */

export type AnnotationStatus = 'draft' | 'reviewed' | 'flagged';

export type Level = 1 | 2 | 3 | 4;

export const LEVELS: Level[] = [1, 2, 3, 4];

export interface AnnotationRecord {
  sequence: string;
  frame_index: number;
  level1: string;
  level2: string;
  level3: string;
  level4: string;
  status: AnnotationStatus;
  editor: string;
  source: 'vlm' | 'human';
  tags: string[];
  created: string;
  updated: string;
  /** Ground-truth box [x, y, w, h] in image pixels, when known. */
  gt?: [number, number, number, number];
  validation?: ValidationReport;
}

export interface Finding {
  rule: string;
  severity: 'error' | 'warning';
  message: string;
  level: number | null;
}

export interface ValidationReport {
  findings: Finding[];
}

export interface QueueItem {
  sequence: string;
  frame_index: number;
  status: AnnotationStatus;
  updated: string;
}

export interface QueuePage {
  total: number;
  items: QueueItem[];
}

export function levelText(record: AnnotationRecord, level: Level): string {
  return record[`level${level}`];
}

export function hasErrors(report: ValidationReport): boolean {
  return report.findings.some((f) => f.severity === 'error');
}

export function findingsForLevel(report: ValidationReport, level: Level): Finding[] {
  return report.findings.filter((f) => f.level === level);
}
