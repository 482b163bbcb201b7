/**
 * DOM wiring for the review UI. All flow logic lives in ReviewController;
 * this file renders state and forwards input events.
 *
 * Keyboard shortcuts: j / k next / previous record, o toggle the ground-truth
 * overlay, Ctrl+Enter submit as reviewed, Ctrl+f flag.
 */

import { createApiClient } from './api.js';
import { debounce } from './debounce.js';
import { boxFromArray, drawOverlay, fitScale, scaleBox } from './overlay.js';
import { ReviewController } from './review.js';
import type { ReviewViewState } from './review.js';
import type { Level } from './types.js';
import { LEVELS, findingsForLevel, hasErrors } from './types.js';

const LEVEL_LABELS: Record<Level, string> = {
  1: 'L1 — positional context',
  2: 'L2 — appearance',
  3: 'L3 — dynamic state',
  4: 'L4 — discriminative cues',
};

const VIEW_W = 640;
const VIEW_H = 480;

const api = createApiClient('');
const controller = new ReviewController(api);
let showOverlay = true;
let frameImage: HTMLImageElement | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function renderQueue(state: ReviewViewState): void {
  const list = el<HTMLUListElement>('queue');
  list.replaceChildren();
  state.queue.forEach((item, i) => {
    const li = document.createElement('li');
    li.textContent = `${item.sequence} #${item.frame_index} [${item.status}]`;
    li.className = i === state.cursor ? 'active' : '';
    li.onclick = () => void controller.open(i);
    list.appendChild(li);
  });
  el('queue-count').textContent = `${state.queueTotal} in queue`;
}

function renderEditors(state: ReviewViewState): void {
  for (const level of LEVELS) {
    const area = el<HTMLTextAreaElement>(`level${level}`);
    const text = controller.currentText(level);
    if (area.value !== text) area.value = text;
    area.disabled = state.record === null;
    const findings = state.report ? findingsForLevel(state.report, level) : [];
    const box = el(`findings${level}`);
    box.replaceChildren();
    for (const finding of findings) {
      const div = document.createElement('div');
      div.className = `finding ${finding.severity}`;
      div.textContent = `${finding.rule}: ${finding.message}`;
      box.appendChild(div);
    }
  }
}

function renderFrame(state: ReviewViewState): void {
  const canvas = el<HTMLCanvasElement>('frame');
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!state.record || !frameImage || !frameImage.complete || frameImage.naturalWidth === 0) {
    return;
  }
  const zoom = fitScale(frameImage.naturalWidth, frameImage.naturalHeight, VIEW_W, VIEW_H);
  const scaled = scaleBox(
    { x: 0, y: 0, w: frameImage.naturalWidth, h: frameImage.naturalHeight },
    zoom,
  );
  canvas.width = Math.round(scaled.w);
  canvas.height = Math.round(scaled.h);
  ctx.drawImage(frameImage, 0, 0, canvas.width, canvas.height);
  if (showOverlay && state.record.gt) {
    drawOverlay(ctx, boxFromArray(state.record.gt), zoom);
  }
}

function render(state: ReviewViewState): void {
  renderQueue(state);
  renderEditors(state);
  renderFrame(state);
  el('status-chip').textContent = state.record ? state.record.status : '—';
  el('status-chip').className = `chip ${state.record?.status ?? 'none'}`;
  el('retry-banner').hidden = !state.retryBanner;
  el('conflict-banner').hidden = !state.conflict;
  const submit = el<HTMLButtonElement>('submit-reviewed');
  submit.disabled =
    state.busy || state.record === null || (state.report !== null && hasErrors(state.report));
}

function loadFrame(state: ReviewViewState): void {
  if (!state.record) {
    frameImage = null;
    return;
  }
  const img = new Image();
  img.onload = () => renderFrame(controller.state);
  img.src = api.frameUrl(state.record.sequence, state.record.frame_index);
  frameImage = img;
}

const liveValidate = debounce(() => void controller.validate(), 300);

function wire(): void {
  for (const level of LEVELS) {
    const wrap = el(`editor${level}`);
    wrap.querySelector('label')!.textContent = LEVEL_LABELS[level];
    const area = el<HTMLTextAreaElement>(`level${level}`);
    area.addEventListener('input', () => {
      controller.edit(level, area.value);
      liveValidate();
    });
  }
  el<HTMLButtonElement>('submit-reviewed').onclick = () => void controller.submit('reviewed');
  el<HTMLButtonElement>('submit-flagged').onclick = () => void controller.submit('flagged');
  el<HTMLButtonElement>('retry').onclick = () => void controller.loadQueue();
  el<HTMLButtonElement>('reload-record').onclick = () => void controller.reload();
  el<HTMLInputElement>('toggle-overlay').addEventListener('change', (event) => {
    showOverlay = (event.target as HTMLInputElement).checked;
    renderFrame(controller.state);
  });

  document.addEventListener('keydown', (event) => {
    if (event.target instanceof HTMLTextAreaElement && !event.ctrlKey) return;
    if (event.key === 'j') void controller.next();
    else if (event.key === 'k') void controller.prev();
    else if (event.key === 'o') {
      const toggle = el<HTMLInputElement>('toggle-overlay');
      toggle.checked = !toggle.checked;
      showOverlay = toggle.checked;
      renderFrame(controller.state);
    } else if (event.ctrlKey && event.key === 'Enter') void controller.submit('reviewed');
    else if (event.ctrlKey && event.key === 'f') {
      event.preventDefault();
      void controller.submit('flagged');
    }
  });

  let lastRecordKey = '';
  controller.onChange = (state) => {
    const key = state.record ? `${state.record.sequence}/${state.record.frame_index}` : '';
    if (key !== lastRecordKey) {
      lastRecordKey = key;
      loadFrame(state);
    }
    render(state);
  };
  void controller.loadQueue('draft');
}

wire();
