/** Ground-truth box overlay geometry: image-space to canvas-space mapping. */

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export function boxFromArray(raw: [number, number, number, number]): Box {
  return { x: raw[0], y: raw[1], w: raw[2], h: raw[3] };
}

/**
 * Largest scale at which the image fits inside the viewport without
 * cropping, preserving aspect ratio. Never upscales beyond maxZoom.
 */
export function fitScale(
  imageW: number,
  imageH: number,
  viewW: number,
  viewH: number,
  maxZoom = 4,
): number {
  if (imageW <= 0 || imageH <= 0) throw new Error('image dimensions must be positive');
  if (viewW <= 0 || viewH <= 0) throw new Error('viewport dimensions must be positive');
  return Math.min(viewW / imageW, viewH / imageH, maxZoom);
}

/** Map an image-space box to canvas space at a uniform zoom factor. */
export function scaleBox(box: Box, zoom: number): Box {
  return { x: box.x * zoom, y: box.y * zoom, w: box.w * zoom, h: box.h * zoom };
}

/** Inverse of scaleBox; a canvas-space box back to image pixels. */
export function unscaleBox(box: Box, zoom: number): Box {
  if (zoom === 0) throw new Error('zoom must be non-zero');
  return { x: box.x / zoom, y: box.y / zoom, w: box.w / zoom, h: box.h / zoom };
}

export interface OverlayStyle {
  color: string;
  lineWidth: number;
}

export const DEFAULT_OVERLAY_STYLE: OverlayStyle = { color: '#22cc44', lineWidth: 2 };

/** Stroke the ground-truth rectangle onto a canvas at the given zoom. */
export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  box: Box,
  zoom: number,
  style: OverlayStyle = DEFAULT_OVERLAY_STYLE,
): void {
  const scaled = scaleBox(box, zoom);
  ctx.save();
  ctx.strokeStyle = style.color;
  ctx.lineWidth = style.lineWidth;
  ctx.strokeRect(scaled.x, scaled.y, scaled.w, scaled.h);
  ctx.restore();
}
