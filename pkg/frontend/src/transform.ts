/** Zoom/pan mapping between screen pixels and page pixels. */

export interface Point {
  x: number;
  y: number;
}

export interface Box {
  x: number;
  y: number;
  w: number;
  h: number;
}

export const MIN_ZOOM = 0.25;
export const MAX_ZOOM = 8;

/**
 * Invertible view transform: `origin` is the page point shown at screen
 * (0,0), `zoom` the screen-pixels-per-page-pixel factor.
 */
export class ViewTransform {
  zoom: number;
  originX: number;
  originY: number;

  constructor(zoom = 1, originX = 0, originY = 0) {
    this.zoom = clampZoom(zoom);
    this.originX = originX;
    this.originY = originY;
  }

  pageToScreen(p: Point): Point {
    return {
      x: (p.x - this.originX) * this.zoom,
      y: (p.y - this.originY) * this.zoom,
    };
  }

  screenToPage(s: Point): Point {
    return {
      x: s.x / this.zoom + this.originX,
      y: s.y / this.zoom + this.originY,
    };
  }

  /** Page-space box (integer pixels) for a screen-space drag. */
  dragToPageBox(a: Point, b: Point): Box {
    const p1 = this.screenToPage(a);
    const p2 = this.screenToPage(b);
    const x = Math.round(Math.min(p1.x, p2.x));
    const y = Math.round(Math.min(p1.y, p2.y));
    const w = Math.round(Math.abs(p2.x - p1.x));
    const h = Math.round(Math.abs(p2.y - p1.y));
    return { x, y, w, h };
  }

  pageBoxToScreen(box: Box): Box {
    const tl = this.pageToScreen({ x: box.x, y: box.y });
    return { x: tl.x, y: tl.y, w: box.w * this.zoom, h: box.h * this.zoom };
  }

  panBy(dxScreen: number, dyScreen: number): void {
    this.originX -= dxScreen / this.zoom;
    this.originY -= dyScreen / this.zoom;
  }

  /** Zoom by `factor` keeping the page point under `anchor` fixed. */
  zoomAt(anchor: Point, factor: number): void {
    const before = this.screenToPage(anchor);
    this.zoom = clampZoom(this.zoom * factor);
    const after = this.screenToPage(anchor);
    this.originX += before.x - after.x;
    this.originY += before.y - after.y;
  }
}

export function clampZoom(zoom: number): number {
  return Math.min(MAX_ZOOM, Math.max(MIN_ZOOM, zoom));
}

export function boxArea(box: Box): number {
  return box.w * box.h;
}
