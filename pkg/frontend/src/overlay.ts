/** DOM rendering of overlay boxes: positioned divs above the page image. */

import type { OverlayBox } from "./state.js";
import type { ViewTransform } from "./transform.js";

export interface OverlayEvents {
  onMatchClick?: (matchId: string) => void;
}

/**
 * Reconcile the overlay container against the wanted box list: boxes keep
 * their DOM node across renders (keyed by `data-key`), vanished boxes are
 * removed from the DOM.
 */
export function renderOverlays(
  container: HTMLElement,
  overlays: OverlayBox[],
  transform: ViewTransform,
  events: OverlayEvents = {},
): void {
  const wanted = new Map(overlays.map((o) => [o.key, o]));
  const existing = new Map<string, HTMLElement>();
  for (const child of Array.from(container.children) as HTMLElement[]) {
    const key = child.dataset.key;
    if (!key || !wanted.has(key)) {
      child.remove();
    } else {
      existing.set(key, child);
    }
  }
  for (const overlay of overlays) {
    let el = existing.get(overlay.key);
    if (!el) {
      el = container.ownerDocument.createElement("div");
      el.dataset.key = overlay.key;
      el.className = "overlay-box";
      container.appendChild(el);
      if (overlay.matchId) {
        el.dataset.matchId = overlay.matchId;
        el.addEventListener("click", (ev) => {
          ev.stopPropagation();
          events.onMatchClick?.((ev.currentTarget as HTMLElement).dataset.matchId!);
        });
      }
    }
    el.dataset.kind = overlay.kind;
    const rect = transform.pageBoxToScreen(overlay.box);
    el.style.position = "absolute";
    el.style.left = `${rect.x}px`;
    el.style.top = `${rect.y}px`;
    el.style.width = `${rect.w}px`;
    el.style.height = `${rect.h}px`;
    el.style.border = `2px ${overlay.solid ? "solid" : "dashed"} ${overlay.color}`;
    el.style.pointerEvents = overlay.matchId ? "auto" : "none";
    el.title = overlay.label ?? "";
    let tag = el.querySelector<HTMLElement>(".overlay-label");
    if (overlay.label && overlay.solid) {
      if (!tag) {
        tag = container.ownerDocument.createElement("span");
        tag.className = "overlay-label";
        el.appendChild(tag);
      }
      tag.textContent = overlay.label;
      tag.style.background = overlay.color;
    } else if (tag) {
      tag.remove();
    }
  }
}
