/** Pure view-side state: match accumulation and overlay derivation.
 *
 * The rendered overlays are a pure function of (server match records,
 * view state); refetching from cursor 0 reproduces the same picture.
 */

import type { MatchRecord, QueryInfo } from "./api.js";
import type { Box } from "./transform.js";

export type Mode = "mark" | "correct" | "incorrect";

export interface MatchesState {
  byId: Map<string, MatchRecord>;
  cursor: number;
}

export interface ViewState {
  mode: Mode;
  currentPage: number;
  activeQuery: string | null;
  showCleaned: boolean;
  showUserBoxes: boolean;
  showSnappedBoxes: boolean;
  showMatches: boolean;
}

export function initialViewState(): ViewState {
  return {
    mode: "mark",
    currentPage: 0,
    activeQuery: null,
    showCleaned: false,
    showUserBoxes: true,
    showSnappedBoxes: true,
    showMatches: true,
  };
}

export function emptyMatches(): MatchesState {
  return { byId: new Map(), cursor: 0 };
}

/** Fold one poll batch into the match table (pure: returns a new state). */
export function applyBatch(
  state: MatchesState,
  batch: { matches: MatchRecord[]; next_cursor: number },
): MatchesState {
  const byId = new Map(state.byId);
  for (const record of batch.matches) {
    if (record.removed) {
      byId.delete(record.match_id);
    } else {
      byId.set(record.match_id, record);
    }
  }
  return { byId, cursor: Math.max(state.cursor, batch.next_cursor) };
}

export type OverlayKind = "user" | "snapped" | "pending" | "confirmed";

export interface OverlayBox {
  key: string;
  kind: OverlayKind;
  box: Box;
  color: string;
  solid: boolean;
  label?: string;
  matchId?: string;
}

/** Category coloring: names red, places green, otherwise blue. */
export function categoryColor(category: string | undefined): string {
  if (category === "name") return "#d62828";
  if (category === "place") return "#2a9d2a";
  return "#1f6fd6";
}

export const USER_BOX_COLOR = "#d62828";
export const SNAPPED_BOX_COLOR = "#2a9d2a";
export const MATCH_BOX_COLOR = "#1f6fd6";

/** Everything drawable on one page. Rejected matches are never emitted. */
export function visibleOverlays(
  matches: MatchesState,
  queries: QueryInfo[],
  view: ViewState,
  pageId: number,
): OverlayBox[] {
  const out: OverlayBox[] = [];
  for (const q of queries) {
    if (q.page_id !== pageId) continue;
    if (view.activeQuery && q.query_id !== view.activeQuery) continue;
    if (view.showUserBoxes) {
      out.push({
        key: `user:${q.query_id}`,
        kind: "user",
        box: q.user_box,
        color: USER_BOX_COLOR,
        solid: false,
      });
    }
    if (view.showSnappedBoxes) {
      out.push({
        key: `snap:${q.query_id}`,
        kind: "snapped",
        box: q.snapped_box,
        // an unsnapped fallback box stays red as a warning
        color: q.snapped ? SNAPPED_BOX_COLOR : USER_BOX_COLOR,
        solid: false,
        label: q.transcription,
      });
    }
  }
  if (!view.showMatches) return out;
  for (const m of matches.byId.values()) {
    if (m.page_id !== pageId || !m.box || m.state === "rejected") continue;
    if (view.activeQuery && m.query_id !== view.activeQuery) continue;
    if (m.state === "confirmed") {
      out.push({
        key: `match:${m.match_id}`,
        kind: "confirmed",
        box: m.box,
        color: categoryColor(m.category),
        solid: true,
        label: m.transcription ?? undefined,
        matchId: m.match_id,
      });
    } else {
      out.push({
        key: `match:${m.match_id}`,
        kind: "pending",
        box: m.box,
        color: MATCH_BOX_COLOR,
        solid: false,
        matchId: m.match_id,
      });
    }
  }
  return out;
}
