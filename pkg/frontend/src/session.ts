/** Headless workbench session: every user action as a client-side call.
 *
 * The DOM layer delegates here, so a scripted session exercises exactly
 * the calls the interactive UI makes.
 */

import { ApiClient, type CreateQueryResult, type ProjectInfo } from "./api.js";
import { applyBatch, emptyMatches, type MatchesState } from "./state.js";
import { boxArea, type Box, type Point, ViewTransform } from "./transform.js";

export class WorkbenchSession {
  api: ApiClient;
  projectId = "";
  info: ProjectInfo | null = null;
  matches: MatchesState = emptyMatches();

  constructor(apiBase = "") {
    this.api = new ApiClient(apiBase);
  }

  async openProject(corpusDir: string): Promise<ProjectInfo> {
    const created = await this.api.createProject(corpusDir);
    this.projectId = created.project_id;
    return this.refreshInfo();
  }

  async attach(projectId: string): Promise<ProjectInfo> {
    this.projectId = projectId;
    return this.refreshInfo();
  }

  async refreshInfo(): Promise<ProjectInfo> {
    this.info = await this.api.projectInfo(this.projectId);
    return this.info;
  }

  /**
   * The mark gesture: a screen-space drag converted through the current
   * transform; drags under 4 page-px^2 are ignored (returns null).
   */
  async markWord(
    page: number,
    dragStart: Point,
    dragEnd: Point,
    transform: ViewTransform,
    transcription: string,
    category = "none",
  ): Promise<CreateQueryResult | null> {
    const box = transform.dragToPageBox(dragStart, dragEnd);
    if (boxArea(box) < 4) return null;
    const result = await this.api.createQuery(
      this.projectId, page, box, transcription, category);
    await this.refreshInfo();
    return result;
  }

  async markBox(
    page: number,
    box: Box,
    transcription: string,
    category = "none",
  ): Promise<CreateQueryResult> {
    const result = await this.api.createQuery(
      this.projectId, page, box, transcription, category);
    await this.refreshInfo();
    return result;
  }

  /** One poll step; folds new emissions into the match table. */
  async poll(waitMs = 0): Promise<number> {
    const batch = await this.api.pollMatches(this.projectId, this.matches.cursor, waitMs);
    this.matches = applyBatch(this.matches, batch);
    return batch.matches.length;
  }

  /** Full resync (cursor predates a compaction, or state was lost). */
  async resync(): Promise<void> {
    this.matches = emptyMatches();
    await this.poll();
  }

  async confirmMatch(matchId: string): Promise<void> {
    await this.api.feedback(matchId, "confirm");
    await this.poll();
  }

  async rejectMatch(matchId: string): Promise<void> {
    await this.api.feedback(matchId, "reject");
    await this.poll();
  }

  /** Wait until every search and rescore has settled, then poll. */
  async awaitQuiescent(timeoutMs = 60000, stepMs = 50): Promise<void> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
      const progress = await this.api.progress(this.projectId);
      const busy = progress.queries.some(
        (q) => q.pages_searched < q.total_pages || q.rescoring,
      );
      if (!busy) {
        await this.poll();
        return;
      }
      await new Promise((resolve) => setTimeout(resolve, stepMs));
    }
    throw new Error("searches did not settle in time");
  }

  pendingSorted() {
    return [...this.matches.byId.values()]
      .filter((m) => m.state === "pending")
      .sort((a, b) =>
        a.page_id! - b.page_id! || a.box!.y - b.box!.y || a.box!.x - b.box!.x);
  }
}
