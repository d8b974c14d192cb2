/** Typed client for the workbench HTTP API; the only state mutation path. */

import type { Box } from "./transform.js";

export interface PageInfo {
  id: number;
  source_name: string;
  width: number;
  height: number;
}

export interface QueryInfo {
  query_id: string;
  page_id: number;
  user_box: Box;
  snapped_box: Box;
  transcription: string;
  category: string;
  snapped: boolean;
}

export interface ProjectInfo {
  project_id: string;
  version: number;
  n_pages: number;
  pages: PageInfo[];
  queries: QueryInfo[];
}

export interface MatchRecord {
  match_id: string;
  query_id?: string;
  page_id?: number;
  box?: Box;
  score?: number;
  state?: "pending" | "confirmed" | "rejected";
  transcription?: string | null;
  category?: string;
  last_seq: number;
  removed: boolean;
}

export interface MatchBatch {
  matches: MatchRecord[];
  next_cursor: number;
}

export interface CreateQueryResult {
  query_id: string;
  snapped_box: Box;
  snapped: boolean;
  template_png_url: string;
}

export interface FeedbackResult {
  state: string;
  model_delta: { empty: boolean; [k: string]: unknown };
  new_threshold: number | null;
}

export interface QueryProgress {
  query_id: string;
  pages_searched: number;
  total_pages: number;
  rescoring: boolean;
}

export interface Progress {
  queries: QueryProgress[];
  confirmed_count: number;
  match_count: number;
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let code = `HTTP${resp.status}`;
    let message = resp.statusText;
    try {
      const body = await resp.json();
      code = body.error ?? code;
      message = body.message ?? message;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, code, message);
  }
  return resp.json() as Promise<T>;
}

export class ApiClient {
  constructor(private base: string = "") {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  createProject(corpusDir: string): Promise<{ project_id: string; n_pages: number }> {
    return fetch(this.url("/projects"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ corpus_dir: corpusDir }),
    }).then((r) => asJson(r));
  }

  projectInfo(projectId: string): Promise<ProjectInfo> {
    return fetch(this.url(`/projects/${projectId}`)).then((r) => asJson(r));
  }

  createQuery(
    projectId: string,
    page: number,
    box: Box,
    transcription: string,
    category = "none",
  ): Promise<CreateQueryResult> {
    return fetch(this.url(`/projects/${projectId}/queries`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ page, box, transcription, category }),
    }).then((r) => asJson(r));
  }

  pollMatches(projectId: string, cursor: number, waitMs = 0): Promise<MatchBatch> {
    const params = new URLSearchParams({ cursor: String(cursor) });
    if (waitMs > 0) params.set("wait_ms", String(waitMs));
    return fetch(this.url(`/projects/${projectId}/matches?${params}`)).then(
      (r) => asJson(r),
    );
  }

  feedback(matchId: string, verdict: "confirm" | "reject"): Promise<FeedbackResult> {
    return fetch(this.url(`/matches/${matchId}/feedback`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ verdict }),
    }).then((r) => asJson(r));
  }

  progress(projectId: string): Promise<Progress> {
    return fetch(this.url(`/projects/${projectId}/progress`)).then((r) => asJson(r));
  }

  transcription(projectId: string, page: number): Promise<string> {
    return fetch(this.url(`/projects/${projectId}/pages/${page}/transcription`)).then(
      (r) => {
        if (!r.ok) throw new ApiError(r.status, `HTTP${r.status}`, r.statusText);
        return r.text();
      },
    );
  }

  exportGroundTruth(projectId: string): Promise<unknown> {
    return fetch(this.url(`/projects/${projectId}/export?format=json`)).then((r) =>
      asJson(r),
    );
  }

  pageImageUrl(projectId: string, page: number, cleaned: boolean): string {
    return this.url(`/projects/${projectId}/pages/${page}/image${cleaned ? "?cleaned=1" : ""}`);
  }
}
