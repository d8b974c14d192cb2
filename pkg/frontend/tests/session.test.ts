/**
 * End-to-end contract: a scripted session through the UI's client code
 * (mark -> poll -> confirm 2, reject 1) leaves the server in exactly the
 * same state as the equivalent raw-HTTP session run against a second
 * project over the same corpus.
 */
import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { WorkbenchSession } from "../src/session.js";
import { ViewTransform, type Box } from "../src/transform.js";

const PORT = 8712 + (process.pid % 200);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let corpusDir = "";
let queryBox: Box;

async function waitForServer(timeoutMs = 60000) {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const r = await fetch(`${BASE}/`);
      if (r.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("fixture server did not come up");
}

beforeAll(async () => {
  server = spawn("python3", [new URL("./fixture_server.py", import.meta.url).pathname,
                             "--port", String(PORT)],
                 { stdio: ["ignore", "pipe", "inherit"] });
  const fixture = new Promise<void>((resolve, reject) => {
    let buffer = "";
    server.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const line = buffer.split("\n").find((l) => l.startsWith("FIXTURE "));
      if (line) {
        const facts = JSON.parse(line.slice("FIXTURE ".length));
        corpusDir = facts.corpus_dir;
        queryBox = facts.query_box;
        resolve();
      }
    });
    server.on("exit", (code) => reject(new Error(`server exited early (${code})`)));
  });
  await fixture;
  await waitForServer();
}, 90000);

afterAll(() => {
  server?.kill();
});

interface NormalizedMatch {
  page: number | undefined;
  box: Box | undefined;
  state: string | undefined;
  transcription: string | null | undefined;
  category: string | undefined;
}

function normalizeMatches(rows: Array<Record<string, unknown>>): NormalizedMatch[] {
  return rows
    .filter((m) => !m.removed)
    .map((m) => ({
      page: m.page_id as number, box: m.box as Box, state: m.state as string,
      transcription: m.transcription as string | null,
      category: m.category as string,
    }))
    .sort((a, b) =>
      a.page! - b.page! || a.box!.y - b.box!.y || a.box!.x - b.box!.x
      || (a.state! < b.state! ? -1 : 1));
}

async function rawJson(path: string, init?: RequestInit) {
  const resp = await fetch(`${BASE}${path}`, init);
  if (!resp.ok) throw new Error(`${path}: HTTP ${resp.status} ${await resp.text()}`);
  return resp.json();
}

async function rawAwaitQuiescent(projectId: string) {
  const deadline = Date.now() + 60000;
  while (Date.now() < deadline) {
    const progress = await rawJson(`/projects/${projectId}/progress`);
    const busy = progress.queries.some(
      (q: { pages_searched: number; total_pages: number; rescoring: boolean }) =>
        q.pages_searched < q.total_pages || q.rescoring);
    if (!busy) return;
    await new Promise((resolve) => setTimeout(resolve, 50));
  }
  throw new Error("raw session did not settle");
}

describe("scripted UI session vs raw HTTP session", () => {
  it("produces identical server state", async () => {
    // ---- session A: through the UI's client code -------------------------
    const ui = new WorkbenchSession(BASE);
    await ui.openProject(corpusDir);

    // the drag gesture: loose box around the word at zoom 2, pan (12, 8)
    const transform = new ViewTransform(2, 12, 8);
    const loose = { x: queryBox.x - 5, y: queryBox.y - 5,
                    w: queryBox.w + 10, h: queryBox.h + 10 };
    const a = transform.pageToScreen({ x: loose.x, y: loose.y });
    const b = transform.pageToScreen({ x: loose.x + loose.w, y: loose.y + loose.h });
    const created = await ui.markWord(0, a, b, transform, "reberé", "name");
    expect(created).not.toBeNull();
    expect(created!.snapped).toBe(true);

    await ui.awaitQuiescent();
    let pending = ui.pendingSorted();
    expect(pending.length).toBeGreaterThanOrEqual(3);

    const verdictPlan = pending.slice(0, 3).map((m) => m.box!);
    await ui.confirmMatch(pending[0].match_id);
    await ui.awaitQuiescent();
    pending = ui.pendingSorted();
    await ui.confirmMatch(pending[0].match_id);
    await ui.awaitQuiescent();
    pending = ui.pendingSorted();
    await ui.rejectMatch(pending[0].match_id);
    await ui.awaitQuiescent();

    const uiExport = await ui.api.exportGroundTruth(ui.projectId) as { pages: unknown };
    const uiMatches = normalizeMatches(
      (await ui.api.pollMatches(ui.projectId, 0)).matches as never[]);

    // ---- session B: the same actions as raw HTTP calls -------------------
    const madeB = await rawJson("/projects", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ corpus_dir: corpusDir }),
    });
    const pidB = madeB.project_id;
    // the equivalent marked box, computed without UI code
    const rawBox = { x: queryBox.x - 5, y: queryBox.y - 5,
                     w: queryBox.w + 10, h: queryBox.h + 10 };
    await rawJson(`/projects/${pidB}/queries`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ page: 0, box: rawBox,
                             transcription: "reberé", category: "name" }),
    });
    await rawAwaitQuiescent(pidB);

    const verdicts: Array<"confirm" | "reject"> = ["confirm", "confirm", "reject"];
    for (let i = 0; i < 3; i++) {
      const batch = await rawJson(`/projects/${pidB}/matches?cursor=0`);
      const rows = (batch.matches as Array<Record<string, never>>)
        .filter((m) => m["state"] === "pending")
        .sort((x, y) =>
          (x["page_id"] as number) - (y["page_id"] as number)
          || (x["box"] as Box).y - (y["box"] as Box).y
          || (x["box"] as Box).x - (y["box"] as Box).x);
      expect(rows.length).toBeGreaterThan(0);
      await rawJson(`/matches/${rows[0]["match_id"]}/feedback`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ verdict: verdicts[i] }),
      });
      await rawAwaitQuiescent(pidB);
    }
    const rawExport = await rawJson(`/projects/${pidB}/export?format=json`);
    const rawMatches = normalizeMatches(
      (await rawJson(`/projects/${pidB}/matches?cursor=0`)).matches);

    // ---- identical server state (ids differ by project prefix only) ------
    expect(uiMatches).toEqual(rawMatches);
    expect((uiExport as { pages: unknown }).pages)
      .toEqual((rawExport as { pages: unknown }).pages);
    // the verdicts landed where the script aimed them
    expect(verdictPlan.length).toBe(3);
    const confirmed = uiMatches.filter((m) => m.state === "confirmed");
    const rejected = uiMatches.filter((m) => m.state === "rejected");
    expect(confirmed.length).toBe(2);
    expect(rejected.length).toBe(1);
    expect(confirmed.every((m) => m.transcription === "reberé")).toBe(true);
    expect(confirmed.every((m) => m.category === "name")).toBe(true);
  }, 180000);
});
