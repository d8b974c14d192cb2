/** Browser wiring: page viewer, rubber-band marking, review loop, panels. */

import { ApiError } from "./api.js";
import { renderOverlays } from "./overlay.js";
import { WorkbenchSession } from "./session.js";
import {
  initialViewState, visibleOverlays, type Mode, type ViewState,
} from "./state.js";
import { boxArea, ViewTransform, type Point } from "./transform.js";

const MODES: Mode[] = ["mark", "correct", "incorrect"];

class Workbench {
  session = new WorkbenchSession();
  view: ViewState = initialViewState();
  transform = new ViewTransform(1, 0, 0);
  dragStart: Point | null = null;
  panLast: Point | null = null;
  pendingMark: { page: number; a: Point; b: Point } | null = null;
  polling = false;
  pollDelay = 700;

  constructor(private root: HTMLElement) {}

  el<T extends HTMLElement>(selector: string): T {
    return this.root.querySelector(selector) as T;
  }

  async start() {
    this.buildDom();
    const resp = await fetch("/");
    if (resp.ok) {
      const home = await resp.json();
      if (home.projects?.length) {
        await this.session.attach(home.projects[0].project_id);
        this.onProjectOpened();
      }
    }
  }

  buildDom() {
    this.root.innerHTML = `
      <header>
        <span class="title">word spotting workbench</span>
        <span class="modes">
          ${MODES.map((m) => `<button data-mode="${m}">${m}</button>`).join("")}
        </span>
        <button id="toggle-cleaned">cleaned view</button>
        <span class="pager">
          <button id="prev-page">&#8592;</button>
          <span id="page-label">page -</span>
          <button id="next-page">&#8594;</button>
        </span>
        <form id="open-form">
          <input id="corpus-dir" placeholder="corpus directory on server" size="28">
          <button>open corpus</button>
        </form>
      </header>
      <main>
        <section id="viewer">
          <div id="stage">
            <img id="page-image" draggable="false" alt="">
            <div id="overlays"></div>
            <div id="rubber-band" hidden></div>
          </div>
          <form id="mark-form" hidden>
            <img id="template-thumb" alt="">
            <input id="mark-text" placeholder="transcription" autocomplete="off">
            <select id="mark-category">
              <option value="none">plain</option>
              <option value="name">name</option>
              <option value="place">place</option>
            </select>
            <button>save word</button>
            <button type="button" id="mark-cancel">cancel</button>
            <span id="mark-hint"></span>
          </form>
        </section>
        <aside>
          <h3>progress</h3>
          <div id="progress"></div>
          <h3>transcription</h3>
          <pre id="transcription"></pre>
        </aside>
      </main>`;
    for (const button of this.root.querySelectorAll<HTMLButtonElement>("[data-mode]")) {
      button.addEventListener("click", () => this.setMode(button.dataset.mode as Mode));
    }
    this.setMode("mark");
    this.el("#open-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      const dir = this.el<HTMLInputElement>("#corpus-dir").value.trim();
      if (dir) {
        this.session.openProject(dir).then(() => this.onProjectOpened(),
                                           (err) => this.flash(String(err)));
      }
    });
    this.el("#toggle-cleaned").addEventListener("click", () => {
      this.view.showCleaned = !this.view.showCleaned;
      this.renderPage();
    });
    this.el("#prev-page").addEventListener("click", () => this.gotoPage(-1));
    this.el("#next-page").addEventListener("click", () => this.gotoPage(1));

    const stage = this.el("#stage");
    stage.addEventListener("pointerdown", (ev) => this.onPointerDown(ev as PointerEvent));
    stage.addEventListener("pointermove", (ev) => this.onPointerMove(ev as PointerEvent));
    stage.addEventListener("pointerup", (ev) => this.onPointerUp(ev as PointerEvent));
    stage.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const anchor = this.stagePoint(ev as WheelEvent);
      this.transform.zoomAt(anchor, (ev as WheelEvent).deltaY < 0 ? 1.2 : 1 / 1.2);
      this.renderPage();
    }, { passive: false });

    this.el("#mark-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      this.submitMark();
    });
    this.el("#mark-cancel").addEventListener("click", () => {
      this.pendingMark = null;
      this.el("#mark-form").hidden = true;
    });
  }

  setMode(mode: Mode) {
    this.view.mode = mode;
    for (const button of this.root.querySelectorAll<HTMLButtonElement>("[data-mode]")) {
      button.classList.toggle("active", button.dataset.mode === mode);
    }
  }

  flash(message: string) {
    this.el("#mark-hint").textContent = message;
    setTimeout(() => { this.el("#mark-hint").textContent = ""; }, 4000);
  }

  stagePoint(ev: { clientX: number; clientY: number }): Point {
    const rect = this.el("#stage").getBoundingClientRect();
    return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
  }

  onPointerDown(ev: PointerEvent) {
    const p = this.stagePoint(ev);
    if (this.view.mode === "mark" && ev.button === 0) {
      this.dragStart = p;
    } else {
      this.panLast = p;
    }
  }

  onPointerMove(ev: PointerEvent) {
    const p = this.stagePoint(ev);
    if (this.dragStart) {
      const band = this.el("#rubber-band");
      band.hidden = false;
      band.style.left = `${Math.min(this.dragStart.x, p.x)}px`;
      band.style.top = `${Math.min(this.dragStart.y, p.y)}px`;
      band.style.width = `${Math.abs(p.x - this.dragStart.x)}px`;
      band.style.height = `${Math.abs(p.y - this.dragStart.y)}px`;
    } else if (this.panLast) {
      this.transform.panBy(p.x - this.panLast.x, p.y - this.panLast.y);
      this.panLast = p;
      this.renderPage();
    }
  }

  onPointerUp(ev: PointerEvent) {
    const p = this.stagePoint(ev);
    if (this.dragStart) {
      const a = this.dragStart;
      this.dragStart = null;
      this.el("#rubber-band").hidden = true;
      const box = this.transform.dragToPageBox(a, p);
      if (boxArea(box) < 4) {
        this.flash("mark a larger area");
        return;
      }
      this.pendingMark = { page: this.view.currentPage, a, b: p };
      const form = this.el("#mark-form");
      form.hidden = false;
      this.el<HTMLInputElement>("#mark-text").focus();
    }
    this.panLast = null;
  }

  async submitMark() {
    if (!this.pendingMark) return;
    const text = this.el<HTMLInputElement>("#mark-text").value.trim();
    if (!text) {
      this.flash("transcription required");
      return;
    }
    const category = this.el<HTMLSelectElement>("#mark-category").value;
    const { page, a, b } = this.pendingMark;
    try {
      const result = await this.session.markWord(
        page, a, b, this.transform, text, category);
      if (result) {
        this.el<HTMLImageElement>("#template-thumb").src = result.template_png_url;
        this.flash(result.snapped ? "word captured" : "could not snap; kept your box");
      }
      this.pendingMark = null;
      this.el("#mark-form").hidden = true;
      this.el<HTMLInputElement>("#mark-text").value = "";
      this.render();
    } catch (err) {
      if (err instanceof ApiError && err.code === "EmptyTemplate") {
        this.flash("marked blank region");
      } else {
        this.flash(String(err));
      }
    }
  }

  async onMatchClick(matchId: string) {
    if (this.view.mode === "mark") return;
    const verdict = this.view.mode === "correct" ? "confirm" : "reject";
    const previous = this.session.matches.byId.get(matchId);
    if (!previous) return;
    // optimistic update; the next poll delivers the authoritative record
    const optimistic = { ...previous, state: verdict === "confirm" ? "confirmed" as const : "rejected" as const };
    this.session.matches.byId.set(matchId, optimistic);
    this.render();
    try {
      if (verdict === "confirm") await this.session.confirmMatch(matchId);
      else await this.session.rejectMatch(matchId);
    } catch (err) {
      this.session.matches.byId.set(matchId, previous);
      this.flash(String(err));
    }
    this.render();
    this.refreshTranscription();
  }

  onProjectOpened() {
    this.view.currentPage = 0;
    this.transform = new ViewTransform(1, 0, 0);
    this.render();
    this.refreshTranscription();
    if (!this.polling) {
      this.polling = true;
      this.pollLoop();
    }
  }

  async pollLoop() {
    while (this.polling && this.session.projectId) {
      try {
        const newMatches = await this.session.poll(600);
        this.pollDelay = 700;
        if (newMatches > 0) this.render();
        await this.refreshProgress();
      } catch (err) {
        if (err instanceof ApiError && err.status === 410) {
          await this.session.resync();
        } else {
          this.pollDelay = Math.min(this.pollDelay * 2, 5000);
        }
      }
      await new Promise((resolve) => setTimeout(resolve, this.pollDelay));
    }
  }

  gotoPage(step: number) {
    const n = this.session.info?.n_pages ?? 0;
    if (!n) return;
    this.view.currentPage = Math.min(n - 1, Math.max(0, this.view.currentPage + step));
    this.render();
    this.refreshTranscription();
  }

  renderPage() {
    const image = this.el<HTMLImageElement>("#page-image");
    if (!this.session.projectId || !this.session.info) return;
    const page = this.session.info.pages[this.view.currentPage];
    image.src = this.session.api.pageImageUrl(
      this.session.projectId, page.id, this.view.showCleaned);
    const rect = this.transform.pageBoxToScreen(
      { x: 0, y: 0, w: page.width, h: page.height });
    image.style.left = `${rect.x}px`;
    image.style.top = `${rect.y}px`;
    image.style.width = `${rect.w}px`;
    image.style.height = `${rect.h}px`;
    this.el("#page-label").textContent =
      `page ${page.id + 1}/${this.session.info.n_pages}`;
    renderOverlays(
      this.el("#overlays"),
      visibleOverlays(this.session.matches, this.session.info.queries,
                      this.view, page.id),
      this.transform,
      { onMatchClick: (id) => this.onMatchClick(id) },
    );
  }

  render() {
    this.renderPage();
  }

  async refreshProgress() {
    if (!this.session.projectId) return;
    const progress = await this.session.api.progress(this.session.projectId);
    const host = this.el("#progress");
    host.innerHTML = progress.queries.map((q) => {
      const pct = q.total_pages ? (100 * q.pages_searched) / q.total_pages : 0;
      return `<div class="bar-row"><span>${q.query_id}</span>
        <div class="bar"><div class="fill" style="width:${pct}%"></div></div>
        <span>${q.pages_searched}/${q.total_pages}${q.rescoring ? " ~" : ""}</span>
      </div>`;
    }).join("") + `<div class="confirmed">confirmed: ${progress.confirmed_count}</div>`;
  }

  async refreshTranscription() {
    if (!this.session.projectId) return;
    const text = await this.session.api.transcription(
      this.session.projectId, this.view.currentPage);
    this.el("#transcription").textContent = text;
  }
}

export function boot(root: HTMLElement) {
  const bench = new Workbench(root);
  void bench.start();
  return bench;
}

if (typeof document !== "undefined" && document.getElementById("workbench-root")) {
  boot(document.getElementById("workbench-root")!);
}
