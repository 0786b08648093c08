import { ApiClient } from "./api.js";
import { renderTree } from "./tree.js";
import type { DecisionRow, RunSnapshot } from "./types.js";

const TERMINAL_PHASES = new Set(["completed", "cancelled", "failed"]);
const PHASE_RANK: Record<string, number> = {
  pending: 0,
  running: 1,
  completed: 2,
  cancelled: 2,
  failed: 2,
};

/**
 * Poll responses can arrive out of order; a snapshot only replaces the
 * current one when its phase rank or counters moved forward.
 */
export function isFresher(current: RunSnapshot | null, next: RunSnapshot): boolean {
  if (!current) return true;
  const rankNow = PHASE_RANK[current.phase] ?? 0;
  const rankNext = PHASE_RANK[next.phase] ?? 0;
  if (rankNext !== rankNow) return rankNext > rankNow;
  if (next.nodes_prompted !== current.nodes_prompted) {
    return next.nodes_prompted > current.nodes_prompted;
  }
  return next.candidates_generated >= current.candidates_generated;
}

function fmtScore(value: number | null): string {
  return value === null || value === undefined ? "" : value.toFixed(4);
}

export interface RunViewOptions {
  pollIntervalMs?: number;
}

/**
 * Live view of one run: status chip and counters, rejected-by-reason
 * breakdown, cursor-tailed decision table, and the current tree with
 * provenance coloring. One poll loop per view; `tick()` is a single
 * poll cycle so tests can drive it without timers.
 */
export class RunView {
  readonly el: HTMLElement;
  private latest: RunSnapshot | null = null;
  private cursor = 0;
  private timer: ReturnType<typeof setInterval> | null = null;
  private finished = false;
  private readonly interval: number;

  private readonly chip: HTMLSpanElement;
  private readonly staleNote: HTMLSpanElement;
  private readonly counters: HTMLElement;
  private readonly reasons: HTMLElement;
  private readonly tbody: HTMLTableSectionElement;
  private readonly treeHost: HTMLElement;
  private readonly cancelButton: HTMLButtonElement;
  private readonly exports: HTMLElement;

  constructor(
    private readonly api: ApiClient,
    readonly runId: string,
    opts: RunViewOptions = {},
  ) {
    this.interval = opts.pollIntervalMs ?? 1500;
    this.el = document.createElement("section");
    this.el.className = "run-view";
    this.el.innerHTML = `
      <header>
        <h2>run <code class="run-id"></code></h2>
        <span class="chip phase"></span>
        <span class="stale" hidden>stale data, retrying</span>
        <button type="button" class="cancel">cancel</button>
      </header>
      <dl class="counters"></dl>
      <div class="reasons"></div>
      <div class="exports" hidden>
        <a class="export-taxonomy" download="enriched.json">download enriched taxonomy</a>
        <a class="export-decisions" download="decisions.json">download decision log</a>
      </div>
      <div class="panes">
        <table class="decisions">
          <thead>
            <tr><th>#</th><th>candidate</th><th>parent path</th><th>outcome</th>
            <th>reason</th><th>similarity</th><th>judge</th></tr>
          </thead>
          <tbody></tbody>
        </table>
        <div class="tree-host"></div>
      </div>
    `;
    (this.el.querySelector(".run-id") as HTMLElement).textContent = runId;
    this.chip = this.el.querySelector(".phase") as HTMLSpanElement;
    this.staleNote = this.el.querySelector(".stale") as HTMLSpanElement;
    this.counters = this.el.querySelector(".counters") as HTMLElement;
    this.reasons = this.el.querySelector(".reasons") as HTMLElement;
    this.tbody = this.el.querySelector("tbody") as HTMLTableSectionElement;
    this.treeHost = this.el.querySelector(".tree-host") as HTMLElement;
    this.exports = this.el.querySelector(".exports") as HTMLElement;
    this.cancelButton = this.el.querySelector(".cancel") as HTMLButtonElement;
    this.cancelButton.addEventListener("click", () => void this.cancel());

    const taxonomyLink = this.el.querySelector(".export-taxonomy") as HTMLAnchorElement;
    taxonomyLink.href = api.exportTaxonomyUrl(runId);
    const decisionsLink = this.el.querySelector(".export-decisions") as HTMLAnchorElement;
    decisionsLink.href = api.exportDecisionsUrl(runId);
  }

  start(): void {
    if (this.timer !== null) return;
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.interval);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** One poll cycle. Failures flip the stale indicator but keep the view. */
  async tick(): Promise<void> {
    if (this.finished) return;
    try {
      const snap = await this.api.getRun(this.runId);
      if (isFresher(this.latest, snap)) {
        this.latest = snap;
        this.renderStatus(snap);
      }
      await this.tailDecisions();
      await this.refreshTree();
      this.staleNote.hidden = true;
      if (TERMINAL_PHASES.has(snap.phase)) {
        // one last tail so the table matches the final log exactly
        await this.tailDecisions();
        this.finished = true;
        this.exports.hidden = false;
        this.cancelButton.disabled = true;
        this.stop();
      }
    } catch {
      this.staleNote.hidden = false;
    }
  }

  async cancel(): Promise<void> {
    try {
      await this.api.cancelRun(this.runId);
    } catch {
      this.staleNote.hidden = false;
    }
  }

  get snapshot(): RunSnapshot | null {
    return this.latest;
  }

  get decisionRowCount(): number {
    return this.tbody.querySelectorAll("tr").length;
  }

  private renderStatus(snap: RunSnapshot): void {
    this.chip.textContent = snap.phase;
    this.chip.className = `chip phase phase-${snap.phase}`;
    if (TERMINAL_PHASES.has(snap.phase)) this.cancelButton.disabled = true;

    const fields: [string, string | number][] = [
      ["prompted", snap.nodes_prompted],
      ["generated", snap.candidates_generated],
      ["accepted", snap.candidates_accepted],
      ["added", snap.added_nodes],
      ["max depth", snap.current_max_depth],
    ];
    this.counters.replaceChildren(
      ...fields.flatMap(([term, value]) => {
        const dt = document.createElement("dt");
        dt.textContent = term;
        const dd = document.createElement("dd");
        dd.dataset.counter = term.replace(" ", "-");
        dd.textContent = String(value);
        return [dt, dd];
      }),
    );

    const breakdown = Object.entries(snap.candidates_rejected_by_reason)
      .filter(([reason]) => reason !== "passed")
      .sort(([, a], [, b]) => b - a);
    this.reasons.replaceChildren(
      ...breakdown.map(([reason, count]) => {
        const span = document.createElement("span");
        span.className = "reason-count";
        span.dataset.reason = reason;
        span.textContent = `${reason}: ${count}`;
        return span;
      }),
    );

    if (snap.error) {
      const err = document.createElement("span");
      err.className = "run-error";
      err.textContent = snap.error;
      this.reasons.appendChild(err);
    }
  }

  /**
   * Pull decision pages until the cursor stops moving. Rows are keyed by
   * their absolute log line, so resuming (or re-mounting after a refresh)
   * can never duplicate or skip one.
   */
  private async tailDecisions(): Promise<void> {
    for (;;) {
      const page = await this.api.getDecisions(this.runId, this.cursor);
      page.decisions.forEach((row, i) => this.appendRow(row, this.cursor + i));
      if (page.next === this.cursor) break;
      this.cursor = page.next;
    }
  }

  private appendRow(row: DecisionRow, line: number): void {
    if (this.tbody.querySelector(`tr[data-line="${line}"]`)) return;
    const tr = document.createElement("tr");
    tr.dataset.line = String(line);
    tr.className = `decision ${row.outcome}`;
    const cells = [
      String(line + 1),
      row.candidate,
      row.parent_path.join(" > "),
      row.outcome,
      row.reason,
      fmtScore(row.similarity),
      fmtScore(row.judge_score),
    ];
    for (const value of cells) {
      const td = document.createElement("td");
      td.textContent = value;
      tr.appendChild(td);
    }
    this.tbody.appendChild(tr);
  }

  private async refreshTree(): Promise<void> {
    const doc = await this.api.getRunTaxonomy(this.runId);
    this.treeHost.replaceChildren(renderTree(doc));
  }
}
