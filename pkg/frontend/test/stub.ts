// In-memory stand-in for the enrichment service, driving ApiClient through
// its real fetch path. Tests mutate the public fields to script a session.

import type { FetchLike } from "../src/api.js";
import type {
  DecisionRow,
  MergeResponse,
  RunSnapshot,
  StoredTaxonomyMeta,
  TaxonomyNodeDoc,
} from "../src/types.js";

export interface StubRun {
  /** Queue of status responses; the last entry repeats once reached. */
  snapshots: RunSnapshot[];
  /** Full decision log; only the first `visible` lines are served. */
  log: DecisionRow[];
  visible: number;
  taxonomy: TaxonomyNodeDoc;
}

export function snapshot(overrides: Partial<RunSnapshot> = {}): RunSnapshot {
  return {
    run_id: "r1",
    phase: "running",
    nodes_prompted: 0,
    candidates_generated: 0,
    candidates_accepted: 0,
    candidates_rejected_by_reason: {},
    added_nodes: 0,
    current_max_depth: 0,
    started_at: null,
    finished_at: null,
    error: null,
    taxonomy_id: "t1",
    model_id: "replay-model",
    strategy: "bfs",
    report: {
      original_class_count: 1,
      original_max_depth: 0,
      new_class_count: 0,
      new_max_depth: 0,
      per_model: {},
    },
    ...overrides,
  };
}

export function decisions(count: number): DecisionRow[] {
  return Array.from({ length: count }, (_, i) => ({
    candidate: `Zone ${i}`,
    parent_path: ["Thing"],
    outcome: i % 3 === 2 ? "rejected" : ("accepted" as const),
    reason: i % 3 === 2 ? "below-threshold" : "passed",
    similarity: 0.95,
    judge_score: null,
    kg_entity: null,
  }));
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function error(status: number, code: string, message: string): Response {
  return json({ error: { code, message } }, status);
}

export class StubService {
  pageSize = 3;
  models = ["replay-model", "other-model"];
  taxonomies = new Map<string, { meta: StoredTaxonomyMeta; doc: TaxonomyNodeDoc }>();
  runs = new Map<string, StubRun>();
  mergeResponse: { status: number; body: unknown } | null = null;
  /** Every request as "METHOD path", for traffic assertions. */
  requests: string[] = [];
  /** Fail this many upcoming fetches at the network level. */
  failNext = 0;
  lastRunBody: Record<string, unknown> | null = null;

  addTaxonomy(id: string, doc: TaxonomyNodeDoc, classCount: number, maxDepth: number): void {
    this.taxonomies.set(id, {
      doc,
      meta: {
        taxonomy_id: id,
        name: doc.name,
        stats: { class_count: classCount, max_depth: maxDepth },
      },
    });
  }

  fetch: FetchLike = async (input, init) => {
    const url = new URL(input, "http://stub.local");
    const method = (init?.method ?? "GET").toUpperCase();
    this.requests.push(`${method} ${url.pathname}`);
    if (this.failNext > 0) {
      this.failNext -= 1;
      throw new TypeError("fetch failed");
    }

    if (method === "POST" && url.pathname === "/api/taxonomies") {
      let doc: TaxonomyNodeDoc;
      try {
        doc = JSON.parse(String(init?.body ?? ""));
      } catch {
        return error(400, "MalformedDocument", "not JSON");
      }
      if (!doc.name) return error(400, "SchemaViolation", "node is missing required key 'name'");
      const id = `t${this.taxonomies.size + 1}`;
      this.addTaxonomy(id, doc, countNodes(doc), maxDepth(doc));
      return json(this.taxonomies.get(id)!.meta, 201);
    }

    if (method === "GET" && url.pathname === "/api/taxonomies") {
      return json({ taxonomies: [...this.taxonomies.values()].map((t) => t.meta) });
    }

    if (method === "GET" && url.pathname === "/api/models") {
      return json({ models: this.models });
    }

    if (method === "POST" && url.pathname === "/api/runs") {
      this.lastRunBody = JSON.parse(String(init?.body ?? "{}"));
      const first = this.runs.keys().next();
      const runId = first.done ? "r1" : first.value;
      return json({ run_id: runId, phase: "pending" }, 202);
    }

    if (method === "POST" && url.pathname === "/api/merge") {
      const reply = this.mergeResponse ?? { status: 404, body: { error: { code: "NotFound", message: "no merge scripted" } } };
      return json(reply.body, reply.status);
    }

    const runMatch = url.pathname.match(/^\/api\/runs\/([^/]+)(?:\/(\w+))?$/);
    if (runMatch) {
      const run = this.runs.get(runMatch[1]);
      if (!run) return error(404, "NotFound", `unknown run_id '${runMatch[1]}'`);
      const sub = runMatch[2];
      if (method === "GET" && sub === undefined) {
        const snap = run.snapshots.length > 1 ? run.snapshots.shift()! : run.snapshots[0];
        return json(snap);
      }
      if (method === "GET" && sub === "decisions") {
        const after = Number(url.searchParams.get("after") ?? "0");
        const page = run.log.slice(0, run.visible).slice(after, after + this.pageSize);
        return json({ decisions: page, after, next: after + page.length });
      }
      if (method === "GET" && sub === "taxonomy") {
        return json(run.taxonomy);
      }
      if (method === "POST" && sub === "cancel") {
        return json({ run_id: runMatch[1], phase: "cancelled" }, 202);
      }
    }

    return error(404, "NotFound", `${method} ${url.pathname} not stubbed`);
  };
}

function countNodes(doc: TaxonomyNodeDoc): number {
  return 1 + (doc.children ?? []).reduce((n, c) => n + countNodes(c), 0);
}

function maxDepth(doc: TaxonomyNodeDoc): number {
  const children = doc.children ?? [];
  return children.length === 0 ? 0 : 1 + Math.max(...children.map(maxDepth));
}
