// Wire formats of the enrichment service. These mirror the server's JSON
// exactly; the console never derives or mutates taxonomy data itself.

export interface TaxonomyNodeDoc {
  name: string;
  source?: string;
  metadata?: Record<string, string>;
  children?: TaxonomyNodeDoc[];
}

export interface TaxonomyStats {
  class_count: number;
  max_depth: number;
}

export interface StoredTaxonomyMeta {
  taxonomy_id: string;
  name: string;
  stats: TaxonomyStats;
  created_at?: string;
}

export type RunPhase = "pending" | "running" | "completed" | "cancelled" | "failed";

export interface RunReportDoc {
  original_class_count: number;
  original_max_depth: number;
  new_class_count: number;
  new_max_depth: number;
  per_model: Record<string, number>;
}

export interface RunSnapshot {
  run_id: string;
  phase: RunPhase;
  nodes_prompted: number;
  candidates_generated: number;
  candidates_accepted: number;
  candidates_rejected_by_reason: Record<string, number>;
  added_nodes: number;
  current_max_depth: number;
  started_at: string | null;
  finished_at: string | null;
  error: string | null;
  taxonomy_id: string;
  model_id: string;
  strategy: string;
  report: RunReportDoc;
}

export interface DecisionRow {
  candidate: string;
  parent_path: string[];
  outcome: "accepted" | "rejected";
  reason: string;
  similarity: number | null;
  judge_score: number | null;
  kg_entity: string | null;
}

export interface DecisionsPage {
  decisions: DecisionRow[];
  after: number;
  next: number;
}

export type MergeColor = "common" | "only-left" | "only-right";

export interface MergeReportEntry {
  path: string[];
  color: MergeColor;
}

export interface MergeReport {
  entries: MergeReportEntry[];
  counts: Record<MergeColor, number>;
}

export interface MergeResponse {
  taxonomy: TaxonomyNodeDoc;
  stats: TaxonomyStats;
  report: MergeReport;
}

export interface RunConfigBody {
  taxonomy_id: string;
  model_id: string;
  strategy?: string;
  rho?: number;
  max_extra_depth?: number;
  judge_enabled?: boolean;
  kg_check_enabled?: boolean;
}
