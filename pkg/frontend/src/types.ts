// Wire types for the /v1 JSON API. Shapes mirror the server's responses
// exactly; nothing here is computed client-side.

export type FeatureKind = "continuous" | "categorical";

export interface FeatureDef {
  name: string;
  kind: FeatureKind;
  min?: number;
  max?: number;
  categories?: string[];
  mutable: boolean;
}

export interface TargetDef {
  name: string;
  classes: string[];
  favorable?: string;
}

export interface SchemaDef {
  features: FeatureDef[];
  target: TargetDef;
}

// Instance cells are numbers for continuous features, strings for categorical.
export type CellValue = number | string;

export interface FeatureConstraint {
  range?: [number, number];
  allowed?: string[];
  mute?: boolean;
}

export interface ModelInfo {
  id: string;
  kind: string;
  classes: string[];
  schema: SchemaDef;
}

export interface DatasetInfo {
  id: string;
  n_rows: number;
  classes: string[];
}

export interface SessionInfo {
  id: string;
  model_id: string;
  instance: CellValue[];
  input_class: string;
  constraints: Record<string, unknown>;
  schema: SchemaDef;
}

export interface ChangedEntry {
  feature: string;
  from: CellValue;
  to: CellValue;
}

export interface CounterfactualView {
  values: CellValue[];
  distance: number;
  fitness: number;
  class: string;
  changed: ChangedEntry[];
}

export interface GenerationResult {
  input: CellValue[];
  input_class: string;
  counterfactuals: CounterfactualView[];
  warnings: string[];
  session_id: string;
  seed: number;
  history_length: number;
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobInfo {
  id: string;
  kind: string;
  status: JobStatus;
  report: Record<string, unknown> | null;
  error: { code: string; detail: unknown } | null;
}

export interface RobustnessReport {
  kind: "robustness";
  n_selected: number;
  n_explained: number;
  cerscore: number | null;
  ci95: [number, number] | null;
  ncerscore: number | null;
  distances: Record<string, number>;
  failures: number[];
  aborted_reason: string | null;
}

export interface BurdenGroup {
  burden: number | null;
  n: number;
  failures: number;
}

export interface BurdenReport {
  kind: "burden";
  group_by: string[];
  groups: Record<string, BurdenGroup>;
  aborted_reason: string | null;
}

export interface ImportanceReport {
  kind: "importance";
  counts: Record<string, number>;
  fractions: Record<string, number>;
  n_explained: number;
  failures: number[];
  aborted_reason: string | null;
}

export interface FairnessProbeView {
  row_index: number;
  fitness_muted: number;
  fitness_unmuted: number;
  relative_delta: number;
  protected_changed: string[];
  flagged: boolean;
}

export interface FairnessReport {
  kind: "fairness";
  protected: string[];
  threshold: number;
  flagged_fraction: number | null;
  probes: FairnessProbeView[];
  failures: number[];
  aborted_reason: string | null;
}

export type AuditReport =
  | RobustnessReport
  | BurdenReport
  | ImportanceReport
  | FairnessReport;

export type AuditKind = "robustness" | "burden" | "importance" | "individual_fairness";

// Local editor state for one feature row; serialized into PATCH bodies.
export interface EditorRow {
  feature: FeatureDef;
  value: CellValue;
  muted: boolean;
  rangeLo: number | null;
  rangeHi: number | null;
  allowed: Set<string> | null;
  error: string | null;
}
