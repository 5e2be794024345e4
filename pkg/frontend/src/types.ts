// Wire types mirroring the HTTP API's JSON bodies. The server is the sole
// authority on visibility and rights; the client renders these verbatim.

export interface Session {
  token: string;
  user: string;
  roles: string[];
}

export interface FieldView {
  name: string;
  caption: string;
  value_kind:
    | "text"
    | "boolean"
    | "integer"
    | "decimal"
    | "money"
    | "date"
    | "enum"
    | "reference";
  mandatory: boolean;
  value: string | number | boolean | null;
  enum_values: string[];
}

export type StepMode = "edit" | "view" | "hidden";
export type StepStatus = "completed" | "current" | "future" | "skipped";

export interface StepView {
  step_id: string;
  title: string;
  number: number;
  mode: StepMode;
  status: StepStatus;
  deadline: string | null;
  fields: FieldView[];
}

export interface ViewModel {
  instance_id: string;
  proc_type: string;
  status: "current" | "archived";
  version: number;
  steps: StepView[];
}

export interface InstanceSummary {
  id: string;
  proc_type: string;
  status: string;
  created_at: string;
  version: number;
  current_step: string | null;
  overdue: boolean;
}

export interface SearchFilters {
  proc_type?: string;
  status?: string;
  overdue?: boolean;
  text?: string;
  offset?: number;
  limit?: number;
}

export interface Verdict {
  correct: boolean;
  violations: { kind: string; message: string }[];
  report: string;
}

export interface CmDocument {
  format_version: number;
  order: string[];
  anchors: string[];
  cm_id?: string;
}

export interface ReportDoc {
  format_version: number;
  kind: string;
  columns: string[];
  rows: (string | number)[][];
}

export interface SubmitResult {
  id: string;
  version: number;
  current_step: string | null;
}
