// Console state and the pure transitions screens are built from.
//
// The one load-bearing invariant: a submission always carries the version
// token of the ViewModel the user edited against. Dirty input therefore
// remembers the version it started from; a 409 keeps the input and shows a
// banner, and `rebaseEdits` is the explicit "apply to the latest state"
// action after the user has reviewed the refreshed view.

import { ApiError } from "./api.js";
import type { Session, StepView, ViewModel } from "./types.js";

export interface DirtyStep {
  /** Version of the ViewModel these edits were made against. */
  version: number;
  fields: Record<string, string>;
}

export interface Banner {
  kind: string;
  message: string;
}

export interface ConsoleState {
  session: Session | null;
  activeRole: string | null;
  selectedId: string | null;
  view: ViewModel | null;
  dirty: Record<string, DirtyStep>;
  banner: Banner | null;
}

export function initialState(): ConsoleState {
  return {
    session: null,
    activeRole: null,
    selectedId: null,
    view: null,
    dirty: {},
    banner: null,
  };
}

export function setSession(state: ConsoleState, session: Session): ConsoleState {
  const activeRole = session.roles.length === 1 ? session.roles[0]! : null;
  return { ...initialState(), session, activeRole };
}

export function pickRole(state: ConsoleState, role: string): ConsoleState {
  if (!state.session || !state.session.roles.includes(role)) {
    throw new Error(`role ${role} not held by this session`);
  }
  return { ...state, activeRole: role, view: null, dirty: {}, banner: null };
}

export function selectProcedure(state: ConsoleState, id: string): ConsoleState {
  return { ...state, selectedId: id, view: null, dirty: {}, banner: null };
}

/** Install a (re)fetched ViewModel. Unsaved input survives the refresh. */
export function applyView(state: ConsoleState, view: ViewModel): ConsoleState {
  return { ...state, selectedId: view.instance_id, view };
}

export function editStep(state: ConsoleState, step: StepView): StepView {
  if (step.mode !== "edit") throw new Error(`step ${step.step_id} is not editable here`);
  return step;
}

/** Record one field's unsaved input. Rejects anything the server did not
 * render as an edit-mode field — the client adds no visibility logic. */
export function editField(
  state: ConsoleState,
  stepId: string,
  field: string,
  value: string,
): ConsoleState {
  if (!state.view) throw new Error("no procedure loaded");
  const step = state.view.steps.find((s) => s.step_id === stepId);
  if (!step || step.mode !== "edit") {
    throw new Error(`step ${stepId} has no edit form`);
  }
  if (!step.fields.some((f) => f.name === field)) {
    throw new Error(`field ${field} is not in the edit form`);
  }
  const existing = state.dirty[stepId];
  const entry: DirtyStep = {
    version: existing?.version ?? state.view.version,
    fields: { ...existing?.fields, [field]: value },
  };
  return { ...state, dirty: { ...state.dirty, [stepId]: entry } };
}

/** The payload for submitStep: only edit-form fields, and the version token
 * of the ViewModel the input was typed against. */
export function buildSubmission(
  state: ConsoleState,
  stepId: string,
): { role: string; version: number; fields: Record<string, string> } {
  const entry = state.dirty[stepId];
  if (!state.activeRole) throw new Error("no active role");
  if (!entry) throw new Error(`no unsaved input for step ${stepId}`);
  return { role: state.activeRole, version: entry.version, fields: { ...entry.fields } };
}

/** After a successful submit the input is no longer "unsaved". */
export function clearDirty(state: ConsoleState, stepId: string): ConsoleState {
  const dirty = { ...state.dirty };
  delete dirty[stepId];
  return { ...state, dirty };
}

/** Surface an API failure without destroying anything the user typed. */
export function applyError(state: ConsoleState, error: unknown): ConsoleState {
  const banner: Banner =
    error instanceof ApiError
      ? { kind: error.kind, message: error.message }
      : { kind: "Error", message: String(error) };
  if (error instanceof ApiError && error.status === 409) {
    banner.message =
      "Someone else changed this procedure while you were editing. " +
      "Your input is preserved below; review the refreshed state and resubmit.";
  }
  return { ...state, banner };
}

/** Explicit user action after a conflict: re-aim the unsaved input at the
 * current ViewModel version. */
export function rebaseEdits(state: ConsoleState, stepId: string): ConsoleState {
  const entry = state.dirty[stepId];
  if (!entry || !state.view) return state;
  return {
    ...state,
    banner: null,
    dirty: {
      ...state.dirty,
      [stepId]: { ...entry, version: state.view.version },
    },
  };
}

export function clearBanner(state: ConsoleState): ConsoleState {
  return { ...state, banner: null };
}

/** The input value a widget should show: unsaved input wins over the
 * server's stored value. */
export function fieldValue(
  state: ConsoleState,
  stepId: string,
  field: string,
): string {
  const dirty = state.dirty[stepId]?.fields[field];
  if (dirty !== undefined) return dirty;
  const step = state.view?.steps.find((s) => s.step_id === stepId);
  const value = step?.fields.find((f) => f.name === field)?.value;
  return value === null || value === undefined ? "" : String(value);
}
