// HTML rendering, framework-free: pure functions from state to markup so
// they are trivially testable. The ViewModel is rendered verbatim — hidden
// steps and fields simply are not in it (or are marked hidden) and the
// renderer draws nothing for them.

import type { ConsoleState } from "./state.js";
import { fieldValue } from "./state.js";
import type {
  FieldView,
  InstanceSummary,
  ReportDoc,
  StepView,
  ViewModel,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

const e = escapeHtml;

export function statusBadge(status: string): string {
  return `<span class="badge badge-${e(status)}">${e(status)}</span>`;
}

export function renderBanner(state: ConsoleState): string {
  if (!state.banner) return "";
  return (
    `<div class="banner banner-${e(state.banner.kind)}" role="alert">` +
    `${e(state.banner.message)}` +
    `<button data-action="dismiss-banner">dismiss</button></div>`
  );
}

function widget(stepId: string, field: FieldView, value: string): string {
  const name = e(field.name);
  const common =
    `name="${name}" data-step="${e(stepId)}"` +
    (field.mandatory ? " required" : "");
  switch (field.value_kind) {
    case "boolean": {
      const options = ["", "true", "false"]
        .map(
          (opt) =>
            `<option value="${opt}"${opt === value ? " selected" : ""}>${opt || "—"}</option>`,
        )
        .join("");
      return `<select ${common}>${options}</select>`;
    }
    case "enum": {
      const options = ["", ...field.enum_values]
        .map(
          (opt) =>
            `<option value="${e(opt)}"${opt === value ? " selected" : ""}>${e(opt) || "—"}</option>`,
        )
        .join("");
      return `<select ${common}>${options}</select>`;
    }
    case "date":
      return `<input type="date" ${common} value="${e(value)}">`;
    case "integer":
      return `<input type="number" step="1" ${common} value="${e(value)}">`;
    case "decimal":
    case "money":
      return `<input type="number" step="0.01" ${common} value="${e(value)}">`;
    default:
      return `<input type="text" ${common} value="${e(value)}">`;
  }
}

function renderField(
  state: ConsoleState,
  stepId: string,
  field: FieldView,
  editable: boolean,
): string {
  const label =
    `<label>${e(field.caption || field.name)}` +
    (field.mandatory ? '<span class="mandatory">*</span>' : "") +
    `</label>`;
  if (!editable) {
    const shown = field.value === null || field.value === undefined
      ? "—"
      : String(field.value);
    return `<div class="field">${label}<span class="value">${e(shown)}</span></div>`;
  }
  return `<div class="field">${label}${widget(stepId, field, fieldValue(state, stepId, field.name))}</div>`;
}

export function renderStep(state: ConsoleState, step: StepView): string {
  if (step.mode === "hidden") return "";
  const heading =
    `<h3>${step.number}. ${e(step.title)} ${statusBadge(step.status)}</h3>` +
    (step.deadline ? `<p class="deadline">due ${e(step.deadline)}</p>` : "");
  if (step.mode === "edit") {
    const fields = step.fields
      .map((f) => renderField(state, step.step_id, f, true))
      .join("");
    return (
      `<form class="step step-edit" data-step="${e(step.step_id)}">` +
      heading +
      fields +
      `<button type="submit" data-action="submit-step" data-step="${e(step.step_id)}">Save</button>` +
      `</form>`
    );
  }
  const fields = step.fields
    .map((f) => renderField(state, step.step_id, f, false))
    .join("");
  return `<section class="step step-view" data-step="${e(step.step_id)}">${heading}${fields}</section>`;
}

export function renderProcedure(state: ConsoleState): string {
  const vm = state.view;
  if (!vm) return `<p class="empty">No procedure selected.</p>`;
  const header =
    `<header><h2>${e(vm.proc_type)} · ${e(vm.instance_id)} ` +
    `${statusBadge(vm.status)}</h2>` +
    `<span class="version" data-version="${vm.version}">v${vm.version}</span></header>`;
  return (
    renderBanner(state) +
    header +
    vm.steps.map((s) => renderStep(state, s)).join("")
  );
}

export function renderProcedureList(rows: InstanceSummary[]): string {
  if (!rows.length) return `<p class="empty">No procedures match.</p>`;
  const body = rows
    .map(
      (r) =>
        `<tr data-id="${e(r.id)}"${r.overdue ? ' class="overdue"' : ""}>` +
        `<td><a href="#" data-action="open" data-id="${e(r.id)}">${e(r.id)}</a></td>` +
        `<td>${e(r.proc_type)}</td><td>${statusBadge(r.status)}</td>` +
        `<td>${e(r.current_step ?? "—")}</td>` +
        `<td>${r.overdue ? "overdue" : ""}</td></tr>`,
    )
    .join("");
  return (
    `<table class="procedures"><thead><tr>` +
    `<th>id</th><th>type</th><th>status</th><th>current step</th><th></th>` +
    `</tr></thead><tbody>${body}</tbody></table>`
  );
}

export function renderReport(doc: ReportDoc): string {
  const head = doc.columns.map((c) => `<th>${e(c)}</th>`).join("");
  const body = doc.rows
    .map((row) => `<tr>${row.map((v) => `<td>${e(String(v))}</td>`).join("")}</tr>`)
    .join("");
  return (
    `<h2>${e(doc.kind)}</h2>` +
    `<button data-action="download-csv" data-kind="${e(doc.kind)}">Download CSV</button>` +
    `<table class="report"><thead><tr>${head}</tr></thead><tbody>${body}</tbody></table>`
  );
}

export function renderRolePicker(roles: string[], active: string | null): string {
  const options = roles
    .map(
      (r) =>
        `<option value="${e(r)}"${r === active ? " selected" : ""}>${e(r)}</option>`,
    )
    .join("");
  return `<select data-action="pick-role">${options}</select>`;
}

/** Helpers the e2e script asserts against. */
export function editFormCount(html: string): number {
  return html.split('class="step step-edit"').length - 1;
}

export function renderedVersion(vm: ViewModel): number {
  return vm.version;
}
