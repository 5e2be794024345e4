import { describe, expect, it } from "vitest";

import {
  editFormCount,
  escapeHtml,
  renderProcedure,
  renderProcedureList,
  renderReport,
  renderStep,
} from "../src/render.js";
import { applyView, editField, initialState, pickRole, setSession } from "../src/state.js";
import type { FieldView, StepView, ViewModel } from "../src/types.js";

function field(partial: Partial<FieldView>): FieldView {
  return {
    name: "f",
    caption: "Field",
    value_kind: "text",
    mandatory: false,
    value: null,
    enum_values: [],
    ...partial,
  };
}

function step(partial: Partial<StepView>): StepView {
  return {
    step_id: "s1",
    title: "Step one",
    number: 1,
    mode: "view",
    status: "future",
    deadline: null,
    fields: [],
    ...partial,
  };
}

function stateWith(vm: ViewModel, role = "clerk") {
  let s = setSession(initialState(), { token: "t", user: "u", roles: [role] });
  s = pickRole(s, role);
  return applyView(s, vm);
}

function vm(steps: StepView[], version = 1): ViewModel {
  return { instance_id: "i1", proc_type: "A", status: "current", version, steps };
}

describe("rendering", () => {
  it("draws nothing for hidden steps and renders fields verbatim otherwise", () => {
    const s = stateWith(
      vm([
        step({
          step_id: "h",
          mode: "hidden",
          fields: [field({ name: "secret", caption: "secret" })],
        }),
        step({
          step_id: "v",
          mode: "view",
          fields: [field({ name: "open", caption: "open", value: "42" })],
        }),
      ]),
    );
    const html = renderProcedure(s);
    expect(html).not.toContain("secret");
    expect(html).not.toContain('data-step="h"');
    expect(html).toContain("open");
    expect(html).toContain("42");
  });

  it("renders exactly one edit form when the server marks one step edit", () => {
    const s = stateWith(
      vm([
        step({ step_id: "a", mode: "edit", status: "current", fields: [field({})] }),
        step({ step_id: "b" }),
        step({ step_id: "c", status: "completed" }),
      ]),
    );
    const html = renderProcedure(s);
    expect(editFormCount(html)).toBe(1);
    expect(html).toContain('data-action="submit-step" data-step="a"');
  });

  it("an all-view ViewModel (observer) renders zero forms", () => {
    const s = stateWith(
      vm([step({ step_id: "a" }), step({ step_id: "b", status: "completed" })]),
      "observer",
    );
    const html = renderProcedure(s);
    expect(editFormCount(html)).toBe(0);
    expect(html).not.toContain("<form");
  });

  it("chooses widgets by value_kind and marks mandatory fields", () => {
    const s = stateWith(
      vm([
        step({
          step_id: "a",
          mode: "edit",
          fields: [
            field({ name: "flag", value_kind: "boolean", mandatory: true }),
            field({ name: "route", value_kind: "enum", enum_values: ["visit", "desk"] }),
            field({ name: "when", value_kind: "date" }),
            field({ name: "amount", value_kind: "money" }),
            field({ name: "note", value_kind: "text" }),
          ],
        }),
      ]),
    );
    const html = renderProcedure(s);
    expect(html).toContain('<select name="flag"');
    expect(html).toMatch(/<select name="route"[^>]*>.*visit.*desk/);
    expect(html).toContain('type="date"');
    expect(html).toContain('step="0.01"');
    expect(html).toContain('type="text"');
    expect(html).toContain('class="mandatory"');
    expect(html).toMatch(/name="flag"[^>]*required/);
  });

  it("unsaved input wins over the stored value in widgets", () => {
    let s = stateWith(
      vm([
        step({
          step_id: "a",
          mode: "edit",
          fields: [field({ name: "note", value: "old" })],
        }),
      ]),
    );
    s = editField(s, "a", "note", "typed");
    expect(renderProcedure(s)).toContain('value="typed"');
  });

  it("escapes markup coming from the server or the user", () => {
    const html = renderStep(
      stateWith(vm([step({ title: "<img onerror=x>" })])),
      step({ title: "<img onerror=x>" }),
    );
    expect(html).not.toContain("<img");
    expect(escapeHtml(`<&>"'`)).toBe("&lt;&amp;&gt;&quot;&#39;");
  });

  it("renders status badges and the version token", () => {
    const s = stateWith(vm([step({ status: "completed" })], 7));
    const html = renderProcedure(s);
    expect(html).toContain("badge-completed");
    expect(html).toContain('data-version="7"');
  });

  it("procedure list flags overdue rows", () => {
    const html = renderProcedureList([
      {
        id: "i1",
        proc_type: "A",
        status: "current",
        created_at: "2024-01-01T09:00:00",
        version: 2,
        current_step: "C2",
        overdue: true,
      },
    ]);
    expect(html).toContain('class="overdue"');
    expect(html).toContain("C2");
  });

  it("report tables carry a CSV download control", () => {
    const html = renderReport({
      format_version: 1,
      kind: "counts_by_type_and_status",
      columns: ["proc_type", "current", "archived"],
      rows: [["A", 1, 0]],
    });
    expect(html).toContain('data-action="download-csv"');
    expect(html).toContain("<th>proc_type</th>");
    expect(html).toContain("<td>A</td>");
  });
});
