// Browser wiring: one ApiClient, one ConsoleState, interval polling of the
// selected procedure's ViewModel. All rendering goes through the pure
// functions in render.ts; this file only moves events in and markup out.

import { ApiClient, ApiError } from "./api.js";
import {
  applyError,
  applyView,
  buildSubmission,
  clearDirty,
  type ConsoleState,
  editField,
  initialState,
  pickRole,
  rebaseEdits,
  selectProcedure,
  setSession,
} from "./state.js";
import {
  renderProcedure,
  renderProcedureList,
  renderReport,
  renderRolePicker,
} from "./render.js";

const POLL_MS = 5000;

export class ConsoleApp {
  state: ConsoleState = initialState();
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
  ) {}

  async login(user: string, password: string): Promise<void> {
    this.state = setSession(this.state, await this.api.login(user, password));
    this.paint();
  }

  async openList(filters = {}): Promise<void> {
    const { results } = await this.api.searchProcedures(filters);
    this.root.querySelector("#list")!.innerHTML = renderProcedureList(results);
  }

  async open(instanceId: string): Promise<void> {
    this.state = selectProcedure(this.state, instanceId);
    await this.refetch();
    if (this.timer) clearInterval(this.timer);
    this.timer = setInterval(() => void this.refetch(), POLL_MS);
  }

  async refetch(): Promise<void> {
    if (!this.state.selectedId || !this.state.activeRole) return;
    try {
      const vm = await this.api.getView(this.state.selectedId, this.state.activeRole);
      this.state = applyView(this.state, vm);
    } catch (err) {
      this.state = applyError(this.state, err);
    }
    this.paint();
  }

  async submit(stepId: string): Promise<void> {
    if (!this.state.selectedId) return;
    try {
      await this.api.submitStep(
        this.state.selectedId,
        stepId,
        buildSubmission(this.state, stepId),
      );
      this.state = clearDirty(this.state, stepId);
    } catch (err) {
      this.state = applyError(this.state, err);
      if (err instanceof ApiError && err.status === 401) return;
    }
    await this.refetch();
  }

  onInput(stepId: string, field: string, value: string): void {
    this.state = editField(this.state, stepId, field, value);
  }

  onPickRole(role: string): void {
    this.state = pickRole(this.state, role);
    this.paint();
  }

  onRebase(stepId: string): void {
    this.state = rebaseEdits(this.state, stepId);
    this.paint();
  }

  async showReport(kind: string): Promise<void> {
    this.root.querySelector("#report")!.innerHTML = renderReport(
      await this.api.getReport(kind),
    );
  }

  paint(): void {
    const detail = this.root.querySelector("#procedure");
    if (detail) detail.innerHTML = renderProcedure(this.state);
    const picker = this.root.querySelector("#roles");
    if (picker && this.state.session) {
      picker.innerHTML = renderRolePicker(
        this.state.session.roles,
        this.state.activeRole,
      );
    }
  }
}

export function mount(baseUrl: string, root: HTMLElement): ConsoleApp {
  const app = new ConsoleApp(new ApiClient(baseUrl), root);
  root.addEventListener("input", (event) => {
    const target = event.target as HTMLInputElement | HTMLSelectElement;
    const stepId = target.dataset?.step;
    if (stepId && target.name) app.onInput(stepId, target.name, target.value);
  });
  root.addEventListener("submit", (event) => {
    const form = event.target as HTMLFormElement;
    if (form.dataset?.step) {
      event.preventDefault();
      void app.submit(form.dataset.step);
    }
  });
  root.addEventListener("click", (event) => {
    const el = event.target as HTMLElement;
    switch (el.dataset?.action) {
      case "open":
        event.preventDefault();
        void app.open(el.dataset.id!);
        break;
      case "download-csv":
        void app.showReport(el.dataset.kind!);
        break;
      case "dismiss-banner":
        app.state = { ...app.state, banner: null };
        app.paint();
        break;
    }
  });
  return app;
}
