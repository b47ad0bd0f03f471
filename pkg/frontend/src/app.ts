// Single-page what-if explorer. Wires the editor, diff cards, history
// and audit dashboards to the /v1 API; all model work happens server
// side and every state change flows through ApiClient.

import { ApiClient, ApiError } from "./api.js";
import {
  constraintsSummary,
  contractViolationBanner,
  diffCards,
  errorBanner,
  featureEditor,
  historyTimeline,
  inputSummary,
  MutedViolationError,
  type HistoryEntry,
} from "./render.js";
import {
  burdenBars,
  fairnessTable,
  importanceBars,
  jobFailureCard,
  robustnessCard,
} from "./charts.js";
import {
  ALL_MUTED_MESSAGE,
  allMuted,
  validateInstanceCell,
  validateK,
  validateRange,
  validateAllowed,
} from "./validate.js";
import type {
  AuditKind,
  BurdenReport,
  CellValue,
  EditorRow,
  FairnessReport,
  GenerationResult,
  ImportanceReport,
  ModelInfo,
  RobustnessReport,
  SessionInfo,
} from "./types.js";
import { cssAttr, escapeHtml } from "./format.js";

export interface AppOptions {
  baseUrl?: string;
  // debounce for constraint PATCHes; tests set 0 for immediate flushes
  debounceMs?: number;
}

const SHELL = `
<header class="topbar">
  <span class="brand">counterfactual <span>what-if</span> explorer</span>
  <span class="conn" id="conn">connecting&hellip;</span>
</header>
<nav class="tabs">
  <button class="tab active" data-tab="session">What-if session</button>
  <button class="tab" data-tab="audits">Audits</button>
</nav>
<section id="tab-session" class="tab-page">
  <div class="panel setup-panel">
    <form id="model-form">
      <label>model artifact path
        <input id="model-path" type="text" placeholder="/path/to/model.cfa">
      </label>
      <button id="load-model" type="submit">Load model</button>
      <span class="form-status" id="model-status"></span>
    </form>
    <div id="instance-setup"></div>
  </div>
  <div id="session-panel" hidden>
    <div class="panel">
      <h3>Input instance</h3>
      <div id="input-summary"></div>
    </div>
    <div class="panel">
      <h3>Constraints</h3>
      <div id="editor"></div>
    </div>
    <div class="panel run-panel">
      <label>seed <input id="run-seed" type="number" value="0"></label>
      <label>generations <input id="run-generations" type="number" min="1" placeholder="300"></label>
      <label>population <input id="run-population" type="number" min="2" placeholder="auto"></label>
      <button id="generate" type="button">Generate counterfactuals</button>
      <span class="form-status" id="run-status"></span>
    </div>
    <div id="violation"></div>
    <div class="panel">
      <h3>Counterfactuals</h3>
      <div id="results"><div class="history empty">Nothing generated yet.</div></div>
    </div>
    <div class="panel">
      <h3>History</h3>
      <div id="history"></div>
    </div>
  </div>
</section>
<section id="tab-audits" class="tab-page" hidden>
  <div class="panel">
    <form id="dataset-form">
      <label>dataset CSV path
        <input id="dataset-csv" type="text" placeholder="/path/to/data.csv">
      </label>
      <button id="load-dataset" type="submit">Register dataset</button>
      <span class="form-status" id="dataset-status"></span>
    </form>
  </div>
  <div class="panel">
    <form id="audit-form">
      <label>audit
        <select id="audit-kind">
          <option value="robustness">robustness</option>
          <option value="burden">burden</option>
          <option value="importance">importance</option>
          <option value="individual_fairness">fairness</option>
        </select>
      </label>
      <label>sample size <input id="audit-sample" type="number" min="1" value="8"></label>
      <label class="audit-opt" data-for="burden">group by <input id="audit-group" type="text" placeholder="feature,feature"></label>
      <label class="audit-opt" data-for="individual_fairness">protected <input id="audit-protected" type="text" placeholder="feature,feature"></label>
      <label class="audit-opt" data-for="individual_fairness">threshold <input id="audit-threshold" type="number" step="0.01" value="0.05"></label>
      <label>seed <input id="audit-seed" type="number" value="0"></label>
      <label>generations <input id="audit-generations" type="number" min="1" value="30"></label>
      <label>population <input id="audit-population" type="number" min="2" value="60"></label>
      <button id="start-audit" type="submit">Run audit</button>
      <span class="form-status" id="audit-status"></span>
    </form>
  </div>
  <div id="dashboard" class="panel"><div class="history empty">No audit yet.</div></div>
</section>`;

export class App {
  readonly api: ApiClient;
  readonly root: HTMLElement;
  private readonly debounceMs: number;

  model: ModelInfo | null = null;
  datasetId: string | null = null;
  session: SessionInfo | null = null;
  rows: EditorRow[] = [];
  targetClass: string | null = null;
  k = 1;
  pending = false;
  auditPending = false;
  lastResult: GenerationResult | null = null;
  history: HistoryEntry[] = [];

  private inflight = 0;
  private patchTimer: ReturnType<typeof setTimeout> | null = null;
  private patchQueue: Record<string, unknown> = {};

  constructor(root: HTMLElement, options: AppOptions = {}) {
    this.root = root;
    this.api = new ApiClient(options.baseUrl ?? "");
    this.debounceMs = options.debounceMs ?? 250;
    root.innerHTML = SHELL;
    this.bindEvents();
    this.track(async () => {
      try {
        await this.api.healthz();
        this.el("conn").textContent = "connected";
        this.el("conn").className = "conn ok";
      } catch {
        this.el("conn").textContent = "server unreachable";
        this.el("conn").className = "conn bad";
      }
    });
  }

  // Resolves once no request is in flight and no PATCH is queued.
  async whenIdle(): Promise<void> {
    for (;;) {
      if (this.inflight === 0 && this.patchTimer === null && !this.pending && !this.auditPending) {
        return;
      }
      await new Promise((resolve) => setTimeout(resolve, 5));
    }
  }

  private el(id: string): HTMLElement {
    const node = this.root.querySelector(`#${id}`);
    if (!node) {
      throw new Error(`missing element #${id}`);
    }
    return node as HTMLElement;
  }

  private input(id: string): HTMLInputElement {
    return this.el(id) as HTMLInputElement;
  }

  private track(fn: () => Promise<void>): void {
    this.inflight += 1;
    void fn().finally(() => {
      this.inflight -= 1;
    });
  }

  private bindEvents(): void {
    this.root.addEventListener("submit", (event) => {
      const form = event.target as HTMLElement;
      event.preventDefault();
      if (form.id === "model-form") {
        this.track(() => this.loadModel());
      } else if (form.id === "dataset-form") {
        this.track(() => this.loadDataset());
      } else if (form.id === "instance-form") {
        this.track(() => this.startSession());
      } else if (form.id === "audit-form") {
        this.track(() => this.runAudit());
      }
    });
    this.root.addEventListener("click", (event) => {
      const target = event.target as HTMLElement;
      if (target.matches(".tab")) {
        this.switchTab(target.dataset.tab === "audits" ? "audits" : "session");
      } else if (target.id === "generate") {
        this.track(() => this.generate());
      }
    });
    this.root.addEventListener("change", (event) => {
      const target = event.target as HTMLInputElement | HTMLSelectElement;
      const role = target.dataset.role;
      if (!role) {
        if (target.id === "audit-kind") {
          this.updateAuditOptions();
        }
        return;
      }
      if (role === "mute") {
        this.onMuteToggle(target as HTMLInputElement);
      } else if (role === "cat") {
        this.onCategoryToggle(target as HTMLInputElement);
      } else if (role === "target") {
        this.onTargetChange(target as HTMLSelectElement);
      } else if (role === "k") {
        this.onKChange(target as HTMLInputElement);
      } else if (role === "lo" || role === "hi") {
        this.onRangeEdit(target as HTMLInputElement);
      }
    });
    // live range editing validates per keystroke but PATCHes debounced
    this.root.addEventListener("input", (event) => {
      const target = event.target as HTMLInputElement;
      if (target.dataset.role === "lo" || target.dataset.role === "hi") {
        this.onRangeEdit(target);
      }
    });
  }

  private switchTab(tab: "session" | "audits"): void {
    for (const button of this.root.querySelectorAll(".tab")) {
      button.classList.toggle("active", (button as HTMLElement).dataset.tab === tab);
    }
    this.el("tab-session").hidden = tab !== "session";
    this.el("tab-audits").hidden = tab !== "audits";
  }

  // ---- setup flow -------------------------------------------------

  private async loadModel(): Promise<void> {
    const status = this.el("model-status");
    status.textContent = "loading...";
    try {
      this.model = await this.api.loadModel(this.input("model-path").value.trim());
      status.textContent = `loaded ${this.model.id} (${this.model.kind}, classes: ${this.model.classes.join(", ")})`;
      this.renderInstanceSetup();
    } catch (err) {
      status.textContent = describeError(err);
      this.model = null;
    }
  }

  private renderInstanceSetup(): void {
    const model = this.model;
    if (!model) {
      return;
    }
    const fields = model.schema.features
      .map((f) => {
        const name = escapeHtml(f.name);
        if (f.kind === "continuous") {
          return `<label class="inst-field">${name}
            <input data-instance="${name}" type="number" step="any" value="${f.min ?? 0}">
            <span class="field-error" data-instance-error="${name}"></span>
          </label>`;
        }
        const options = (f.categories ?? [])
          .map((c) => `<option value="${escapeHtml(c)}">${escapeHtml(c)}</option>`)
          .join("");
        return `<label class="inst-field">${name}
          <select data-instance="${name}">${options}</select>
          <span class="field-error" data-instance-error="${name}"></span>
        </label>`;
      })
      .join("");
    this.el("instance-setup").innerHTML = `
      <form id="instance-form">
        <h3>Instance</h3>
        <div class="inst-grid">${fields}</div>
        <button id="start-session" type="submit">Start session</button>
        <span class="form-status" id="session-status"></span>
      </form>`;
  }

  private async startSession(): Promise<void> {
    const model = this.model;
    if (!model) {
      return;
    }
    const status = this.el("session-status");
    const instance: CellValue[] = [];
    let blocked = false;
    for (const f of model.schema.features) {
      const field = this.root.querySelector(
        `[data-instance="${cssAttr(f.name)}"]`,
      ) as HTMLInputElement | HTMLSelectElement;
      const errorSlot = this.root.querySelector(
        `[data-instance-error="${cssAttr(f.name)}"]`,
      ) as HTMLElement;
      const checked = validateInstanceCell(f, field.value);
      errorSlot.textContent = checked.error ?? "";
      if (checked.error) {
        blocked = true;
      } else {
        instance.push(checked.value);
      }
    }
    if (blocked) {
      status.textContent = "fix the highlighted fields";
      return;
    }
    status.textContent = "starting...";
    try {
      this.session = await this.api.createSession(model.id, instance);
    } catch (err) {
      status.textContent = describeError(err);
      return;
    }
    status.textContent = `session ${this.session.id}`;
    this.rows = model.schema.features.map((feature, i) => ({
      feature,
      value: this.session!.instance[i] ?? "",
      muted: false,
      rangeLo: null,
      rangeHi: null,
      allowed: null,
      error: null,
    }));
    this.targetClass = null;
    this.k = 1;
    this.history = [];
    this.lastResult = null;
    this.el("session-panel").hidden = false;
    this.el("input-summary").innerHTML = inputSummary(
      model.schema.features.map((f) => f.name),
      this.session.instance,
      this.session.input_class,
    );
    this.renderEditor();
    this.renderHistory();
  }

  // ---- constraint editing -----------------------------------------

  mutedSet(): Set<string> {
    const muted = new Set<string>();
    for (const row of this.rows) {
      if (row.muted || !row.feature.mutable) {
        muted.add(row.feature.name);
      }
    }
    return muted;
  }

  private row(name: string): EditorRow {
    const row = this.rows.find((r) => r.feature.name === name);
    if (!row) {
      throw new Error(`no editor row for feature ${name}`);
    }
    return row;
  }

  private onMuteToggle(box: HTMLInputElement): void {
    const row = this.row(box.dataset.feature ?? "");
    row.muted = box.checked;
    row.error = null;
    if (box.checked && allMuted(this.rows)) {
      row.error = ALL_MUTED_MESSAGE;
      row.muted = false;
      this.renderEditor();
      return;
    }
    this.queuePatch({ [row.feature.name]: { mute: row.muted } });
    this.renderEditor();
  }

  private onRangeEdit(input: HTMLInputElement): void {
    const row = this.row(input.dataset.feature ?? "");
    const raw = input.value.trim();
    const parsed = raw === "" ? null : Number(raw);
    if (input.dataset.role === "lo") {
      row.rangeLo = Number.isNaN(parsed as number) ? row.rangeLo : parsed;
    } else {
      row.rangeHi = Number.isNaN(parsed as number) ? row.rangeHi : parsed;
    }
    // an empty box means "schema bound", which is always valid
    const lo = row.rangeLo ?? row.feature.min ?? 0;
    const hi = row.rangeHi ?? row.feature.max ?? 0;
    const problem = validateRange(row.feature, lo, hi);
    this.setRowError(row, problem);
    if (problem) {
      return;
    }
    this.queuePatch({ [row.feature.name]: { range: [lo, hi] } });
  }

  private onCategoryToggle(box: HTMLInputElement): void {
    const row = this.row(box.dataset.feature ?? "");
    const all = row.feature.categories ?? [];
    if (row.allowed === null) {
      row.allowed = new Set(all);
    }
    if (box.checked) {
      row.allowed.add(box.dataset.category ?? "");
    } else {
      row.allowed.delete(box.dataset.category ?? "");
    }
    const problem = validateAllowed(row.feature, [...row.allowed]);
    this.setRowError(row, problem);
    if (problem) {
      return;
    }
    const ordered = all.filter((c) => row.allowed!.has(c));
    this.queuePatch({ [row.feature.name]: { allowed: ordered } });
  }

  private onTargetChange(select: HTMLSelectElement): void {
    this.targetClass = select.value === "" ? null : select.value;
    this.queuePatch({ target_class: this.targetClass });
  }

  private onKChange(input: HTMLInputElement): void {
    const k = Number(input.value);
    const problem = validateK(k);
    const status = this.el("run-status");
    if (problem) {
      status.textContent = problem;
      return;
    }
    status.textContent = "";
    this.k = k;
    this.queuePatch({ k });
  }

  private setRowError(row: EditorRow, problem: string | null): void {
    row.error = problem;
    const slot = this.root.querySelector(
      `[data-error-for="${cssAttr(row.feature.name)}"]`,
    );
    const cell = this.root.querySelector(
      `.feature-row[data-feature="${cssAttr(row.feature.name)}"] .feature-editor`,
    );
    if (problem && !slot && cell) {
      const div = document.createElement("div");
      div.className = "field-error";
      div.setAttribute("data-error-for", row.feature.name);
      div.textContent = problem;
      cell.appendChild(div);
    } else if (slot) {
      if (problem) {
        slot.textContent = problem;
      } else {
        slot.remove();
      }
    }
  }

  // Merge edits and PATCH them after the debounce window. Invalid edits
  // never reach this point, so the queue always mirrors legal state.
  private queuePatch(patch: Record<string, unknown>): void {
    for (const [key, value] of Object.entries(patch)) {
      if (key === "target_class" || key === "k") {
        this.patchQueue[key] = value;
        continue;
      }
      const existing = (this.patchQueue[key] as Record<string, unknown>) ?? {};
      this.patchQueue[key] = { ...existing, ...(value as Record<string, unknown>) };
    }
    if (this.patchTimer !== null) {
      clearTimeout(this.patchTimer);
    }
    this.patchTimer = setTimeout(() => {
      void this.flushPatch();
    }, this.debounceMs);
  }

  private async flushPatch(): Promise<void> {
    const session = this.session;
    const body = this.patchQueue;
    this.patchQueue = {};
    this.inflight += 1;
    try {
      if (session && Object.keys(body).length > 0) {
        await this.api.patchConstraints(session.id, body);
      }
    } catch (err) {
      if (err instanceof ApiError && typeof err.detail !== "string") {
        for (const field of err.detail) {
          const row = this.rows.find((r) => r.feature.name === field.feature);
          if (row) {
            this.setRowError(row, field.message);
          }
        }
      } else {
        this.el("run-status").textContent = describeError(err);
      }
    } finally {
      this.patchTimer = null;
      this.inflight -= 1;
    }
  }

  private renderEditor(): void {
    const model = this.model;
    if (!model) {
      return;
    }
    this.el("editor").innerHTML = featureEditor(
      this.rows,
      model.classes,
      this.targetClass,
      this.k,
    );
  }

  // ---- generation --------------------------------------------------

  private async generate(): Promise<void> {
    const session = this.session;
    if (!session || this.pending) {
      return;
    }
    this.pending = true;
    const button = this.input("generate");
    button.disabled = true;
    const status = this.el("run-status");
    status.textContent = "searching...";
    try {
      // make sure queued edits land before the run
      if (this.patchTimer !== null) {
        clearTimeout(this.patchTimer);
        await this.flushPatch();
      }
      const body: Record<string, unknown> = {};
      const seed = this.input("run-seed").value.trim();
      const generations = this.input("run-generations").value.trim();
      const population = this.input("run-population").value.trim();
      if (seed !== "") {
        body["seed"] = Number(seed);
      }
      if (generations !== "") {
        body["generations"] = Number(generations);
      }
      if (population !== "") {
        body["population_size"] = Number(population);
      }
      const result = await this.api.generate(session.id, body);
      this.lastResult = result;
      this.renderResult(result);
      status.textContent = "";
    } catch (err) {
      this.el("results").innerHTML = errorBanner(describeError(err));
      status.textContent = "";
    } finally {
      this.pending = false;
      button.disabled = false;
    }
  }

  private renderResult(result: GenerationResult): void {
    this.el("violation").innerHTML = "";
    let html: string;
    try {
      html = diffCards(result, this.mutedSet(), this.k);
    } catch (err) {
      if (err instanceof MutedViolationError) {
        this.el("violation").innerHTML = contractViolationBanner(err.message);
        this.el("results").innerHTML = "";
        return;
      }
      throw err;
    }
    this.el("results").innerHTML = html;
    const best = result.counterfactuals[0];
    this.history.push({
      run: this.history.length + 1,
      seed: result.seed,
      found: result.counterfactuals.length,
      bestDistance: best ? best.distance : null,
      summary: constraintsSummary(this.rows, this.targetClass),
    });
    this.renderHistory();
  }

  private renderHistory(): void {
    this.el("history").innerHTML = historyTimeline(this.history);
  }

  // ---- audits -------------------------------------------------------

  private async loadDataset(): Promise<void> {
    const status = this.el("dataset-status");
    if (!this.model) {
      status.textContent = "load a model first";
      return;
    }
    status.textContent = "registering...";
    try {
      const info = await this.api.createDatasetFromCsv(
        this.input("dataset-csv").value.trim(),
        this.model.id,
      );
      this.datasetId = info.id;
      status.textContent = `dataset ${info.id} (${info.n_rows} rows)`;
    } catch (err) {
      status.textContent = describeError(err);
    }
  }

  private updateAuditOptions(): void {
    const kind = (this.el("audit-kind") as HTMLSelectElement).value;
    for (const label of this.root.querySelectorAll(".audit-opt")) {
      (label as HTMLElement).hidden = (label as HTMLElement).dataset.for !== kind;
    }
  }

  private async runAudit(): Promise<void> {
    const status = this.el("audit-status");
    if (!this.model) {
      status.textContent = "load a model first";
      return;
    }
    if (!this.datasetId) {
      status.textContent = "register a dataset first";
      return;
    }
    if (this.auditPending) {
      return;
    }
    const kind = (this.el("audit-kind") as HTMLSelectElement).value as AuditKind;
    const body: Record<string, unknown> = {
      model_id: this.model.id,
      dataset_id: this.datasetId,
      sample_size: Number(this.input("audit-sample").value) || undefined,
      seed: Number(this.input("audit-seed").value) || 0,
      generations: Number(this.input("audit-generations").value) || undefined,
      population_size: Number(this.input("audit-population").value) || undefined,
    };
    if (kind === "burden") {
      body["group_by"] = splitList(this.input("audit-group").value);
    }
    if (kind === "individual_fairness") {
      body["protected"] = splitList(this.input("audit-protected").value);
      body["threshold"] = Number(this.input("audit-threshold").value) || 0.05;
    }
    this.auditPending = true;
    const button = this.input("start-audit");
    button.disabled = true;
    try {
      const started = await this.api.startAudit(kind, body);
      status.textContent = `job ${started.job_id} running...`;
      const job = await this.api.waitForJob(started.job_id);
      if (job.status === "failed") {
        this.el("dashboard").innerHTML = jobFailureCard(job);
        status.textContent = `job ${job.id} failed`;
        return;
      }
      status.textContent = `job ${job.id} done`;
      this.el("dashboard").innerHTML = renderReport(kind, job.report ?? {});
    } catch (err) {
      status.textContent = describeError(err);
    } finally {
      this.auditPending = false;
      button.disabled = false;
    }
  }
}

function renderReport(kind: AuditKind, report: Record<string, unknown>): string {
  switch (kind) {
    case "robustness":
      return robustnessCard(report as unknown as RobustnessReport);
    case "burden":
      return burdenBars(report as unknown as BurdenReport);
    case "importance":
      return importanceBars(report as unknown as ImportanceReport);
    case "individual_fairness":
      return fairnessTable(report as unknown as FairnessReport);
  }
}

function splitList(raw: string): string[] {
  return raw
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0);
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.code}: ${err.text()}`;
  }
  return err instanceof Error ? err.message : String(err);
}
