// Pure HTML renderers for the what-if session view. Every function maps
// JSON state to a markup string; no DOM access, no network, no metric
// computation.

import type {
  CellValue,
  CounterfactualView,
  EditorRow,
  GenerationResult,
} from "./types.js";
import { escapeHtml, formatCell, formatScore } from "./format.js";

// Raised when the server hands back a counterfactual that touches a
// feature the session currently mutes. That is a server contract bug
// and must be surfaced loudly instead of rendered as a normal card.
export class MutedViolationError extends Error {
  constructor(feature: string, cardIndex: number) {
    super(
      `contract violation: counterfactual ${cardIndex + 1} changes muted feature ` +
        `'${feature}'; refusing to render it`,
    );
    this.name = "MutedViolationError";
  }
}

export function featureEditor(
  rows: EditorRow[],
  classes: string[],
  targetClass: string | null,
  k: number,
): string {
  const body = rows.map((row) => featureRow(row)).join("");
  const targetOptions = ['<option value="">any other class</option>']
    .concat(
      classes.map(
        (c) =>
          `<option value="${escapeHtml(c)}"${c === targetClass ? " selected" : ""}>${escapeHtml(c)}</option>`,
      ),
    )
    .join("");
  return `
  <table class="editor-table">
    <thead>
      <tr><th>feature</th><th>value</th><th>constraint</th><th>mute</th></tr>
    </thead>
    <tbody>${body}</tbody>
  </table>
  <div class="run-row">
    <label>target class
      <select data-role="target">${targetOptions}</select>
    </label>
    <label>k
      <input data-role="k" type="number" min="1" step="1" value="${k}">
    </label>
  </div>`;
}

function featureRow(row: EditorRow): string {
  const f = row.feature;
  const name = escapeHtml(f.name);
  const locked = !f.mutable;
  const muted = row.muted || locked;
  let editor: string;
  if (f.kind === "continuous") {
    const lo = row.rangeLo === null ? "" : String(row.rangeLo);
    const hi = row.rangeHi === null ? "" : String(row.rangeHi);
    editor = `
      <span class="range-editor">
        <input data-role="lo" data-feature="${name}" type="number" placeholder="${f.min}"
               value="${escapeHtml(lo)}"${muted ? " disabled" : ""}>
        &ndash;
        <input data-role="hi" data-feature="${name}" type="number" placeholder="${f.max}"
               value="${escapeHtml(hi)}"${muted ? " disabled" : ""}>
      </span>`;
  } else {
    const allowed = row.allowed;
    editor = (f.categories ?? [])
      .map((cat) => {
        const checked = allowed === null || allowed.has(cat);
        return `
        <label class="cat-option">
          <input data-role="cat" data-feature="${name}" data-category="${escapeHtml(cat)}"
                 type="checkbox"${checked ? " checked" : ""}${muted ? " disabled" : ""}>
          ${escapeHtml(cat)}
        </label>`;
      })
      .join("");
  }
  const error = row.error
    ? `<div class="field-error" data-error-for="${name}">${escapeHtml(row.error)}</div>`
    : "";
  return `
    <tr class="feature-row${muted ? " is-muted" : ""}" data-feature="${name}">
      <td class="feature-name">${name}${locked ? ' <span class="lock">fixed</span>' : ""}</td>
      <td class="feature-value">${escapeHtml(formatCell(row.value))}</td>
      <td class="feature-editor">${editor}${error}</td>
      <td class="feature-mute">
        <input data-role="mute" data-feature="${name}" type="checkbox"
               ${muted ? "checked" : ""}${locked ? " disabled" : ""}>
      </td>
    </tr>`;
}

export function diffCards(
  result: GenerationResult,
  muted: Set<string>,
  k: number,
): string {
  result.counterfactuals.forEach((cf, index) => {
    for (const change of cf.changed) {
      if (muted.has(change.feature)) {
        throw new MutedViolationError(change.feature, index);
      }
    }
  });
  const banner = warningsBanner(result.warnings);
  const shortfall =
    result.counterfactuals.length < k
      ? `<div class="notice shortfall">Found ${result.counterfactuals.length} of ${k} requested counterfactuals with distinct change patterns.</div>`
      : "";
  const cards = result.counterfactuals
    .map((cf, index) => diffCard(cf, index, result.input_class))
    .join("");
  return `${banner}${shortfall}<div class="diff-cards">${cards}</div>`;
}

function diffCard(cf: CounterfactualView, index: number, inputClass: string): string {
  const rows = cf.changed
    .map(
      (change) => `
      <tr class="diff-row" data-feature="${escapeHtml(change.feature)}">
        <td class="diff-feature">${escapeHtml(change.feature)}</td>
        <td class="diff-before">${escapeHtml(formatCell(change.from))}</td>
        <td class="diff-arrow">&rarr;</td>
        <td class="diff-after">${escapeHtml(formatCell(change.to))}</td>
      </tr>`,
    )
    .join("");
  return `
  <div class="diff-card" data-card="${index}">
    <div class="card-head">
      <span class="card-class">${escapeHtml(inputClass)} &rarr; <strong>${escapeHtml(cf.class)}</strong></span>
      <span class="card-metrics">distance ${formatScore(cf.distance)} &middot; fitness ${formatScore(cf.fitness)}</span>
    </div>
    <table class="diff-table"><tbody>${rows}</tbody></table>
  </div>`;
}

export function warningsBanner(warnings: string[]): string {
  if (warnings.length === 0) {
    return "";
  }
  const lines = warnings
    .map((w) => {
      if (w === "budget_exhausted") {
        return `<div class="banner warn" data-warning="budget_exhausted">Time budget exhausted &mdash; showing the best counterfactuals found so far.</div>`;
      }
      return `<div class="banner info" data-warning="${escapeHtml(w)}">${escapeHtml(w)}</div>`;
    })
    .join("");
  return lines;
}

export function errorBanner(text: string): string {
  return `<div class="banner error">${escapeHtml(text)}</div>`;
}

export function contractViolationBanner(text: string): string {
  return `<div class="banner violation" role="alert">${escapeHtml(text)}</div>`;
}

export interface HistoryEntry {
  run: number;
  seed: number;
  found: number;
  bestDistance: number | null;
  summary: string;
}

export function historyTimeline(entries: HistoryEntry[]): string {
  if (entries.length === 0) {
    return `<div class="history empty">No runs yet.</div>`;
  }
  const items = entries
    .map(
      (e) => `
    <li class="history-entry" data-run="${e.run}">
      <span class="history-run">#${e.run}</span>
      <span class="history-found">${e.found} found</span>
      <span class="history-distance">${e.bestDistance === null ? "&mdash;" : "best d " + formatScore(e.bestDistance)}</span>
      <span class="history-seed">seed ${e.seed}</span>
      <span class="history-summary">${escapeHtml(e.summary)}</span>
    </li>`,
    )
    .join("");
  return `<ol class="history">${items}</ol>`;
}

// One-line description of the active constraints for the history view.
export function constraintsSummary(rows: EditorRow[], targetClass: string | null): string {
  const parts: string[] = [];
  for (const row of rows) {
    const name = row.feature.name;
    if (row.muted) {
      parts.push(`${name} muted`);
    }
    if (row.rangeLo !== null || row.rangeHi !== null) {
      parts.push(`${name} in [${row.rangeLo ?? row.feature.min}, ${row.rangeHi ?? row.feature.max}]`);
    }
    if (row.allowed !== null && row.feature.categories) {
      if (row.allowed.size < row.feature.categories.length) {
        parts.push(`${name} in {${[...row.allowed].join(", ")}}`);
      }
    }
  }
  if (targetClass !== null) {
    parts.push(`target ${targetClass}`);
  }
  return parts.length > 0 ? parts.join("; ") : "unconstrained";
}

export function inputSummary(
  featureNames: string[],
  instance: CellValue[],
  inputClass: string,
): string {
  const cells = featureNames
    .map(
      (name, i) => `
      <span class="input-cell"><span class="input-name">${escapeHtml(name)}</span>
      <span class="input-value">${escapeHtml(formatCell(instance[i] ?? ""))}</span></span>`,
    )
    .join("");
  return `<div class="input-summary">${cells}
    <span class="input-class">predicted <strong>${escapeHtml(inputClass)}</strong></span></div>`;
}
