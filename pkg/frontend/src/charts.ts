// Audit dashboards as inline SVG/HTML strings rendered straight from
// report JSON. Values are mapped to pixels here and nothing else; the
// numbers shown are the server's.

import type {
  BurdenReport,
  FairnessReport,
  ImportanceReport,
  JobInfo,
  RobustnessReport,
} from "./types.js";
import { escapeHtml, formatScore } from "./format.js";

const BAR_WIDTH = 520;
const BAR_HEIGHT = 22;
const BAR_GAP = 6;
const LABEL_WIDTH = 150;
const VALUE_PAD = 56;

function px(n: number): string {
  return n.toFixed(1);
}

interface Bar {
  label: string;
  value: number | null;
  detail: string;
  valueLabel?: string;
}

// Shared horizontal bar chart; null values render as an "n/a" row.
function barChart(bars: Bar[], cssClass: string): string {
  const plotWidth = BAR_WIDTH - LABEL_WIDTH - VALUE_PAD;
  const max = Math.max(...bars.map((b) => b.value ?? 0), 1e-12);
  const height = bars.length * (BAR_HEIGHT + BAR_GAP) + BAR_GAP;
  const rows = bars
    .map((bar, i) => {
      const y = BAR_GAP + i * (BAR_HEIGHT + BAR_GAP);
      const textY = y + BAR_HEIGHT / 2 + 4;
      const label = `<text class="bar-label" x="${px(LABEL_WIDTH - 8)}" y="${px(textY)}" text-anchor="end">${escapeHtml(bar.label)}</text>`;
      if (bar.value === null) {
        return `${label}
    <text class="bar-na" x="${px(LABEL_WIDTH + 4)}" y="${px(textY)}">${escapeHtml(bar.detail)}</text>`;
      }
      const w = (bar.value / max) * plotWidth;
      return `${label}
    <rect class="bar" x="${px(LABEL_WIDTH)}" y="${px(y)}" width="${px(Math.max(w, 1))}" height="${BAR_HEIGHT}"><title>${escapeHtml(bar.detail)}</title></rect>
    <text class="bar-value" x="${px(LABEL_WIDTH + Math.max(w, 1) + 6)}" y="${px(textY)}">${bar.valueLabel ?? formatScore(bar.value)}</text>`;
    })
    .join("\n");
  return `<svg class="${cssClass}" viewBox="0 0 ${BAR_WIDTH} ${height}" width="${BAR_WIDTH}" height="${height}" xmlns="http://www.w3.org/2000/svg">
${rows}
</svg>`;
}

// Importance: one bar per feature, sorted by descending change count.
export function importanceBars(report: ImportanceReport): string {
  const order = Object.keys(report.counts).sort((a, b) => {
    const diff = (report.counts[b] ?? 0) - (report.counts[a] ?? 0);
    return diff !== 0 ? diff : a.localeCompare(b);
  });
  const bars: Bar[] = order.map((name) => ({
    label: name,
    value: report.counts[name] ?? 0,
    valueLabel: String(report.counts[name] ?? 0),
    detail: `${name}: changed in ${report.counts[name]} of ${report.n_explained} counterfactuals (${formatScore(report.fractions[name] ?? 0)})`,
  }));
  const chart = barChart(bars, "importance-chart");
  return `<div class="dashboard importance" data-kind="importance">
  <h3>Feature importance</h3>
  <p class="dash-sub">How often each feature appears in a counterfactual diff (${report.n_explained} explained)</p>
  ${abortedBanner(report.aborted_reason)}${chart}
</div>`;
}

// Burden: one bar per group; groups where every search failed have no
// burden value and are listed as such.
export function burdenBars(report: BurdenReport): string {
  const entries = Object.entries(report.groups);
  entries.sort((a, b) => {
    const [, ga] = a;
    const [, gb] = b;
    if (ga.burden === null && gb.burden === null) {
      return a[0].localeCompare(b[0]);
    }
    if (ga.burden === null) {
      return 1;
    }
    if (gb.burden === null) {
      return -1;
    }
    const diff = gb.burden - ga.burden;
    return diff !== 0 ? diff : a[0].localeCompare(b[0]);
  });
  const bars: Bar[] = entries.map(([key, group]) => ({
    label: key,
    value: group.burden,
    detail:
      group.burden === null
        ? `no counterfactuals found for any of ${group.n} rows`
        : `${key}: burden ${formatScore(group.burden)} over ${group.n} rows, ${group.failures} failures`,
  }));
  const chart = barChart(bars, "burden-chart");
  return `<div class="dashboard burden" data-kind="burden">
  <h3>Burden by ${escapeHtml(report.group_by.join(", "))}</h3>
  <p class="dash-sub">Mean effort (1/fitness) a group needs to flip its outcome; higher bars carry more burden</p>
  ${abortedBanner(report.aborted_reason)}${chart}
</div>`;
}

// Robustness: headline score plus a 95% confidence interval drawn as a
// whisker around the mean.
export function robustnessCard(report: RobustnessReport): string {
  const aborted = abortedBanner(report.aborted_reason);
  if (report.cerscore === null) {
    return `<div class="dashboard robustness" data-kind="robustness">
  <h3>Robustness</h3>
  ${aborted}<p class="dash-empty">No counterfactuals found (${report.n_explained} of ${report.n_selected} rows explained).</p>
</div>`;
  }
  const score = report.cerscore;
  const whisker = report.ci95 ? ciWhisker(score, report.ci95) : "";
  const ciText = report.ci95
    ? `<span class="ci-text">95% CI [${formatScore(report.ci95[0])}, ${formatScore(report.ci95[1])}]</span>`
    : `<span class="ci-text">CI unavailable (single observation)</span>`;
  const ncer =
    report.ncerscore === null
      ? ""
      : `<div class="stat"><span class="stat-label">normalized</span><span class="stat-value">${formatScore(report.ncerscore)}</span></div>`;
  return `<div class="dashboard robustness" data-kind="robustness">
  <h3>Robustness</h3>
  <p class="dash-sub">Mean counterfactual distance over ${report.n_explained} rows; larger means a farther decision boundary</p>
  ${aborted}<div class="stat-row">
    <div class="stat"><span class="stat-label">score</span><span class="stat-value">${formatScore(score)}</span></div>
    ${ncer}
    <div class="stat"><span class="stat-label">rows</span><span class="stat-value">${report.n_explained}/${report.n_selected}</span></div>
    <div class="stat"><span class="stat-label">failures</span><span class="stat-value">${report.failures.length}</span></div>
  </div>
  ${whisker}
  ${ciText}
</div>`;
}

// Whisker plot: domain padded around the interval so the mean dot never
// touches the frame.
function ciWhisker(mean: number, ci: [number, number]): string {
  const [lo, hi] = ci;
  const width = 420;
  const margin = 30;
  const pad = Math.max((hi - lo) / 2, Math.abs(mean) * 0.05, 1e-9);
  const d0 = lo - pad;
  const d1 = hi + pad;
  const x = (v: number) => margin + ((v - d0) / (d1 - d0)) * (width - 2 * margin);
  return `<svg class="ci-whisker" viewBox="0 0 ${width} 56" width="${width}" height="56" xmlns="http://www.w3.org/2000/svg">
  <line class="whisker-line" x1="${px(x(lo))}" y1="24" x2="${px(x(hi))}" y2="24"></line>
  <line class="whisker-cap" x1="${px(x(lo))}" y1="14" x2="${px(x(lo))}" y2="34"></line>
  <line class="whisker-cap" x1="${px(x(hi))}" y1="14" x2="${px(x(hi))}" y2="34"></line>
  <circle class="whisker-mean" cx="${px(x(mean))}" cy="24" r="5"></circle>
  <text class="whisker-label" x="${px(x(lo))}" y="50" text-anchor="middle">${formatScore(lo)}</text>
  <text class="whisker-label" x="${px(x(hi))}" y="50" text-anchor="middle">${formatScore(hi)}</text>
</svg>`;
}

// Fairness: headline flagged fraction plus one row per probed instance.
export function fairnessTable(report: FairnessReport): string {
  const rows = report.probes
    .map(
      (p) => `
    <tr class="probe-row${p.flagged ? " flagged" : ""}" data-row="${p.row_index}">
      <td>${p.row_index}</td>
      <td>${formatScore(p.fitness_muted)}</td>
      <td>${formatScore(p.fitness_unmuted)}</td>
      <td>${formatScore(p.relative_delta)}</td>
      <td>${escapeHtml(p.protected_changed.join(", ") || "-")}</td>
      <td>${p.flagged ? "flagged" : "ok"}</td>
    </tr>`,
    )
    .join("");
  const headline =
    report.flagged_fraction === null
      ? "no probes completed"
      : `${formatScore(report.flagged_fraction)} of probes flagged at threshold ${formatScore(report.threshold)}`;
  return `<div class="dashboard fairness" data-kind="fairness">
  <h3>Individual fairness (protected: ${escapeHtml(report.protected.join(", "))})</h3>
  <p class="dash-sub">${escapeHtml(headline)}</p>
  ${abortedBanner(report.aborted_reason)}<table class="fairness-table">
    <thead><tr><th>row</th><th>fitness (muted)</th><th>fitness (free)</th><th>rel. delta</th><th>protected changed</th><th>verdict</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
</div>`;
}

export function jobFailureCard(job: JobInfo): string {
  const code = job.error?.code ?? "unknown";
  const detail = job.error?.detail ?? "no diagnostics";
  return `<div class="dashboard job-failed" data-kind="${escapeHtml(job.kind)}">
  <h3>Audit failed</h3>
  <div class="banner error">
    <span class="error-code">${escapeHtml(code)}</span>
    <span class="error-detail">${escapeHtml(typeof detail === "string" ? detail : JSON.stringify(detail))}</span>
  </div>
</div>`;
}

function abortedBanner(reason: string | null): string {
  if (!reason) {
    return "";
  }
  return `<div class="banner warn" data-aborted="1">aborted early: ${escapeHtml(reason)}</div>`;
}
