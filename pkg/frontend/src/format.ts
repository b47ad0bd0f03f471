// Small formatting helpers shared by the renderers.

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

// Escape a value for use inside a double-quoted attribute selector.
export function cssAttr(value: string): string {
  return value.replace(/\\/g, "\\\\").replace(/"/g, '\\"');
}

// Render a number the way the server's error messages do (floats keep a
// trailing .0), so client-side validation can mirror them verbatim.
export function pyNum(n: number): string {
  if (Number.isInteger(n) && Math.abs(n) < 1e16) {
    return `${n}.0`;
  }
  return String(n);
}

// Quoted list the way the server prints unknown categories.
export function pyStrList(items: string[]): string {
  return `[${items.map((s) => `'${s}'`).join(", ")}]`;
}

// Instance cell for display: categorical values verbatim, continuous
// values trimmed to at most four decimals.
export function formatCell(value: number | string): string {
  if (typeof value === "string") {
    return value;
  }
  if (Number.isInteger(value)) {
    return String(value);
  }
  return trimZeros(value.toFixed(4));
}

export function formatScore(value: number): string {
  return value.toFixed(4);
}

function trimZeros(fixed: string): string {
  return fixed.replace(/\.?0+$/, "");
}
