// Client-side constraint and instance validation. Messages mirror the
// server's 422 bodies word for word, so a blocked edit shows exactly
// what the server would have answered.

import type { EditorRow, FeatureDef } from "./types.js";
import { pyNum, pyStrList } from "./format.js";

export function validateRange(
  feature: FeatureDef,
  lo: number,
  hi: number,
): string | null {
  if (lo > hi) {
    return `empty range [${pyNum(lo)}, ${pyNum(hi)}]`;
  }
  if (lo < (feature.min ?? -Infinity) || hi > (feature.max ?? Infinity)) {
    return (
      `range [${pyNum(lo)}, ${pyNum(hi)}] outside schema bounds ` +
      `[${pyNum(feature.min ?? 0)}, ${pyNum(feature.max ?? 0)}]`
    );
  }
  return null;
}

export function validateAllowed(
  feature: FeatureDef,
  allowed: string[],
): string | null {
  if (allowed.length === 0) {
    return "empty allowed-category set";
  }
  const known = new Set(feature.categories ?? []);
  const unknown = allowed.filter((c) => !known.has(c));
  if (unknown.length > 0) {
    return `categories ${pyStrList(unknown)} not in schema`;
  }
  return null;
}

export function validateK(k: number): string | null {
  if (!Number.isInteger(k) || k < 1) {
    return "k must be a positive integer";
  }
  return null;
}

// Every feature muted (or schema-immutable) leaves nothing to search.
export const ALL_MUTED_MESSAGE =
  "every feature is muted; the search space is just the input";

export function allMuted(rows: EditorRow[]): boolean {
  return rows.every((row) => row.muted || !row.feature.mutable);
}

export function validateInstanceCell(
  feature: FeatureDef,
  raw: string,
): { value: number | string; error: string | null } {
  if (feature.kind === "continuous") {
    const v = Number(raw.trim());
    if (raw.trim() === "" || Number.isNaN(v)) {
      return { value: raw, error: `not a number: '${raw}'` };
    }
    const lo = feature.min ?? -Infinity;
    const hi = feature.max ?? Infinity;
    if (v < lo || v > hi) {
      return {
        value: v,
        error: `${pyNum(v)} outside [${pyNum(lo)}, ${pyNum(hi)}]`,
      };
    }
    return { value: v, error: null };
  }
  const known = feature.categories ?? [];
  if (!known.includes(raw)) {
    return {
      value: raw,
      error: `'${raw}' not in categories ${pyStrList(known)}`,
    };
  }
  return { value: raw, error: null };
}

// Validate a whole editor row; returns the first problem or null.
export function validateRow(row: EditorRow): string | null {
  const feature = row.feature;
  if (feature.kind === "continuous" && row.rangeLo !== null && row.rangeHi !== null) {
    const problem = validateRange(feature, row.rangeLo, row.rangeHi);
    if (problem) {
      return problem;
    }
  }
  if (feature.kind === "categorical" && row.allowed !== null) {
    const problem = validateAllowed(feature, [...row.allowed]);
    if (problem) {
      return problem;
    }
  }
  return null;
}
