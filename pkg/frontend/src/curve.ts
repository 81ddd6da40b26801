// Curve-view logic: every readout is either a fetched grid value or a linear
// interpolation between two adjacent grid values, never anything else.  The
// interpolated flag tells the UI to label the readout accordingly.

import type { RiskCurvePayload } from "./types";

export interface Readout {
  value: number;
  interpolated: boolean;
}

export interface Readouts {
  l: number;
  r1: Readout;
  r2: Readout;
  lgd: Readout;
  r3: Readout | null;
  exceedProb: Readout | null;
}

export function validateCurve(c: RiskCurvePayload): string | null {
  if (!Array.isArray(c.l) || c.l.length === 0) return "curve has no loan grid";
  const n = c.l.length;
  for (const key of ["r1", "r2", "lgd"] as const) {
    const col = c[key];
    if (!Array.isArray(col) || col.length !== n) return `column ${key} malformed`;
    if (col.some((v) => typeof v !== "number" || !isFinite(v))) {
      return `column ${key} contains non-finite values`;
    }
  }
  if (c.r3 !== null && (!Array.isArray(c.r3) || c.r3.length !== n)) return "column r3 malformed";
  for (let i = 1; i < n; i++) {
    if ((c.l[i] as number) <= (c.l[i - 1] as number)) return "loan grid not increasing";
  }
  if (!c.model_id) return "curve is missing provenance";
  return null;
}

/** Index pair and weight for linear interpolation at loan level l. */
function locate(grid: number[], l: number): { i: number; j: number; w: number } {
  const n = grid.length;
  if (l <= (grid[0] as number)) return { i: 0, j: 0, w: 0 };
  if (l >= (grid[n - 1] as number)) return { i: n - 1, j: n - 1, w: 0 };
  let lo = 0;
  let hi = n - 1;
  while (hi - lo > 1) {
    const mid = (lo + hi) >> 1;
    if ((grid[mid] as number) <= l) lo = mid;
    else hi = mid;
  }
  const a = grid[lo] as number;
  const b = grid[hi] as number;
  const w = (l - a) / (b - a);
  return w === 0 ? { i: lo, j: lo, w: 0 } : { i: lo, j: hi, w };
}

function interp(col: (number | null)[], at: { i: number; j: number; w: number }): Readout | null {
  const a = col[at.i];
  const b = col[at.j];
  if (a === null || a === undefined || b === null || b === undefined) return null;
  if (at.w === 0) return { value: a, interpolated: false };
  return { value: a + at.w * (b - a), interpolated: true };
}

/** Readouts at cursor position l; grid points are exact, between points the
 * value is linearly interpolated and flagged. */
export function readoutsAt(curve: RiskCurvePayload, l: number): Readouts {
  const at = locate(curve.l, l);
  return {
    l,
    r1: interp(curve.r1, at) as Readout,
    r2: interp(curve.r2, at) as Readout,
    lgd: interp(curve.lgd, at) as Readout,
    r3: curve.r3 ? interp(curve.r3, at) : null,
    exceedProb: curve.exceed_prob ? interp(curve.exceed_prob, at) : null,
  };
}

/** Largest grid loan level whose default probability stays at or under the
 * target; null when even the smallest level exceeds it. */
export function pdTargetMaxLoan(curve: RiskCurvePayload, target: number): number | null {
  let best: number | null = null;
  for (let i = 0; i < curve.l.length; i++) {
    if ((curve.r1[i] as number) <= target) best = curve.l[i] as number;
  }
  return best;
}

export type Ordering = "lower-everywhere" | "higher-everywhere" | "mixed" | "equal";

/** Pointwise comparison of a new curve against a ghost on the shared grid
 * (what-if overlays: e.g. raising net revenue must lower r1 everywhere). */
export function compareToGhost(curr: number[], ghost: number[], tol = 1e-12): Ordering {
  if (curr.length !== ghost.length) return "mixed";
  let lower = false;
  let higher = false;
  for (let i = 0; i < curr.length; i++) {
    const d = (curr[i] as number) - (ghost[i] as number);
    if (d < -tol) lower = true;
    else if (d > tol) higher = true;
  }
  if (lower && higher) return "mixed";
  if (lower) return "lower-everywhere";
  if (higher) return "higher-everywhere";
  return "equal";
}
