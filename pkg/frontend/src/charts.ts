// Four synchronized SVG panels (r1, r2, LGD, r3) over a shared loan axis.
// The cursor line and readouts update on slider moves without refetching;
// the previous curve stays visible as a ghost for what-if comparison.

import type { RiskCurvePayload } from "./types";
import { pdTargetMaxLoan } from "./curve";

const W = 320;
const H = 180;
const PAD = { l: 46, r: 8, t: 18, b: 24 };

interface Panel {
  key: "r1" | "r2" | "lgd" | "r3";
  title: string;
}

export const PANELS: Panel[] = [
  { key: "r1", title: "default probability" },
  { key: "r2", title: "expected loss" },
  { key: "lgd", title: "loss given default" },
  { key: "r3", title: "generalized risk" },
];

function column(curve: RiskCurvePayload, key: Panel["key"]): number[] | null {
  const col = curve[key];
  return Array.isArray(col) ? (col as number[]) : null;
}

function scales(curve: RiskCurvePayload, ghost: RiskCurvePayload | null, key: Panel["key"]) {
  const xs = curve.l;
  const ys = [...(column(curve, key) ?? [])];
  const gcol = ghost ? column(ghost, key) : null;
  if (gcol) ys.push(...gcol);
  const x0 = xs[0] as number;
  const x1 = xs[xs.length - 1] as number;
  let yMax = Math.max(...ys, 1e-12);
  let yMin = Math.min(...ys, 0);
  if (yMax === yMin) yMax = yMin + 1;
  const sx = (v: number) => PAD.l + ((v - x0) / (x1 - x0 || 1)) * (W - PAD.l - PAD.r);
  const sy = (v: number) => H - PAD.b - ((v - yMin) / (yMax - yMin)) * (H - PAD.t - PAD.b);
  return { sx, sy, x0, x1, yMin, yMax };
}

function pathFor(xs: number[], ys: number[], sx: (v: number) => number,
                 sy: (v: number) => number): string {
  // straight segments between grid points: the rendered path never smooths
  // away monotonicity
  let d = "";
  for (let i = 0; i < xs.length; i++) {
    d += `${i === 0 ? "M" : "L"}${sx(xs[i] as number).toFixed(2)},${sy(ys[i] as number).toFixed(2)}`;
  }
  return d;
}

export interface ChartCallbacks {
  onCursor: (l: number) => void;
}

export function renderPanels(
  host: HTMLElement,
  curve: RiskCurvePayload,
  ghost: RiskCurvePayload | null,
  cursorL: number,
  pdTargetPct: number | null,
  cb: ChartCallbacks,
): void {
  host.textContent = "";
  for (const panel of PANELS) {
    const col = column(curve, panel.key);
    const wrap = document.createElement("div");
    wrap.className = "panel";
    if (!col) {
      if (panel.key === "r3") continue; // optional measure not requested
      const err = document.createElement("div");
      err.className = "error";
      err.textContent = `column ${panel.key} missing from curve payload`;
      wrap.appendChild(err);
      host.appendChild(wrap);
      continue;
    }
    const { sx, sy, x0, x1 } = scales(curve, ghost, panel.key);
    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("viewBox", `0 0 ${W} ${H}`);
    svg.setAttribute("class", "chart");
    svg.dataset.panel = panel.key;

    const title = document.createElementNS(svg.namespaceURI, "text");
    title.setAttribute("x", String(PAD.l));
    title.setAttribute("y", "12");
    title.setAttribute("class", "title");
    title.textContent = panel.title;
    svg.appendChild(title);

    if (panel.key === "r1" && pdTargetPct !== null) {
      const lMax = pdTargetMaxLoan(curve, pdTargetPct / 100);
      if (lMax !== null) {
        const rect = document.createElementNS(svg.namespaceURI, "rect");
        rect.setAttribute("x", String(sx(x0)));
        rect.setAttribute("y", String(PAD.t));
        rect.setAttribute("width", String(Math.max(sx(lMax) - sx(x0), 0)));
        rect.setAttribute("height", String(H - PAD.t - PAD.b));
        rect.setAttribute("class", "pd-region");
        rect.setAttribute("data-l-max", String(lMax));
        svg.appendChild(rect);
      }
    }

    const gcol = ghost ? column(ghost, panel.key) : null;
    if (ghost && gcol) {
      const gp = document.createElementNS(svg.namespaceURI, "path");
      gp.setAttribute("d", pathFor(ghost.l, gcol, sx, sy));
      gp.setAttribute("class", "ghost");
      svg.appendChild(gp);
    }

    const path = document.createElementNS(svg.namespaceURI, "path");
    path.setAttribute("d", pathFor(curve.l, col, sx, sy));
    path.setAttribute("class", "line");
    svg.appendChild(path);

    const cursor = document.createElementNS(svg.namespaceURI, "line");
    cursor.setAttribute("x1", String(sx(cursorL)));
    cursor.setAttribute("x2", String(sx(cursorL)));
    cursor.setAttribute("y1", String(PAD.t));
    cursor.setAttribute("y2", String(H - PAD.b));
    cursor.setAttribute("class", "cursor");
    svg.appendChild(cursor);

    for (const frac of [0, 0.5, 1]) {
      const lv = x0 + frac * (x1 - x0);
      const t = document.createElementNS(svg.namespaceURI, "text");
      t.setAttribute("x", String(sx(lv)));
      t.setAttribute("y", String(H - 6));
      t.setAttribute("class", "tick");
      t.setAttribute("text-anchor", frac === 0 ? "start" : frac === 1 ? "end" : "middle");
      t.textContent = lv.toFixed(0);
      svg.appendChild(t);
    }

    svg.addEventListener("mousemove", (evt) => {
      const rect = svg.getBoundingClientRect();
      const fx = (evt.clientX - rect.left) / rect.width;
      const px = fx * W;
      const frac = Math.min(Math.max((px - PAD.l) / (W - PAD.l - PAD.r), 0), 1);
      cb.onCursor(x0 + frac * (x1 - x0));
    });
    wrap.appendChild(svg);
    host.appendChild(wrap);
  }
}
