// Loan-explorer wiring: pick a model, fill the covariate profile, fetch the
// risk curve, and sweep loan levels live.  Every displayed number comes from
// the latest provenance-stamped curve (or a flagged linear interpolation of
// it); stale responses are discarded by sequence number.

import { ApiError, Client } from "./api";
import { renderPanels } from "./charts";
import { readoutsAt, validateCurve } from "./curve";
import { canSubmit, emptyForm, fieldIssues, toQuery, type FormState } from "./form";
import { RequestSequencer } from "./sequence";
import type { ModelMeta, RiskCurvePayload } from "./types";

const client = new Client("");
const sequencer = new RequestSequencer();

interface AppState {
  meta: ModelMeta | null;
  form: FormState | null;
  curve: RiskCurvePayload | null;
  ghost: RiskCurvePayload | null;
  cursorL: number;
  error: string | null;
  fieldErrors: Record<string, string>;
}

const state: AppState = {
  meta: null, form: null, curve: null, ghost: null,
  cursorL: 0, error: null, fieldErrors: {},
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function fmt(v: number, digits = 4): string {
  return Number.isFinite(v) ? v.toFixed(digits) : "–";
}

function renderReadouts(): void {
  const host = el<HTMLDivElement>("readouts");
  host.textContent = "";
  if (!state.curve) return;
  const r = readoutsAt(state.curve, state.cursorL);
  const rows: [string, { value: number; interpolated: boolean } | null, number][] = [
    ["PD r1", r.r1, 4],
    ["expected loss r2", r.r2, 2],
    ["LGD", r.lgd, 4],
    ["generalized r3", r.r3, 2],
    ["P(loss > ξ)", r.exceedProb, 4],
  ];
  const l = document.createElement("div");
  l.className = "readout";
  l.innerHTML = `<span>loan level l</span><b>${fmt(r.l, 2)}</b>`;
  host.appendChild(l);
  for (const [label, ro, digits] of rows) {
    if (!ro) continue;
    const div = document.createElement("div");
    div.className = "readout";
    const flag = ro.interpolated ? ` <em class="flag">interpolated</em>` : "";
    div.innerHTML = `<span>${label}</span><b>${fmt(ro.value, digits)}</b>${flag}`;
    host.appendChild(div);
  }
}

function renderProvenance(): void {
  const host = el<HTMLDivElement>("provenance");
  if (!state.curve) {
    host.textContent = "";
    return;
  }
  const c = state.curve;
  const seedPart = c.estimator === "mc" ? `, K=${c.K}, seed=${c.seed}` : "";
  host.textContent =
    `model ${c.model_id} · estimator ${c.estimator}${seedPart} · r=${c.r} · ${c.prng}`;
}

function renderError(): void {
  const banner = el<HTMLDivElement>("error");
  banner.textContent = state.error ?? "";
  banner.style.display = state.error ? "block" : "none";
}

function renderCharts(): void {
  const host = el<HTMLDivElement>("charts");
  if (!state.curve) {
    host.textContent = "";
    return;
  }
  const target = state.form && state.form.pdTarget.trim() !== ""
    ? Number(state.form.pdTarget) : null;
  renderPanels(host, state.curve, state.ghost, state.cursorL, target, {
    onCursor: (l) => {
      state.cursorL = l;
      el<HTMLInputElement>("cursor").value = String(l);
      renderReadouts();
      renderCharts();
    },
  });
}

function renderForm(): void {
  const host = el<HTMLFormElement>("profile");
  host.textContent = "";
  if (!state.form) return;
  for (const f of state.form.fields) {
    const row = document.createElement("label");
    row.className = "field";
    row.textContent = f.name;
    let input: HTMLElement;
    if (f.kind === "categorical" && f.levels) {
      const sel = document.createElement("select");
      sel.appendChild(new Option("— choose —", ""));
      for (const lv of f.levels) sel.appendChild(new Option(lv, lv));
      sel.value = state.form.values[f.name] ?? "";
      sel.addEventListener("change", () => setField(f.name, sel.value));
      input = sel;
    } else {
      const num = document.createElement("input");
      num.type = "text";
      num.value = state.form.values[f.name] ?? "";
      num.addEventListener("input", () => setField(f.name, num.value));
      input = num;
    }
    row.appendChild(input);
    const issue = state.fieldErrors[f.name];
    if (issue) {
      const msg = document.createElement("em");
      msg.className = "field-error";
      msg.textContent = issue;
      row.appendChild(msg);
    }
    host.appendChild(row);
  }
  el<HTMLButtonElement>("submit").disabled = !canSubmit(state.form);
}

function setField(name: string, value: string): void {
  if (!state.form) return;
  state.form.values[name] = value;
  delete state.fieldErrors[name];
  el<HTMLButtonElement>("submit").disabled = !canSubmit(state.form);
}

async function refetch(): Promise<void> {
  if (!state.form || !state.meta || !canSubmit(state.form)) return;
  const q = toQuery(state.form);
  const modelId = state.meta.model_id;
  state.error = null;
  state.fieldErrors = {};
  try {
    const result = await (async () => {
      const token = sequencer.next();
      const curve = await client.riskCurve(modelId, {
        covariates: q.covariates, r: q.r, l_bar: q.l_bar, xi: q.xi,
        estimator: "closed",
      });
      return sequencer.isCurrent(token) ? curve : null;
    })();
    if (result === null) return; // superseded by a newer submission
    const problem = validateCurve(result);
    if (problem) {
      state.error = `malformed curve payload: ${problem}`;
      renderError();
      return;
    }
    state.ghost = state.curve;
    state.curve = result;
    const slider = el<HTMLInputElement>("cursor");
    slider.min = String(result.l[0]);
    slider.max = String(result.l[result.l.length - 1]);
    slider.step = "any";
    if (state.cursorL < (result.l[0] as number) ||
        state.cursorL > (result.l[result.l.length - 1] as number)) {
      state.cursorL = result.l[Math.floor(result.l.length / 2)] as number;
      slider.value = String(state.cursorL);
    }
  } catch (exc) {
    if (exc instanceof ApiError && exc.status === 422 && state.form) {
      // unseen level: attribute the failure to the offending field
      const match = /field '([^']+)'/.exec(exc.message);
      const field = match?.[1] ?? state.form.fields[0]?.name ?? "";
      state.fieldErrors[field] = exc.message;
      renderForm();
    } else {
      state.error = exc instanceof Error ? exc.message : String(exc);
    }
  }
  renderError();
  renderProvenance();
  renderCharts();
  renderReadouts();
}

async function chooseModel(id: string): Promise<void> {
  state.meta = await client.modelMeta(id);
  state.form = emptyForm(state.meta.fields);
  state.curve = null;
  state.ghost = null;
  renderForm();
  renderCharts();
  renderReadouts();
  renderProvenance();
}

async function boot(): Promise<void> {
  try {
    const models = await client.listModels();
    const ids = Object.keys(models);
    const picker = el<HTMLSelectElement>("model");
    picker.textContent = "";
    for (const id of ids) {
      picker.appendChild(new Option(`${id} (${models[id]?.kind})`, id));
    }
    picker.addEventListener("change", () => void chooseModel(picker.value));
    if (ids.length > 0) await chooseModel(ids[0] as string);
    el<HTMLButtonElement>("submit").addEventListener("click", (evt) => {
      evt.preventDefault();
      if (state.form) {
        const issues = fieldIssues(state.form);
        state.fieldErrors = Object.fromEntries(issues.map((i) => [i.field, i.message]));
        renderForm();
        if (issues.length === 0) void refetch();
      }
    });
    const slider = el<HTMLInputElement>("cursor");
    slider.addEventListener("input", () => {
      state.cursorL = Number(slider.value);
      renderReadouts();
      renderCharts();
    });
    for (const id of ["r", "lbar", "xi", "pdtarget"] as const) {
      el<HTMLInputElement>(id).addEventListener("input", () => {
        if (!state.form) return;
        state.form.r = el<HTMLInputElement>("r").value;
        const lbar = el<HTMLInputElement>("lbar").value.trim();
        state.form.lBarAuto = lbar === "";
        state.form.lBar = lbar;
        state.form.xi = el<HTMLInputElement>("xi").value;
        state.form.pdTarget = el<HTMLInputElement>("pdtarget").value;
        el<HTMLButtonElement>("submit").disabled = !canSubmit(state.form);
      });
    }
  } catch (exc) {
    state.error = exc instanceof Error ? exc.message : String(exc);
    renderError();
  }
}

if (typeof document !== "undefined" && document.getElementById("charts")) {
  void boot();
}
