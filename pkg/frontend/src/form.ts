// Profile-form state: one input per schema field (dropdown for categorical,
// numeric for continuous) plus the loss parameterization.  Submit stays
// disabled until everything validates.

import type { FieldMeta } from "./types";

export interface FormState {
  fields: FieldMeta[];
  values: Record<string, string>;
  r: string;
  lBarAuto: boolean;
  lBar: string;
  xi: string; // empty = no threshold readout
  pdTarget: string; // percent, empty = no highlight
}

export interface FieldIssue {
  field: string;
  message: string;
}

export function emptyForm(fields: FieldMeta[]): FormState {
  const values: Record<string, string> = {};
  for (const f of fields) values[f.name] = "";
  return { fields, values, r: "1.0", lBarAuto: true, lBar: "", xi: "", pdTarget: "5" };
}

export function fieldIssues(form: FormState): FieldIssue[] {
  const issues: FieldIssue[] = [];
  for (const f of form.fields) {
    const raw = (form.values[f.name] ?? "").trim();
    if (raw === "") {
      issues.push({ field: f.name, message: "required" });
    } else if (f.kind === "categorical") {
      if (!f.levels || !f.levels.includes(raw)) {
        issues.push({ field: f.name, message: `unknown level ${raw}` });
      }
    } else if (!isFinite(Number(raw))) {
      issues.push({ field: f.name, message: "must be a number" });
    }
  }
  const r = Number(form.r);
  if (!isFinite(r) || r <= 0) issues.push({ field: "r", message: "net revenue must be > 0" });
  if (!form.lBarAuto) {
    const lb = Number(form.lBar);
    if (!isFinite(lb) || lb <= 0) issues.push({ field: "l_bar", message: "max loan must be > 0" });
  }
  if (form.xi.trim() !== "") {
    const xi = Number(form.xi);
    if (!isFinite(xi) || xi <= 0) issues.push({ field: "xi", message: "threshold must be > 0" });
  }
  if (form.pdTarget.trim() !== "") {
    const t = Number(form.pdTarget);
    if (!isFinite(t) || t <= 0 || t >= 100) {
      issues.push({ field: "pd_target", message: "target must be in (0, 100)%" });
    }
  }
  return issues;
}

export function canSubmit(form: FormState): boolean {
  return fieldIssues(form).length === 0;
}

export function toQuery(form: FormState): {
  covariates: Record<string, string | number>;
  r: number;
  l_bar: number | null;
  xi: number | null;
} {
  const covariates: Record<string, string | number> = {};
  for (const f of form.fields) {
    const raw = (form.values[f.name] ?? "").trim();
    covariates[f.name] = f.kind === "continuous" ? Number(raw) : raw;
  }
  return {
    covariates,
    r: Number(form.r),
    l_bar: form.lBarAuto ? null : Number(form.lBar),
    xi: form.xi.trim() === "" ? null : Number(form.xi),
  };
}
