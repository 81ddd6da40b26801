// Payload shapes of the scoring service (JSON wire format).

export interface FieldMeta {
  name: string;
  kind: "categorical" | "continuous";
  levels: string[] | null;
}

export interface ModelMeta {
  model_id: string;
  kind: string;
  m: number;
  p: number;
  fields: FieldMeta[];
}

export interface RiskCurvePayload {
  l: number[];
  r1: number[];
  r2: number[];
  lgd: number[];
  lgd_no_default: boolean[];
  r3: number[] | null;
  estimator: string;
  K: number | null;
  seed: number | null;
  gl_name: string | null;
  exceed_prob?: (number | null)[];
  expected_excess?: (number | null)[];
  model_id: string;
  r: number;
  prng: string;
  covariates: Record<string, string | number>;
}

export interface RiskQueryBody {
  covariates: Record<string, string | number>;
  r: number;
  l_bar?: number | null;
  l_min?: number;
  points?: number;
  xi?: number | null;
  estimator?: "closed" | "mc";
  K?: number;
  seed?: number;
  loss_plugin?: string | null;
}
