// Thin fetch client for the scoring service; all numbers shown in the UI
// originate from these responses.

import type { ModelMeta, RiskCurvePayload, RiskQueryBody } from "./types";

export class ApiError extends Error {
  status: number;
  correlationId: string | undefined;

  constructor(status: number, message: string, correlationId?: string) {
    super(message);
    this.status = status;
    this.correlationId = correlationId;
  }
}

async function parse<T>(resp: Response, context: string): Promise<T> {
  const body: unknown = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const err = (body ?? {}) as { error?: string; correlation_id?: string };
    throw new ApiError(resp.status, err.error ?? `${context} -> HTTP ${resp.status}`,
      err.correlation_id);
  }
  return body as T;
}

export class Client {
  base: string;

  constructor(base = "") {
    this.base = base;
  }

  async health(): Promise<{ status: string; version: string }> {
    return parse(await fetch(`${this.base}/health`), "GET /health");
  }

  async listModels(): Promise<Record<string, { kind: string; m: number }>> {
    return parse(await fetch(`${this.base}/models`), "GET /models");
  }

  async modelMeta(id: string): Promise<ModelMeta> {
    return parse(await fetch(`${this.base}/models/${id}`), `GET /models/${id}`);
  }

  async riskCurve(id: string, body: RiskQueryBody): Promise<RiskCurvePayload> {
    const resp = await fetch(`${this.base}/models/${id}/risk-curve`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return parse(resp, `POST /models/${id}/risk-curve`);
  }
}
