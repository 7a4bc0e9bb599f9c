/** Typed client for /api/v1; cancels superseded in-flight fetches per slot. */

import type { ClassInfo, ComparisonDoc, EditReport, JobStatus, NeuronDetail, NeuronRef } from './types';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function parse<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.error === 'string') detail = body.error;
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(response.status, detail);
  }
  return response.json() as Promise<T>;
}

export class ApiClient {
  private controllers = new Map<string, AbortController>();

  constructor(private base: string = '') {}

  /** Abort any previous request in the same slot and start a new one. */
  private fetchSlot(slot: string, url: string, init?: RequestInit): Promise<Response> {
    this.controllers.get(slot)?.abort();
    const controller = new AbortController();
    this.controllers.set(slot, controller);
    return fetch(this.base + url, { ...init, signal: controller.signal });
  }

  async requestGraph(body: {
    benignClass: number;
    targetClass: number;
    method?: string;
    strengths?: number[];
    k?: number;
    m?: number;
  }): Promise<{ resultKey?: string; jobId?: string; cached?: boolean }> {
    const r = await fetch(this.base + '/api/v1/graphs', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    return parse(r);
  }

  async job(jobId: string): Promise<JobStatus> {
    return parse(await fetch(this.base + `/api/v1/jobs/${jobId}`));
  }

  async graph(key: string): Promise<ComparisonDoc> {
    return parse(await this.fetchSlot('graph', `/api/v1/graphs/${key}`));
  }

  async neuronDetail(key: string, neuron: NeuronRef): Promise<NeuronDetail> {
    return parse(await this.fetchSlot(
      'detail', `/api/v1/neurons/${neuron.layer}/${neuron.channel}?key=${key}`));
  }

  async evaluateEdits(key: string, neurons: NeuronRef[]): Promise<EditReport> {
    const r = await fetch(this.base + '/api/v1/edits', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ key, neurons }),
    });
    return parse(r);
  }

  async classes(): Promise<ClassInfo[]> {
    const body = await parse<{ classes: ClassInfo[] }>(await fetch(this.base + '/api/v1/classes'));
    return body.classes;
  }
}
