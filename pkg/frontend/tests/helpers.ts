/** Shared test scaffolding: mount the app against a mocked /api/v1. */

import { vi } from 'vitest';

import { ApiClient } from '../src/api';
import { App } from '../src/app';
import type { ComparisonDoc, EditReport, NeuronDetail } from '../src/types';

import comparisonFixture from './fixtures/comparison.json';
import detailFixtures from './fixtures/neuron_details.json';
import editReportFixture from './fixtures/edit_report.json';

export const comparisonDoc = comparisonFixture as unknown as ComparisonDoc;
export const neuronDetails = detailFixtures as unknown as Record<string, NeuronDetail>;
export const editReport = editReportFixture as unknown as EditReport;

export interface MockRoutes {
  graph?: (key: string) => unknown | Response;
  detail?: (layer: string, channel: number) => unknown | Response;
  edits?: (body: { key: string; neurons: unknown[] }) => unknown | Response;
}

function respond(payload: unknown): Response {
  if (payload instanceof Response) return payload;
  return new Response(JSON.stringify(payload), {
    status: 200,
    headers: { 'content-type': 'application/json' },
  });
}

export function errorResponse(status: number, message: string): Response {
  return new Response(JSON.stringify({ error: message }), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

/** Install a fetch mock covering the API routes the app touches. */
export function mockApi(routes: MockRoutes = {}): typeof fetch {
  const mock = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const path = url.replace(/^https?:\/\/[^/]+/, '');
    let match = path.match(/^\/api\/v1\/graphs\/([0-9a-f]+)$/);
    if (match) {
      return respond(routes.graph ? routes.graph(match[1]) : comparisonDoc);
    }
    match = path.match(/^\/api\/v1\/neurons\/([^/]+)\/(\d+)\?key=/);
    if (match) {
      const [, layer, channel] = match;
      if (routes.detail) return respond(routes.detail(layer, Number(channel)));
      const detail = neuronDetails[`${layer}/${channel}`];
      return detail ? respond(detail) : errorResponse(404, 'neuron not in graph');
    }
    if (path === '/api/v1/edits' && init?.method === 'POST') {
      const body = JSON.parse(String(init.body));
      return respond(routes.edits ? routes.edits(body) : editReport);
    }
    if (path === '/api/v1/classes') {
      return respond({ classes: comparisonDoc.classNames.map((name, index) => ({ index, name })) });
    }
    throw new Error(`unmocked fetch: ${path}`);
  });
  vi.stubGlobal('fetch', mock);
  return mock;
}

export async function mountApp(routes: MockRoutes = {}): Promise<{ app: App; root: HTMLElement }> {
  mockApi(routes);
  document.body.innerHTML = '<div id="app"></div>';
  const root = document.getElementById('app')!;
  const app = new App(root, new ApiClient());
  await app.loadGraph(comparisonDoc.cacheKey);
  return { app, root };
}
