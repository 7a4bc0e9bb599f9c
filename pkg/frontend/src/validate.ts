/** Structural validation of a comparison document before rendering.
 *
 * The renderer refuses to draw anything from a document that fails these
 * checks (no partial renders); the service also ships the full JSON schema
 * at /api/v1/schema/comparison-graph for offline validation.
 */

import type { ComparisonDoc } from './types';

const GROUPS = new Set(['suppressed', 'shared', 'emphasized']);
const COLUMNS = new Set(['L', 'M', 'R']);
const PROVENANCES = new Set(['both', 'benign-only', 'attacked-only']);

export function validateDoc(doc: unknown): string[] {
  const problems: string[] = [];
  const d = doc as Partial<ComparisonDoc>;
  if (!d || typeof d !== 'object') return ['document is not an object'];
  if (d.schema !== 'advrgraph/comparison-graph/v1') {
    problems.push(`unexpected schema ${String(d.schema)}`);
  }
  if (!Array.isArray(d.layers) || d.layers.length === 0) {
    problems.push('layers missing or empty');
  }
  if (!Array.isArray(d.strengths) || d.strengths.length === 0) {
    problems.push('strengths missing or empty');
  }
  if (!Array.isArray(d.attackCurve)) problems.push('attackCurve missing');
  if (!Array.isArray(d.nodes)) {
    problems.push('nodes missing');
  } else {
    d.nodes.forEach((n, i) => {
      if (typeof n.layer !== 'string' || typeof n.channel !== 'number') {
        problems.push(`node ${i}: bad layer/channel`);
      } else if (Array.isArray(d.layers) && !d.layers.includes(n.layer)) {
        problems.push(`node ${i}: unknown layer ${n.layer}`);
      }
      if (!GROUPS.has(n.group as string)) problems.push(`node ${i}: bad group`);
      const layout = n.layout;
      if (!layout || !COLUMNS.has(layout.column) || typeof layout.orderInColumn !== 'number'
          || typeof layout.colorScalar !== 'number'
          || layout.colorScalar < 0 || layout.colorScalar > 1) {
        problems.push(`node ${i}: bad layout`);
      }
      if (!Array.isArray(n.trajectory) || n.trajectory.length === 0) {
        problems.push(`node ${i}: missing trajectory`);
      }
    });
  }
  if (!Array.isArray(d.edges)) {
    problems.push('edges missing');
  } else {
    d.edges.forEach((e, i) => {
      if (!PROVENANCES.has(e.provenance as string)) problems.push(`edge ${i}: bad provenance`);
    });
  }
  return problems;
}
