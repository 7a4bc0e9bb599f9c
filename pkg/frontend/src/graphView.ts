/** Layered SVG rendering of a comparison graph.
 *
 * One row per layer, deepest layer on top. Each row holds three columns:
 * suppressed (L), shared (M), emphasized (R); nodes sit left-to-right by
 * layout.orderInColumn, so rank-0 (most vulnerable) lands adjacent to the
 * middle column on both sides. Edges are drawn only on hover/pin.
 */

import { baseGroupColor, groupColor, PROVENANCE_COLOR } from './color';
import type { ComparisonDoc, GraphEdge, GraphNode, NeuronRef } from './types';
import { neuronKey } from './types';

const SVG_NS = 'http://www.w3.org/2000/svg';

const NODE_R = 13;
const NODE_GAP = 34;
const ROW_HEIGHT = 86;
const COLUMN_GAP = 56;
const MARGIN_X = 70;
const MARGIN_Y = 46;

export interface NodeHandlers {
  onHover?: (n: NeuronRef) => void;
  onLeave?: (n: NeuronRef) => void;
  onClick?: (n: NeuronRef) => void;
  onToggleEdit?: (n: NeuronRef) => void;
}

interface Placed {
  node: GraphNode;
  x: number;
  y: number;
}

function svgEl<K extends keyof SVGElementTagNameMap>(tag: K): SVGElementTagNameMap[K] {
  return document.createElementNS(SVG_NS, tag);
}

export class GraphView {
  private svg: SVGSVGElement;
  private edgeLayer: SVGGElement;
  private nodeLayer: SVGGElement;
  private positions = new Map<string, Placed>();
  private doc: ComparisonDoc | null = null;

  constructor(private container: HTMLElement, private handlers: NodeHandlers = {}) {
    this.svg = svgEl('svg');
    this.svg.setAttribute('class', 'graph-svg');
    this.edgeLayer = svgEl('g');
    this.edgeLayer.setAttribute('class', 'edges');
    this.nodeLayer = svgEl('g');
    this.nodeLayer.setAttribute('class', 'nodes');
    this.svg.appendChild(this.edgeLayer);
    this.svg.appendChild(this.nodeLayer);
  }

  /** Replace the rendered graph; clears all highlights. */
  render(doc: ComparisonDoc): void {
    this.doc = doc;
    this.positions.clear();
    this.edgeLayer.replaceChildren();
    this.nodeLayer.replaceChildren();

    const rows = [...doc.layers].reverse();   // deepest on top
    const widths = { L: 0, M: 0, R: 0 };
    for (const layer of doc.layers) {
      const counts = { L: 0, M: 0, R: 0 };
      for (const node of doc.nodes) {
        if (node.layer === layer) counts[node.layout.column] += 1;
      }
      widths.L = Math.max(widths.L, counts.L);
      widths.M = Math.max(widths.M, counts.M);
      widths.R = Math.max(widths.R, counts.R);
    }
    const colStart = {
      L: MARGIN_X,
      M: MARGIN_X + widths.L * NODE_GAP + COLUMN_GAP,
      R: MARGIN_X + (widths.L + widths.M) * NODE_GAP + 2 * COLUMN_GAP,
    };
    const width = colStart.R + widths.R * NODE_GAP + MARGIN_X;
    const height = rows.length * ROW_HEIGHT + MARGIN_Y;
    this.svg.setAttribute('viewBox', `0 0 ${width} ${height}`);
    this.svg.setAttribute('width', String(width));
    this.svg.setAttribute('height', String(height));

    rows.forEach((layer, rowIndex) => {
      const y = MARGIN_Y + rowIndex * ROW_HEIGHT;
      const label = svgEl('text');
      label.setAttribute('x', '8');
      label.setAttribute('y', String(y + 4));
      label.setAttribute('class', 'layer-label');
      label.textContent = layer;
      this.nodeLayer.appendChild(label);

      for (const column of ['L', 'M', 'R'] as const) {
        const nodes = doc.nodes
          .filter((n) => n.layer === layer && n.layout.column === column)
          .sort((a, b) => a.layout.orderInColumn - b.layout.orderInColumn);
        // Left column right-aligns against the middle so rank 0 touches it.
        const offset = column === 'L' ? widths.L - nodes.length : 0;
        nodes.forEach((node) => {
          const x = colStart[column] + (offset + node.layout.orderInColumn) * NODE_GAP;
          this.placeNode(node, x, y);
        });
      }
    });

    if (!this.container.contains(this.svg)) {
      this.container.replaceChildren(this.svg);
    }
  }

  private placeNode(node: GraphNode, x: number, y: number): void {
    const ref: NeuronRef = { layer: node.layer, channel: node.channel };
    const g = svgEl('g');
    g.setAttribute('class', 'node');
    g.setAttribute('data-layer', node.layer);
    g.setAttribute('data-channel', String(node.channel));
    g.setAttribute('data-group', node.group);
    g.setAttribute('data-column', node.layout.column);
    g.setAttribute('data-order', String(node.layout.orderInColumn));
    g.setAttribute('transform', `translate(${x}, ${y})`);

    const circle = svgEl('circle');
    circle.setAttribute('r', String(NODE_R));
    circle.setAttribute('fill', groupColor(node.layout.colorScalar));
    circle.setAttribute('class', 'node-circle');
    g.appendChild(circle);

    const text = svgEl('text');
    text.setAttribute('class', 'node-text');
    text.setAttribute('text-anchor', 'middle');
    text.setAttribute('dy', '4');
    text.textContent = String(node.channel);
    g.appendChild(text);

    g.addEventListener('mouseenter', () => this.handlers.onHover?.(ref));
    g.addEventListener('mouseleave', () => this.handlers.onLeave?.(ref));
    g.addEventListener('click', () => this.handlers.onClick?.(ref));
    g.addEventListener('dblclick', () => this.handlers.onToggleEdit?.(ref));

    this.nodeLayer.appendChild(g);
    this.positions.set(neuronKey(ref), { node, x, y });
  }

  nodeElement(ref: NeuronRef): SVGGElement | null {
    return this.nodeLayer.querySelector(
      `g.node[data-layer="${ref.layer}"][data-channel="${ref.channel}"]`);
  }

  /** Draw exactly the given edges (replacing previous highlights). */
  highlightEdges(edges: GraphEdge[]): void {
    this.edgeLayer.replaceChildren();
    for (const edge of edges) {
      const from = this.positions.get(`${edge.sourceLayer}/${edge.sourceChannel}`);
      const to = this.positions.get(`${edge.targetLayer}/${edge.targetChannel}`);
      if (!from || !to) continue;
      const line = svgEl('line');
      line.setAttribute('x1', String(from.x));
      line.setAttribute('y1', String(from.y));
      line.setAttribute('x2', String(to.x));
      line.setAttribute('y2', String(to.y));
      line.setAttribute('class', `edge edge-${edge.provenance}`);
      line.setAttribute('stroke', PROVENANCE_COLOR[edge.provenance]);
      line.setAttribute('stroke-width', '2.5');
      if (edge.provenance !== 'both') line.setAttribute('stroke-dasharray', '6 3');
      line.setAttribute('data-source', `${edge.sourceLayer}/${edge.sourceChannel}`);
      line.setAttribute('data-target', `${edge.targetLayer}/${edge.targetChannel}`);
      line.setAttribute('data-provenance', edge.provenance);
      this.edgeLayer.appendChild(line);
    }
  }

  clearEdges(): void {
    this.edgeLayer.replaceChildren();
  }

  highlightedEdges(): SVGLineElement[] {
    return Array.from(this.edgeLayer.querySelectorAll('line.edge'));
  }

  setSelected(ref: NeuronRef, selected: boolean): void {
    this.nodeElement(ref)?.classList.toggle('selected', selected);
  }

  setPinned(ref: NeuronRef, pinned: boolean): void {
    this.nodeElement(ref)?.classList.toggle('pinned', pinned);
  }

  /** Recolor nodes whose group changed after an edit; null means dropped out. */
  recolorFromDiff(diff: { layer: string; channel: number; groupAfter: string | null }[]): void {
    for (const entry of diff) {
      const el = this.nodeElement({ layer: entry.layer, channel: entry.channel });
      if (!el) continue;
      const circle = el.querySelector('circle');
      if (!circle) continue;
      circle.setAttribute('fill', baseGroupColor(entry.groupAfter));
      el.setAttribute('data-group-after', String(entry.groupAfter));
    }
  }

  get document(): ComparisonDoc | null {
    return this.doc;
  }
}
