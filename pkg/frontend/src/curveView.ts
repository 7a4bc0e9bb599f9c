/** Attack success-rate curve with a marker at the selected strength. */

import type { CurvePoint } from './types';

const SVG_NS = 'http://www.w3.org/2000/svg';

export class CurveView {
  constructor(private container: HTMLElement) {
    this.container.classList.add('curve-view');
  }

  render(curve: CurvePoint[], selected: number | null): void {
    this.container.replaceChildren();
    const title = document.createElement('h3');
    title.textContent = 'targeted attack success rate';
    this.container.appendChild(title);

    const width = 260;
    const height = 110;
    const pad = 22;
    const svg = document.createElementNS(SVG_NS, 'svg');
    svg.setAttribute('viewBox', `0 0 ${width} ${height}`);
    svg.setAttribute('width', String(width));
    svg.setAttribute('height', String(height));

    const maxStrength = Math.max(...curve.map((p) => p.strength), 1e-9);
    const x = (s: number) => pad + (s / maxStrength) * (width - 2 * pad);
    const y = (r: number) => height - pad - r * (height - 2 * pad);

    const axis = document.createElementNS(SVG_NS, 'path');
    axis.setAttribute('d', `M ${pad} ${pad} V ${height - pad} H ${width - pad}`);
    axis.setAttribute('stroke', '#999');
    axis.setAttribute('fill', 'none');
    svg.appendChild(axis);

    const line = document.createElementNS(SVG_NS, 'polyline');
    line.setAttribute('fill', 'none');
    line.setAttribute('stroke', 'rgb(240, 140, 33)');
    line.setAttribute('stroke-width', '2');
    line.setAttribute('points', curve.map((p) => `${x(p.strength)},${y(p.successRate)}`).join(' '));
    svg.appendChild(line);

    for (const point of curve) {
      const dot = document.createElementNS(SVG_NS, 'circle');
      dot.setAttribute('cx', String(x(point.strength)));
      dot.setAttribute('cy', String(y(point.successRate)));
      dot.setAttribute('r', point.strength === selected ? '5' : '3');
      dot.setAttribute('class', point.strength === selected ? 'curve-dot selected' : 'curve-dot');
      dot.setAttribute('data-strength', String(point.strength));
      const tip = document.createElementNS(SVG_NS, 'title');
      tip.textContent = `strength ${point.strength}: success rate ${point.successRate}`;
      dot.appendChild(tip);
      svg.appendChild(dot);
    }
    this.container.appendChild(svg);
  }
}
