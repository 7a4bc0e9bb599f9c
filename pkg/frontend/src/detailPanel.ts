/** Hover/pin overlay: feature visualization, dataset patches, trajectory,
 * vulnerability record, and the influential incoming connections.
 * All numbers render verbatim from the API payload.
 */

import type { NeuronDetail } from './types';

export class DetailPanel {
  constructor(private container: HTMLElement) {
    this.container.classList.add('detail-panel');
    this.clear();
  }

  clear(): void {
    this.container.replaceChildren();
    const hint = document.createElement('p');
    hint.className = 'hint';
    hint.textContent = 'Hover a neuron to inspect it; click to pin.';
    this.container.appendChild(hint);
  }

  show(detail: NeuronDetail, pinned: boolean): void {
    this.container.replaceChildren();

    const header = document.createElement('h3');
    header.textContent = `${detail.layer} / ${detail.channel}`;
    if (pinned) header.textContent += ' (pinned)';
    this.container.appendChild(header);

    const group = document.createElement('p');
    group.className = `group-tag group-${detail.group}`;
    group.textContent = detail.group;
    this.container.appendChild(group);

    const vis = document.createElement('img');
    vis.className = 'feature-vis';
    vis.src = detail.featureVis.uri;
    vis.alt = `feature visualization of ${detail.layer}/${detail.channel}`;
    this.container.appendChild(vis);

    const strip = document.createElement('div');
    strip.className = 'patch-strip';
    for (const patch of detail.patches) {
      const img = document.createElement('img');
      img.className = 'patch';
      img.src = patch.uri;
      img.title = `image ${patch.imageId}, activation ${patch.activation}`;
      strip.appendChild(img);
    }
    this.container.appendChild(strip);

    const facts = document.createElement('dl');
    facts.className = 'facts';
    const addFact = (label: string, value: string) => {
      const dt = document.createElement('dt');
      dt.textContent = label;
      const dd = document.createElement('dd');
      dd.textContent = value;
      facts.append(dt, dd);
    };
    addFact('benign score', String(detail.benignScore));
    addFact('attacked score', String(detail.attackedScore));
    if (detail.flipStrength !== null) {
      addFact('flip strength', String(detail.flipStrength));
      addFact('rank in group', String(detail.rankInGroup));
    }
    addFact('deviation', String(detail.deviation));
    this.container.appendChild(facts);

    this.container.appendChild(renderTrajectory(detail));

    const edgesTitle = document.createElement('h4');
    edgesTitle.textContent = `influential connections (${detail.incomingEdges.length})`;
    this.container.appendChild(edgesTitle);
    const list = document.createElement('ul');
    list.className = 'edge-list';
    for (const edge of detail.incomingEdges) {
      const item = document.createElement('li');
      item.className = `edge-item edge-${edge.provenance}`;
      item.textContent =
        `${edge.sourceLayer}/${edge.sourceChannel} → weight ${edge.weight} (${edge.provenance})`;
      list.appendChild(item);
    }
    this.container.appendChild(list);
  }
}

function renderTrajectory(detail: NeuronDetail): SVGSVGElement {
  const svgNS = 'http://www.w3.org/2000/svg';
  const svg = document.createElementNS(svgNS, 'svg');
  const width = 200;
  const height = 54;
  svg.setAttribute('viewBox', `0 0 ${width} ${height}`);
  svg.setAttribute('width', String(width));
  svg.setAttribute('height', String(height));
  svg.setAttribute('class', 'trajectory');
  const points = detail.trajectory;
  const maxStrength = Math.max(...points.map((p) => p.strength), 1e-9);
  const maxActivation = Math.max(...points.map((p) => p.activation), 1e-9);
  const line = document.createElementNS(svgNS, 'polyline');
  line.setAttribute('fill', 'none');
  line.setAttribute('stroke', '#555');
  line.setAttribute('stroke-width', '1.5');
  line.setAttribute('points', points
    .map((p) => `${6 + (p.strength / maxStrength) * (width - 12)},` +
      `${height - 6 - (p.activation / maxActivation) * (height - 12)}`)
    .join(' '));
  svg.appendChild(line);
  const title = document.createElementNS(svgNS, 'title');
  title.textContent = 'activation vs attack strength: ' + points
    .map((p) => `(${p.strength}, ${p.activation})`).join(' ');
  svg.appendChild(title);
  return svg;
}
