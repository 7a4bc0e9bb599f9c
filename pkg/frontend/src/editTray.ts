/** Neuron-edit tray: collect a pending edit set (double-click on nodes),
 * evaluate it against the cached sweep, and show before/after success-rate
 * bars per strength. Displayed rates are the report's values verbatim.
 */

import type { EditReport, NeuronRef } from './types';
import { neuronKey } from './types';

export interface EditTrayHandlers {
  onEvaluate: (neurons: NeuronRef[]) => void;
  onRemove: (neuron: NeuronRef) => void;
}

export class EditTray {
  private listEl: HTMLUListElement;
  private button: HTMLButtonElement;
  private status: HTMLElement;
  private reportEl: HTMLElement;
  private pending: NeuronRef[] = [];

  constructor(private container: HTMLElement, private handlers: EditTrayHandlers) {
    this.container.classList.add('edit-tray');
    const title = document.createElement('h3');
    title.textContent = 'neuron edits';
    const hint = document.createElement('p');
    hint.className = 'hint';
    hint.textContent = 'Double-click neurons to stage them for masking.';
    this.listEl = document.createElement('ul');
    this.listEl.className = 'pending-list';
    this.button = document.createElement('button');
    this.button.className = 'evaluate';
    this.button.textContent = 'Evaluate masked model';
    this.button.disabled = true;
    this.button.addEventListener('click', () => this.handlers.onEvaluate([...this.pending]));
    this.status = document.createElement('p');
    this.status.className = 'edit-status';
    this.reportEl = document.createElement('div');
    this.reportEl.className = 'edit-report';
    this.container.append(title, hint, this.listEl, this.button, this.status, this.reportEl);
  }

  setPending(neurons: NeuronRef[]): void {
    this.pending = [...neurons];
    this.listEl.replaceChildren();
    for (const neuron of this.pending) {
      const item = document.createElement('li');
      item.setAttribute('data-neuron', neuronKey(neuron));
      item.textContent = neuronKey(neuron) + ' ';
      const remove = document.createElement('button');
      remove.textContent = '×';
      remove.className = 'remove';
      remove.addEventListener('click', () => this.handlers.onRemove(neuron));
      item.appendChild(remove);
      this.listEl.appendChild(item);
    }
    this.button.disabled = this.pending.length === 0;
  }

  setBusy(message: string): void {
    this.button.disabled = true;
    this.status.textContent = message;
  }

  setError(message: string): void {
    this.status.textContent = message;
    this.status.classList.add('error');
    this.button.disabled = this.pending.length === 0;
  }

  showReport(report: EditReport): void {
    this.status.textContent = '';
    this.status.classList.remove('error');
    this.button.disabled = this.pending.length === 0;
    this.reportEl.replaceChildren();

    const acc = document.createElement('p');
    acc.className = 'benign-accuracy';
    acc.textContent = `benign accuracy: ${report.benignAccuracyBefore} → ` +
      `${report.benignAccuracyAfter}`;
    this.reportEl.appendChild(acc);

    const table = document.createElement('table');
    table.className = 'rate-table';
    const head = document.createElement('tr');
    for (const label of ['strength', 'before', 'after']) {
      const th = document.createElement('th');
      th.textContent = label;
      head.appendChild(th);
    }
    table.appendChild(head);
    for (const row of report.perStrength) {
      const tr = document.createElement('tr');
      tr.setAttribute('data-strength', String(row.strength));
      const strength = document.createElement('td');
      strength.textContent = String(row.strength);
      tr.appendChild(strength);
      tr.appendChild(rateCell(row.successRateBefore, 'before'));
      tr.appendChild(rateCell(row.successRateAfter, 'after'));
      table.appendChild(tr);
    }
    this.reportEl.appendChild(table);

    const diff = document.createElement('p');
    diff.className = 'diff-summary';
    diff.textContent = `${report.graphDiff.length} neurons changed group`;
    this.reportEl.appendChild(diff);
  }
}

function rateCell(rate: number, kind: 'before' | 'after'): HTMLTableCellElement {
  const td = document.createElement('td');
  td.className = `rate rate-${kind}`;
  const bar = document.createElement('span');
  bar.className = 'bar';
  bar.style.width = `${Math.round(rate * 60)}px`;
  const text = document.createElement('span');
  text.className = 'rate-value';
  text.textContent = String(rate);
  td.append(bar, text);
  return td;
}
