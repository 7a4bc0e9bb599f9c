/** Application shell: a pure function of fetched documents and ViewState.
 *
 * All displayed metrics come verbatim from API payloads; failed fetches
 * surface as toasts and never touch the rendered graph. In-flight detail
 * fetches are aborted when the hover target changes.
 */

import { ApiClient, ApiError } from './api';
import { Controls, SWEEP_STRENGTHS } from './controls';
import { CurveView } from './curveView';
import { DetailPanel } from './detailPanel';
import { EditTray } from './editTray';
import { GraphView } from './graphView';
import type { ComparisonDoc, EditReport, NeuronDetail, NeuronRef } from './types';
import { neuronKey, sameNeuron } from './types';
import { validateDoc } from './validate';

export interface ViewState {
  benignClass: number;
  targetClass: number;
  method: string;
  strength: number;
  resultKey: string | null;
  hoveredNeuron: NeuronRef | null;
  pinnedNeurons: NeuronRef[];
  pendingEditSet: NeuronRef[];
  lastEditReport: EditReport | null;
}

const POLL_INTERVAL_MS = 500;

export class App {
  readonly state: ViewState = {
    benignClass: 0,
    targetClass: 1,
    method: 'FGM_L2',
    strength: SWEEP_STRENGTHS[SWEEP_STRENGTHS.length - 1],
    resultKey: null,
    hoveredNeuron: null,
    pinnedNeurons: [],
    pendingEditSet: [],
    lastEditReport: null,
  };

  readonly graphView: GraphView;
  readonly detailPanel: DetailPanel;
  readonly editTray: EditTray;
  readonly curveView: CurveView;
  readonly controls: Controls;
  private errorPanel: HTMLElement;
  private toasts: HTMLElement;
  private detailCache = new Map<string, NeuronDetail>();
  private highlightEpoch = 0;

  constructor(root: HTMLElement, private api: ApiClient) {
    root.classList.add('app');
    const controlsEl = document.createElement('header');
    const main = document.createElement('main');
    const graphEl = document.createElement('section');
    graphEl.className = 'graph-area';
    const side = document.createElement('aside');
    const detailEl = document.createElement('div');
    const curveEl = document.createElement('div');
    const trayEl = document.createElement('div');
    this.errorPanel = document.createElement('div');
    this.errorPanel.className = 'error-panel';
    this.errorPanel.hidden = true;
    this.toasts = document.createElement('div');
    this.toasts.className = 'toasts';
    side.append(curveEl, detailEl, trayEl);
    main.append(graphEl, side);
    root.replaceChildren(controlsEl, this.errorPanel, main, this.toasts);

    this.controls = new Controls(controlsEl, () => void this.generate());
    this.graphView = new GraphView(graphEl, {
      onHover: (n) => void this.hoverNeuron(n),
      onLeave: (n) => this.leaveNeuron(n),
      onClick: (n) => void this.togglePin(n),
      onToggleEdit: (n) => this.toggleEdit(n),
    });
    this.detailPanel = new DetailPanel(detailEl);
    this.curveView = new CurveView(curveEl);
    this.editTray = new EditTray(trayEl, {
      onEvaluate: () => void this.evaluateEdits(),
      onRemove: (n) => {
        this.state.pendingEditSet = this.state.pendingEditSet.filter((p) => !sameNeuron(p, n));
        this.editTray.setPending(this.state.pendingEditSet);
        this.graphView.setSelected(n, false);
      },
    });
  }

  async bootstrap(): Promise<void> {
    try {
      this.controls.setClasses(await this.api.classes());
    } catch (error) {
      this.toast(`failed to load classes: ${describe(error)}`);
    }
  }

  /** Request the pipeline for the current controls and load the result. */
  async generate(): Promise<void> {
    const values = this.controls.values();
    this.state.benignClass = values.benignClass;
    this.state.targetClass = values.targetClass;
    this.state.method = values.method;
    this.state.strength = values.strength;
    // Graphs exist only at swept strengths: request the sweep prefix ending
    // at the selected strength so it becomes the evaluation strength.
    const strengths = [0, ...SWEEP_STRENGTHS.filter((s) => s <= values.strength)];
    this.controls.setBusy(true, 'requesting…');
    try {
      const response = await this.api.requestGraph({
        benignClass: values.benignClass,
        targetClass: values.targetClass,
        method: values.method,
        strengths,
        k: values.k,
        m: values.m,
      });
      const key = response.resultKey ?? (await this.pollJob(response.jobId!));
      await this.loadGraph(key);
    } catch (error) {
      this.toast(`graph request failed: ${describe(error)}`);
    } finally {
      this.controls.setBusy(false);
    }
  }

  private pollJob(jobId: string): Promise<string> {
    return new Promise((resolve, reject) => {
      const timer = setInterval(async () => {
        try {
          const status = await this.api.job(jobId);
          this.controls.setBusy(true, `${status.state} ${(status.progress * 100).toFixed(0)}%`);
          if (status.state === 'done') {
            clearInterval(timer);
            resolve(status.resultKey!);
          } else if (status.state === 'failed') {
            clearInterval(timer);
            reject(new Error(status.error ?? 'job failed'));
          }
        } catch (error) {
          clearInterval(timer);
          reject(error as Error);
        }
      }, POLL_INTERVAL_MS);
    });
  }

  async loadGraph(key: string): Promise<void> {
    let doc: ComparisonDoc;
    try {
      doc = await this.api.graph(key);
    } catch (error) {
      this.toast(`failed to fetch graph: ${describe(error)}`);
      return;
    }
    const problems = validateDoc(doc);
    if (problems.length > 0) {
      this.showErrorPanel(problems);
      return;
    }
    this.errorPanel.hidden = true;
    this.state.resultKey = key;
    this.state.hoveredNeuron = null;
    this.state.lastEditReport = null;
    this.detailCache.clear();
    const nodeKeys = new Set(doc.nodes.map((n) => neuronKey(n)));
    this.state.pinnedNeurons = this.state.pinnedNeurons.filter((n) => nodeKeys.has(neuronKey(n)));
    this.state.pendingEditSet = this.state.pendingEditSet.filter((n) => nodeKeys.has(neuronKey(n)));
    this.graphView.render(doc);
    for (const neuron of this.state.pendingEditSet) this.graphView.setSelected(neuron, true);
    for (const neuron of this.state.pinnedNeurons) this.graphView.setPinned(neuron, true);
    this.editTray.setPending(this.state.pendingEditSet);
    this.curveView.render(doc.attackCurve, doc.evalStrength);
    this.detailPanel.clear();
  }

  private showErrorPanel(problems: string[]): void {
    this.errorPanel.hidden = false;
    this.errorPanel.replaceChildren();
    const title = document.createElement('strong');
    title.textContent = 'document failed validation; nothing rendered';
    const list = document.createElement('ul');
    for (const problem of problems) {
      const item = document.createElement('li');
      item.textContent = problem;
      list.appendChild(item);
    }
    this.errorPanel.append(title, list);
  }

  private inGraph(neuron: NeuronRef): boolean {
    const doc = this.graphView.document;
    return !!doc && doc.nodes.some((n) => n.layer === neuron.layer && n.channel === neuron.channel);
  }

  private async detail(neuron: NeuronRef): Promise<NeuronDetail> {
    const cacheKey = `${this.state.resultKey}:${neuronKey(neuron)}`;
    const cached = this.detailCache.get(cacheKey);
    if (cached) return cached;
    const detail = await this.api.neuronDetail(this.state.resultKey!, neuron);
    this.detailCache.set(cacheKey, detail);
    return detail;
  }

  async hoverNeuron(neuron: NeuronRef): Promise<void> {
    if (!this.state.resultKey || !this.inGraph(neuron)) return;
    this.state.hoveredNeuron = neuron;
    try {
      const detail = await this.detail(neuron);
      if (!sameNeuron(this.state.hoveredNeuron, neuron)) return;  // superseded
      this.detailPanel.show(detail, this.isPinned(neuron));
      await this.refreshHighlights();
    } catch (error) {
      if ((error as Error).name === 'AbortError') return;
      this.toast(`neuron detail failed: ${describe(error)}`);
    }
  }

  leaveNeuron(neuron: NeuronRef): void {
    if (sameNeuron(this.state.hoveredNeuron, neuron)) {
      this.state.hoveredNeuron = null;
    }
    void this.refreshHighlights();
    if (this.state.pinnedNeurons.length === 0) {
      this.detailPanel.clear();
    }
  }

  isPinned(neuron: NeuronRef): boolean {
    return this.state.pinnedNeurons.some((p) => sameNeuron(p, neuron));
  }

  async togglePin(neuron: NeuronRef): Promise<void> {
    if (!this.inGraph(neuron)) return;
    if (this.isPinned(neuron)) {
      this.state.pinnedNeurons = this.state.pinnedNeurons.filter((p) => !sameNeuron(p, neuron));
      this.graphView.setPinned(neuron, false);
    } else {
      this.state.pinnedNeurons = [...this.state.pinnedNeurons, neuron];
      this.graphView.setPinned(neuron, true);
    }
    await this.refreshHighlights();
  }

  /** Highlight the union of incoming edges of hovered + pinned neurons.
   * Epoch-guarded: a refresh that was superseded while awaiting details
   * must not overwrite the newer highlight state.
   */
  private async refreshHighlights(): Promise<void> {
    const epoch = ++this.highlightEpoch;
    const targets: NeuronRef[] = [...this.state.pinnedNeurons];
    if (this.state.hoveredNeuron && !this.isPinned(this.state.hoveredNeuron)) {
      targets.push(this.state.hoveredNeuron);
    }
    if (targets.length === 0) {
      this.graphView.clearEdges();
      return;
    }
    try {
      const details = await Promise.all(targets.map((t) => this.detail(t)));
      if (epoch !== this.highlightEpoch) return;
      this.graphView.highlightEdges(details.flatMap((d) => d.incomingEdges));
    } catch (error) {
      if ((error as Error).name === 'AbortError') return;
      this.toast(`edge highlight failed: ${describe(error)}`);
    }
  }

  toggleEdit(neuron: NeuronRef): void {
    if (!this.inGraph(neuron)) return;
    const present = this.state.pendingEditSet.some((p) => sameNeuron(p, neuron));
    if (present) {
      this.state.pendingEditSet = this.state.pendingEditSet.filter((p) => !sameNeuron(p, neuron));
    } else {
      this.state.pendingEditSet = [...this.state.pendingEditSet, neuron];
    }
    this.graphView.setSelected(neuron, !present);
    this.editTray.setPending(this.state.pendingEditSet);
  }

  async evaluateEdits(): Promise<void> {
    if (!this.state.resultKey || this.state.pendingEditSet.length === 0) return;
    this.editTray.setBusy('evaluating masked model…');
    try {
      const report = await this.api.evaluateEdits(this.state.resultKey, this.state.pendingEditSet);
      this.state.lastEditReport = report;
      this.editTray.setPending(this.state.pendingEditSet);
      this.editTray.showReport(report);
      this.graphView.recolorFromDiff(report.graphDiff);
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        this.editTray.setError(`invalid edit: ${error.message}`);
      } else {
        this.editTray.setError(`evaluation failed: ${describe(error)}`);
        this.toast(`evaluation failed: ${describe(error)}`);
      }
    }
  }

  toast(message: string): void {
    const el = document.createElement('div');
    el.className = 'toast';
    el.textContent = message;
    this.toasts.appendChild(el);
    setTimeout(() => el.remove(), 4000);
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.status} ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}
