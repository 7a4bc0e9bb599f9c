/** Control panel: class pair, attack method, strength (snapped to the sweep),
 * and graph size parameters. Strength options are the precomputed sweep
 * values only; there is no interpolation between them.
 */

import type { ClassInfo } from './types';

export const SWEEP_STRENGTHS = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5];

export interface ControlValues {
  benignClass: number;
  targetClass: number;
  method: string;
  strength: number;
  k: number;
  m: number;
}

export class Controls {
  private benignSel: HTMLSelectElement;
  private targetSel: HTMLSelectElement;
  private methodSel: HTMLSelectElement;
  private strengthSel: HTMLSelectElement;
  private kInput: HTMLInputElement;
  private mInput: HTMLInputElement;
  private generateBtn: HTMLButtonElement;
  private progress: HTMLElement;

  constructor(private container: HTMLElement, onGenerate: () => void) {
    this.container.classList.add('controls');

    this.benignSel = document.createElement('select');
    this.benignSel.className = 'benign-class';
    this.targetSel = document.createElement('select');
    this.targetSel.className = 'target-class';
    this.methodSel = document.createElement('select');
    this.methodSel.className = 'method';
    for (const method of ['FGM_L2', 'FGM_LINF']) {
      const option = document.createElement('option');
      option.value = method;
      option.textContent = method;
      this.methodSel.appendChild(option);
    }
    this.strengthSel = document.createElement('select');
    this.strengthSel.className = 'strength';
    for (const strength of SWEEP_STRENGTHS) {
      const option = document.createElement('option');
      option.value = String(strength);
      option.textContent = String(strength);
      this.strengthSel.appendChild(option);
    }
    this.strengthSel.value = String(SWEEP_STRENGTHS[SWEEP_STRENGTHS.length - 1]);

    this.kInput = document.createElement('input');
    this.kInput.type = 'number';
    this.kInput.min = '1';
    this.kInput.value = '4';
    this.kInput.className = 'k';
    this.mInput = document.createElement('input');
    this.mInput.type = 'number';
    this.mInput.min = '1';
    this.mInput.value = '3';
    this.mInput.className = 'm';

    this.generateBtn = document.createElement('button');
    this.generateBtn.className = 'generate';
    this.generateBtn.textContent = 'Generate graph';
    this.generateBtn.addEventListener('click', onGenerate);

    this.progress = document.createElement('span');
    this.progress.className = 'job-progress';

    const field = (label: string, el: HTMLElement) => {
      const wrap = document.createElement('label');
      wrap.textContent = label + ' ';
      wrap.appendChild(el);
      return wrap;
    };
    this.container.append(
      field('benign', this.benignSel),
      field('target', this.targetSel),
      field('attack', this.methodSel),
      field('strength', this.strengthSel),
      field('k', this.kInput),
      field('m', this.mInput),
      this.generateBtn,
      this.progress,
    );
  }

  setClasses(classes: ClassInfo[]): void {
    for (const select of [this.benignSel, this.targetSel]) {
      select.replaceChildren();
      for (const cls of classes) {
        const option = document.createElement('option');
        option.value = String(cls.index);
        option.textContent = `${cls.index}: ${cls.name}`;
        select.appendChild(option);
      }
    }
    this.benignSel.value = '0';
    this.targetSel.value = classes.length > 1 ? '1' : '0';
  }

  values(): ControlValues {
    return {
      benignClass: Number(this.benignSel.value),
      targetClass: Number(this.targetSel.value),
      method: this.methodSel.value,
      strength: Number(this.strengthSel.value),
      k: Number(this.kInput.value),
      m: Number(this.mInput.value),
    };
  }

  setBusy(busy: boolean, message = ''): void {
    this.generateBtn.disabled = busy;
    this.progress.textContent = message;
  }
}
