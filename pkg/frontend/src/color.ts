/** Node color scale: blue (0) -> purple (0.5) -> orange (1).
 *
 * Style guide: suppressed neurons live on the blue half, shared neurons sit
 * exactly at purple, emphasized neurons on the orange half; within a group
 * the most vulnerable neuron is nearest 0.5 (purple side). These hues are an
 * implementation choice; only the blue/purple/orange identity is fixed.
 */

const BLUE: [number, number, number] = [43, 91, 214];
const PURPLE: [number, number, number] = [137, 74, 184];
const ORANGE: [number, number, number] = [240, 140, 33];

function lerp(a: [number, number, number], b: [number, number, number], t: number): string {
  const c = a.map((v, i) => Math.round(v + (b[i] - v) * t));
  return `rgb(${c[0]}, ${c[1]}, ${c[2]})`;
}

export function groupColor(scalar: number): string {
  const t = Math.min(Math.max(scalar, 0), 1);
  if (t <= 0.5) {
    return lerp(BLUE, PURPLE, t * 2);
  }
  return lerp(PURPLE, ORANGE, (t - 0.5) * 2);
}

/** Base color for a group name (used when recoloring from a graph diff). */
export function baseGroupColor(group: string | null): string {
  if (group === 'suppressed') return groupColor(0);
  if (group === 'shared') return groupColor(0.5);
  if (group === 'emphasized') return groupColor(1);
  return 'rgb(153, 153, 153)';
}

export const PROVENANCE_COLOR: Record<string, string> = {
  'both': 'rgb(137, 74, 184)',
  'benign-only': 'rgb(43, 91, 214)',
  'attacked-only': 'rgb(240, 140, 33)',
};
